"""Bandwidth-schedule conditions and empirical deviation experiments.

A schedule ``t_n`` drives ``L_{n,t_n}`` to the continuum value in probability
when ``sqrt(n) t_n^{d/2+1} -> inf``, and almost surely when that quantity
raised to ``alpha`` outgrows ``ln n``; ``alpha`` is the tail exponent of
``f(X)`` in ``P(|Z| >= eps) <= K exp(-C eps^alpha)``.
"""

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from kinklap.operators import KernelParams, gauss_operator, graph_laplacian
from kinklap.sampling import UniformDensity, rejection_sample, sample_uniform

ALPHA_GRID = tuple(0.25 * k for k in range(1, 9))
DEVIATION_HEADER = ("n", "t_n", "condition1", "condition2", "alpha", "q50", "q90", "q99",
                    "envelope_scale")
_BOUNDARY_TOL = 1e-12


@dataclass(frozen=True)
class TailProfile:
    alpha: float
    K: float
    C: float
    note: str = ""

    def __post_init__(self):
        if not 0.0 < self.alpha <= 2.0:
            raise ValueError(f"alpha must lie in (0, 2], got {self.alpha}")
        if self.K <= 0 or self.C <= 0:
            raise ValueError("K and C must be positive")


@dataclass(frozen=True)
class PowerLaw:
    """``t_n = c0 * n**(-beta)`` in dimension ``d``."""
    c0: float
    beta: float
    d: int = 3

    def __post_init__(self):
        if self.c0 <= 0 or self.beta <= 0:
            raise ValueError("c0 and beta must be positive")

    def t(self, n):
        return self.c0 * float(n) ** (-self.beta)


@dataclass(frozen=True)
class Explicit:
    """Tabulated ``(n, t_n)`` pairs in dimension ``d``."""
    ns: tuple
    ts: tuple
    d: int = 3

    def __post_init__(self):
        ns, ts = np.asarray(self.ns, float), np.asarray(self.ts, float)
        if ns.shape != ts.shape or ns.size < 2:
            raise ValueError("need at least two matching (n, t_n) pairs")
        if np.any(np.diff(ns) <= 0):
            raise ValueError("n values must increase")
        if np.any(np.diff(ts) >= 0):
            raise ValueError("t_n must decrease in n")
        if np.any((ts <= 0) | (ts >= 1)):
            raise ValueError("t_n must lie in (0, 1)")

    def t(self, n):
        lookup = dict(zip(self.ns, self.ts))
        if n not in lookup:
            raise KeyError(f"n={n} is not in the explicit schedule")
        return float(lookup[n])

    def as_power_law(self, tol=1e-9):
        """The exact power law behind the table, or None."""
        logn, logt = np.log(np.asarray(self.ns, float)), np.log(np.asarray(self.ts, float))
        slope, intercept = np.polyfit(logn, logt, 1)
        if np.max(np.abs(logt - (slope * logn + intercept))) > tol or slope >= 0:
            return None
        return PowerLaw(math.exp(intercept), -slope, self.d)


@dataclass(frozen=True)
class ConditionResult:
    status: str  # "holds", "fails" or "inconclusive"
    witness: dict = field(default_factory=dict)

    @property
    def holds(self):
        return self.status == "holds"

    def __bool__(self):
        return self.holds


def scale_factor(n, t, d):
    """``sqrt(n) * t**(d/2 + 1)``, the effective sample size of the pointwise estimator."""
    return math.sqrt(n) * t ** (0.5 * d + 1.0)


def _growth_exponent(schedule):
    return 0.5 - schedule.beta * (0.5 * schedule.d + 1.0)


def _series(schedule):
    ns = np.asarray(schedule.ns, float)
    return ns, np.array([scale_factor(n, t, schedule.d) for n, t in zip(ns, schedule.ts)])


def check_probability_condition(schedule):
    """Does ``sqrt(n) t_n^{d/2+1}`` diverge?"""
    if isinstance(schedule, Explicit):
        law = schedule.as_power_law()
        if law is not None:
            res = check_probability_condition(law)
            return ConditionResult(res.status, {**res.witness, "fitted_beta": law.beta})
        ns, g = _series(schedule)
        tail = g[len(g) // 2:]
        witness = {"first": float(g[0]), "last": float(g[-1]), "values": tuple(map(float, g))}
        if np.all(np.diff(tail) > 0) and g[-1] > g[0]:
            return ConditionResult("holds", witness)
        if np.all(np.diff(tail) <= 0):
            return ConditionResult("fails", witness)
        return ConditionResult("inconclusive", witness)
    exponent = _growth_exponent(schedule)
    status = "holds" if exponent > _BOUNDARY_TOL else "fails"
    return ConditionResult(status, {"growth_exponent": exponent})


def check_as_condition(schedule, alpha):
    """Does ``(sqrt(n) t_n^{d/2+1})^alpha / ln n`` diverge?"""
    if not 0.0 < alpha <= 2.0:
        raise ValueError(f"alpha must lie in (0, 2], got {alpha}")
    if isinstance(schedule, Explicit):
        law = schedule.as_power_law()
        if law is not None:
            res = check_as_condition(law, alpha)
            return ConditionResult(res.status, {**res.witness, "fitted_beta": law.beta})
        ns, g = _series(schedule)
        ratio = g ** alpha / np.log(ns)
        return ConditionResult("inconclusive", {
            "reason": "non-power-law schedule",
            "first": float(ratio[0]), "last": float(ratio[-1]),
            "values": tuple(map(float, ratio))})
    exponent = alpha * _growth_exponent(schedule)
    status = "holds" if exponent > _BOUNDARY_TOL else "fails"
    return ConditionResult(status, {"growth_exponent": exponent})


def _fit_alpha(excess, n_total, alphas, levels):
    """Best ``(sse, alpha, K, C)`` for ``P(excess >= eps) ~ K exp(-C eps^alpha)``.

    ``excess`` is sorted; probabilities are taken relative to ``n_total``.
    """
    # the same upper-quantile window as the two-sided fit, 0.5 .. 0.995
    eps = np.unique(np.quantile(excess, 1.0 - np.geomspace(0.5, 0.005, levels)))
    eps = eps[eps > 0]
    if eps.size < 3:
        return None
    logp = np.log((excess.size - np.searchsorted(excess, eps, side="left")) / n_total)
    best = None
    for alpha in alphas:
        x = eps ** alpha
        A = np.column_stack([np.ones_like(x), -x])
        coef, *_ = np.linalg.lstsq(A, logp, rcond=None)
        resid = float(np.sum((A @ coef - logp) ** 2))
        if coef[1] > 0 and (best is None or resid < best[0]):
            best = (resid, alpha, math.exp(coef[0]), coef[1])
    return best


def estimate_tail_alpha(observations, alphas=ALPHA_GRID, bounded=False, levels=64):
    """Fit ``P(|Z - med| >= eps) ~ K exp(-C eps^alpha)`` over the upper quantiles.

    For every candidate ``alpha`` a least-squares line of ``ln P`` against
    ``eps^alpha`` is fitted on the quantiles ``0.5 .. 0.995`` of the
    deviations from the median, and the candidate with the smallest residual
    wins.  When one side of the distribution reaches much further than the
    other (say an exponential), only that side is fitted, since the short side
    would bend the curve.  Centring at the median makes the result
    translation invariant.  ``bounded=True`` short-circuits to the
    subgaussian class.
    """
    z = np.asarray(observations, dtype=float).ravel()
    if z.size < 1000:
        raise ValueError("need at least 1000 observations")
    if np.ptp(z) == 0:
        return TailProfile(2.0, 1.0, math.inf, "degenerate: constant observations")
    centred = z - np.median(z)
    if bounded:
        return TailProfile(2.0, 1.0, 1.0 / np.abs(centred).max() ** 2, "bounded => subgaussian")
    upper = np.sort(centred[centred > 0])
    lower = np.sort(-centred[centred < 0])
    reach_up = np.quantile(upper, 0.99) if upper.size else 0.0
    reach_low = np.quantile(lower, 0.99) if lower.size else 0.0
    ratio = reach_up / reach_low if reach_low > 0 else math.inf
    if 0.8 <= ratio <= 1.25:
        best = _fit_alpha(np.sort(np.abs(centred)), z.size, alphas, levels)
        side = ""
    else:
        heavy = upper if ratio > 1 else lower
        best = _fit_alpha(heavy, z.size, alphas, levels)
        side = "upper tail" if ratio > 1 else "lower tail"
    if best is None:
        return TailProfile(max(alphas), 1.0, math.inf, "degenerate: too few distinct quantiles")
    _, alpha, K, C = best
    notes = [side] if side else []
    if alpha == max(alphas):
        notes.append("grid-capped")
    return TailProfile(float(alpha), float(K), float(C), "; ".join(notes))


def centred_summands(samples, f, x, t, continuum):
    """``exp(-|x-X|^2/t)(f(x)-f(X)) - t^{d/2+1} L_t``; mean zero in expectation."""
    pts = samples.points
    x = np.asarray(x, dtype=float)
    diff = pts - x
    weight = np.exp(-np.einsum("ij,ij->i", diff, diff) / t)
    fx = float(f.value(x[None, :])[0])
    return weight * (fx - f.value(pts)) - t ** (0.5 * pts.shape[1] + 1.0) * continuum


def trial_seed(seed, n, trial):
    return int(np.random.SeedSequence([int(seed), int(n), int(trial)]).generate_state(1, np.uint64)[0])


@dataclass
class DeviationRow:
    n: int
    t_n: float
    condition1: str
    condition2: str
    alpha: float
    q50: float
    q90: float
    q99: float
    envelope_scale: float
    deviations: np.ndarray = field(repr=False, default=None)

    def csv_fields(self):
        return (str(self.n), repr(self.t_n), self.condition1, self.condition2, repr(self.alpha),
                repr(self.q50), repr(self.q90), repr(self.q99), repr(self.envelope_scale))


@dataclass
class DeviationTable:
    rows: list
    warning: Optional[str] = None

    def to_csv(self):
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(DEVIATION_HEADER)
        for row in self.rows:
            writer.writerow(row.csv_fields())
        return out.getvalue()

    def envelope(self, eps, row, C2=1.0):
        """Normalized envelope ``exp(-C2 (scale * eps)^alpha)`` for a row (constants unknown)."""
        return np.exp(-C2 * (row.envelope_scale * np.asarray(eps, float)) ** row.alpha)


def deviation_experiment(domain, density, f, x, schedule, n_grid, trials, seed=0, alpha=None,
                         eta=0.3, envelope=None):
    """Quantiles of ``|L_{n,t_n} f(x) - L_{t_n} f(x)|`` over independent trials.

    The continuum value is computed once per ``t_n``.  A schedule that fails the
    in-probability condition still runs, with a warning attached.
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    if alpha is None:
        alpha = 2.0  # bounded domain and continuous f: f(X) is bounded
    cond1 = check_probability_condition(schedule)
    cond2 = check_as_condition(schedule, alpha)
    warning = None
    if not cond1.holds:
        warning = f"schedule {cond1.status} the in-probability condition; expect no convergence"
    d = domain.dim
    rows = []
    for n in n_grid:
        t_n = schedule.t(n)
        l_t = gauss_operator(domain, density, f, x, KernelParams(t_n, eta)).value
        devs = np.empty(trials)
        for k in range(trials):
            s = trial_seed(seed, n, k)
            if isinstance(density, UniformDensity):
                pts = sample_uniform(domain, n, s)
            else:
                pts = rejection_sample(domain, density, n, s, envelope)
            devs[k] = abs(graph_laplacian(pts, f, x, t_n).value - l_t)
        q50, q90, q99 = np.quantile(devs, [0.5, 0.9, 0.99])
        rows.append(DeviationRow(int(n), float(t_n), cond1.status, cond2.status, float(alpha),
                                 float(q50), float(q90), float(q99), scale_factor(n, t_n, d), devs))
    return DeviationTable(rows, warning)
