"""Graph Laplacian, its continuum counterpart, and small-bandwidth predictors.

Conventions (flat domains, Gaussian kernel, bandwidth ``t``)::

    L_{n,t} f(x) = 1 / (n t^{d/2+1}) * sum_j exp(-|x - X_j|^2 / t) (f(x) - f(X_j))
    L_t f(x)     = 1 / t^{d/2+1} * int exp(-|x - y|^2 / t) (f(x) - f(y)) p(y) dy

The continuum integral is computed in the rescaled variable ``z = (y - x) / sqrt(t)``,
where the weight is ``exp(-|z|^2)`` and the integrand is O(1) for every ``t``.
"""

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from kinklap._parallel import block_ranges, exact_sum, map_ordered
from kinklap.geometry import (
    FullSector, GeometryError, HalfSpaceSector, OrthantSector, PredicateSector,
    _scan_segments, classify, sector_at,
)
from kinklap.quadrature import integrate_region
from kinklap.sampling import UniformDensity
from kinklap.sectors import closed_form_moments, mixed_moment, monte_carlo_moments
from kinklap.specfun import half_gamma_constant, localization_tail_bound

REPORT_HEADER = ("t", "L_nt", "L_t", "sqrt_t_L_nt", "sqrt_t_L_t", "predictor",
                 "sqrt_t_predictor", "stderr", "quad_err", "trunc_bound")

DEFAULT_ETA = 0.3
# Gaussian cutoff for the untruncated integral; exp(-49) is below double resolution
GAUSS_CUTOFF = 7.0


@dataclass(frozen=True)
class KernelParams:
    t: float
    eta: float = DEFAULT_ETA

    def __post_init__(self):
        if not 0.0 < self.t < 1.0:
            raise ValueError(f"bandwidth t must lie in (0, 1), got {self.t}")
        if not 0.0 < self.eta < 0.5:
            raise ValueError(f"eta must lie in (0, 1/2), got {self.eta}")


@dataclass(frozen=True)
class Estimate:
    value: float
    error: float

    def __float__(self):
        return self.value


def _check_mode(domain, mode):
    mode = mode or getattr(domain, "distance_mode", "intrinsic")
    if mode not in ("intrinsic", "extrinsic"):
        raise GeometryError(f"unknown distance mode {mode!r}")
    if mode == "intrinsic" and domain is not None and not domain.convex:
        raise GeometryError("unsupported: intrinsic distance on a non-convex domain; "
                            "use extrinsic mode")
    return mode


# ---------------------------------------------------------------------------
# Discrete operator
# ---------------------------------------------------------------------------

def graph_laplacian(samples, f, x, t, mode="intrinsic", domain=None):
    """Point evaluation of the graph Laplacian with CLT standard error.

    The sample is streamed in fixed blocks; per-block sums are exactly rounded
    and then combined exactly, so the result does not depend on worker count.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    pts = samples.points
    n, d = pts.shape
    x = np.asarray(x, dtype=float)
    if x.shape != (d,):
        raise ValueError(f"x must have dimension {d}")
    if n == 0:
        raise ValueError("sample set is empty")
    if domain is not None:
        _check_mode(domain, mode)
    fx = float(f.value(x[None, :])[0])

    def block(bounds):
        start, stop = bounds
        chunk = pts[start:stop]
        diff = chunk - x
        weight = np.exp(-np.einsum("ij,ij->i", diff, diff) / t)
        terms = weight * (fx - f.value(chunk))
        return math.fsum(terms), math.fsum(terms * terms)

    partials = np.array(map_ordered(block, block_ranges(n)))
    total, total_sq = exact_sum(partials)
    scale = t ** (0.5 * d + 1.0)
    mean = total / n
    var = max(total_sq / n - mean * mean, 0.0) * n / (n - 1) if n > 1 else 0.0
    return Estimate(mean / scale, math.sqrt(var / n) / scale)


# ---------------------------------------------------------------------------
# Regions in rescaled coordinates
# ---------------------------------------------------------------------------

def _ball_clip(lo, hi, other, radius):
    rest = np.einsum("ij,ij->i", other, other)
    half = np.sqrt(np.maximum(radius * radius - rest, 0.0))[:, None]
    inside = (rest < radius * radius)[:, None]
    lo = np.where(inside, np.maximum(lo, -half), 0.0)
    hi = np.where(inside, np.minimum(hi, half), 0.0)
    return lo, hi


def _domain_region(domain, x, root_t, radius):
    """Segments and bounding box of ``(domain - x) / sqrt(t)`` within ``|z| <= radius``."""
    d = domain.dim
    lo_box, hi_box = domain.bounding_box()
    z_lo = np.maximum((np.asarray(lo_box) - x) / root_t, -radius)
    z_hi = np.minimum((np.asarray(hi_box) - x) / root_t, radius)
    axis = domain.quadrature_axis(x)
    x_other = np.delete(x, axis)

    def segments(other, ax):
        lo, hi = domain.segments(x_other + root_t * other, ax)
        lo = (lo - x[ax]) / root_t
        hi = (hi - x[ax]) / root_t
        return _ball_clip(lo, hi, other, radius)

    return segments, z_lo, z_hi, axis


def _cone_region(sector, radius):
    d = sector.dim
    if isinstance(sector, PredicateSector):
        def member(z):
            norms = np.linalg.norm(z, axis=1)
            out = norms == 0
            nz = ~out
            if nz.any():
                out[nz] = sector.contains(z[nz])
            return out

        def segments(other, ax):
            lo, hi = _scan_segments(member, other, ax, -radius, radius)
            return _ball_clip(lo, hi, other, radius)
    else:
        normals = sector.linear_constraints()

        def segments(other, ax):
            m = len(other)
            lo = np.full(m, -radius)
            hi = np.full(m, radius)
            for nrm in normals:
                slope = nrm[ax]
                offset = np.delete(nrm, ax) @ other.T if d > 1 else np.zeros(m)
                # slope * s + offset >= 0
                if slope > 0:
                    lo = np.maximum(lo, -offset / slope)
                elif slope < 0:
                    hi = np.minimum(hi, -offset / slope)
                else:
                    bad = offset < 0
                    hi = np.where(bad, lo, hi)
            return _ball_clip(lo[:, None], hi[:, None], other, radius)
    box = np.full(d, radius)
    return segments, -box, box, d - 1


def _rescaled_integrand(f, density, x, root_t):
    fx = float(f.value(x[None, :])[0])

    def integrand(z):
        y = x + root_t * z
        weight = np.exp(-np.einsum("ij,ij->i", z, z))
        return weight * (fx - f.value(y)) * density.value(y)

    return integrand


def _integrate_operator(segments, z_lo, z_hi, axis, integrand, t, tol, max_cells):
    res = integrate_region(integrand, segments, z_lo, z_hi, axis, rtol=tol,
                           atol=1e-15, max_cells=max_cells)
    return res.value / t, res.error / t


def field_l1_norm(domain, density, f, rtol=1e-4):
    """``int |f| p`` over the domain, used by the localization bound."""
    lo, hi = domain.bounding_box()
    res = integrate_region(lambda y: np.abs(f.value(y)) * density.value(y), domain.segments,
                           lo, hi, axis=domain.quadrature_axis(None), rtol=rtol,
                           max_cells=200_000)
    return res.value + res.error


def total_mass(domain, density, rtol=1e-5):
    """``int p`` over the domain; an upper estimate when computed by quadrature."""
    if isinstance(density, UniformDensity):
        return domain.volume / density.volume
    lo, hi = domain.bounding_box()
    res = integrate_region(density.value, domain.segments, lo, hi,
                           axis=domain.quadrature_axis(None), rtol=rtol, max_cells=50_000)
    return res.value + res.error


def gauss_operator(domain, density, f, x, params, tol=1e-8, mode=None, max_cells=60_000,
                   l1_norm=None):
    """Continuum operator ``L_t f(x)`` over the whole domain.

    The Gaussian is integrated out to ``|z| <= 7``; the neglected tail is
    bounded in closed form and added to the reported error together with
    the cubature error estimate.
    """
    _check_mode(domain, mode)
    x = np.asarray(x, dtype=float)
    t = params.t
    root_t = math.sqrt(t)
    segments, z_lo, z_hi, axis = _domain_region(domain, x, root_t, GAUSS_CUTOFF)
    integrand = _rescaled_integrand(f, density, x, root_t)
    value, err = _integrate_operator(segments, z_lo, z_hi, axis, integrand, t, tol, max_cells)
    if l1_norm is None:
        l1_norm = field_l1_norm(domain, density, f)
    fx = abs(float(f.value(x[None, :])[0]))
    tail = (fx + l1_norm) * t ** (-0.5 * domain.dim - 1.0) * math.exp(-GAUSS_CUTOFF ** 2)
    return Estimate(value, err + tail)


def localized_operator(domain, density, f, x, params, tol=1e-6, mode=None, max_cells=60_000):
    """The integral restricted to ``|y - x| <= t**eta`` (no tail added back)."""
    _check_mode(domain, mode)
    x = np.asarray(x, dtype=float)
    t = params.t
    root_t = math.sqrt(t)
    radius = min(t ** (params.eta - 0.5), GAUSS_CUTOFF)
    segments, z_lo, z_hi, axis = _domain_region(domain, x, root_t, radius)
    integrand = _rescaled_integrand(f, density, x, root_t)
    value, err = _integrate_operator(segments, z_lo, z_hi, axis, integrand, t, tol, max_cells)
    return Estimate(value, err)


def euclidean_cone_operator(cone, density, f, t, eta=DEFAULT_ETA, tol=1e-6, max_cells=60_000):
    """``(1/t) int_{B_{t^eta} ∩ C} exp(-|y|^2/t) (f(0) - f(y)) p(y) dy`` at the cone apex."""
    params = KernelParams(t, eta)
    d = cone.dim
    radius = min(params.t ** (params.eta - 0.5), GAUSS_CUTOFF)
    segments, z_lo, z_hi, axis = _cone_region(cone, radius)
    integrand = _rescaled_integrand(f, density, np.zeros(d), math.sqrt(t))
    value, err = _integrate_operator(segments, z_lo, z_hi, axis, integrand, t, tol, max_cells)
    return Estimate(value, err)


# ---------------------------------------------------------------------------
# Predictors
# ---------------------------------------------------------------------------

def asymptotic_predictor(moments, p_at_x, grad_p, grad_f, hess_f, t, d=None):
    """Two-term small-``t`` expansion of ``L_t f(x)`` from the sector moments.

    ``-(c_d / sqrt t) p grad_f.v - c_{d+1} (p <Hess f, M> / 2 + grad_f^T M grad_p)``
    """
    d = d or moments.dim
    grad_f = np.asarray(grad_f, dtype=float)
    grad_p = np.asarray(grad_p, dtype=float)
    hess_f = np.asarray(hess_f, dtype=float)
    M = moments.second_moment
    leading = half_gamma_constant(d) / math.sqrt(t) * p_at_x * float(grad_f @ moments.first_moment)
    second = half_gamma_constant(d + 1) * (0.5 * p_at_x * float(np.sum(hess_f * M))
                                           + float(grad_f @ M @ grad_p))
    return -(leading + second)


def higher_order_predictor(sector, f_derivs, p_derivs, t, d=None, order=3, samples=1_000_000,
                           seed=0, max_total=None):
    """Expansion to derivative order ``order + 1`` in ``f`` and ``order`` in ``p``.

    Sums ``-t^{(i+j)/2 - 1} c_{d+i+j-1} / (i! j!) * mixed_moment(i, j)`` over
    ``1 <= i <= order+1`` and ``0 <= j <= order``; ``max_total`` optionally
    keeps only terms with ``i + j <= max_total``.
    """
    d = d or sector.dim
    if not 2 <= order <= 3:
        raise ValueError("order must be 2 or 3")
    total = 0.0
    for i in range(1, order + 2):
        for j in range(order + 1):
            if max_total is not None and i + j > max_total:
                continue
            moment = mixed_moment(sector, i, j, f_derivs, p_derivs, d, samples=samples, seed=seed)
            coef = half_gamma_constant(d + i + j - 1) / (math.factorial(i) * math.factorial(j))
            total += t ** (0.5 * (i + j) - 1.0) * coef * moment
    return -total


def sector_moments_at(domain, x, samples=1_000_000, seed=0, tol=1e-6):
    """Classify ``x`` and return ``(classification, sector, moments)``."""
    cls = classify(domain, x, tol)
    sector = sector_at(domain, cls)
    if isinstance(sector, (FullSector, HalfSpaceSector, OrthantSector)):
        moments = closed_form_moments(sector)
    else:
        moments = monte_carlo_moments(sector, samples=samples, seed=seed)
    return cls, sector, moments


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OperatorReport:
    x: tuple
    t: float
    predictor: float
    discrete: Optional[Estimate] = None
    continuum: Optional[Estimate] = None
    predictor_order: int = 2
    trunc_bound: float = 0.0
    eta: float = DEFAULT_ETA
    distance_mode: str = "intrinsic"
    notes: tuple = field(default=())

    @property
    def root_t(self):
        return math.sqrt(self.t)

    def row(self):
        nan = math.nan
        s = self.root_t
        l_nt = self.discrete.value if self.discrete else nan
        l_t = self.continuum.value if self.continuum else nan
        return (self.t, l_nt, l_t, s * l_nt, s * l_t, self.predictor, s * self.predictor,
                self.discrete.error if self.discrete else nan,
                self.continuum.error if self.continuum else nan,
                self.trunc_bound)


def format_value(v):
    return repr(float(v))


def reports_to_csv(reports, handle=None):
    """Serialize report rows; returns the text when ``handle`` is None."""
    own = handle is None
    handle = io.StringIO() if own else handle
    writer = csv.writer(handle, lineterminator="\n")
    writer.writerow(REPORT_HEADER)
    for rep in reports:
        writer.writerow([format_value(v) for v in rep.row()])
    return handle.getvalue() if own else None


def evaluate_point(domain, density, f, x, t, eta=DEFAULT_ETA, samples=None, modes=("all",),
                   tol=1e-8, mode=None, l1_norm=None, mc_samples=1_000_000, seed=0):
    """One report row: any of discrete, continuum and predictor at ``(x, t)``."""
    modes = set(modes)
    want = (lambda name: "all" in modes or name in modes)
    params = KernelParams(t, eta)
    x = np.asarray(x, dtype=float)
    mode = _check_mode(domain, mode)
    d = domain.dim
    discrete = continuum = None
    if l1_norm is None:
        l1_norm = field_l1_norm(domain, density, f)
    if want("discrete"):
        if samples is None:
            raise ValueError("discrete mode needs a sample set")
        discrete = graph_laplacian(samples, f, x, t, mode, domain)
    if want("continuum"):
        continuum = gauss_operator(domain, density, f, x, params, tol, mode, l1_norm=l1_norm)
    _, _, moments = sector_moments_at(domain, x, samples=mc_samples, seed=seed)
    p_derivs = density.derivatives(x, 1)
    f_derivs = f.derivatives(x, 2)
    predictor = asymptotic_predictor(moments, p_derivs[0], p_derivs[1], f_derivs[1],
                                     f_derivs[2], t, d)
    fx = float(f.value(x[None, :])[0])
    bound = localization_tail_bound(fx, total_mass(domain, density), l1_norm, t, eta, d)
    return OperatorReport(tuple(float(v) for v in x), float(t), predictor, discrete, continuum,
                          2, bound, eta, mode)
