"""Moments of unit-sphere sectors: measure, first moment and second-moment matrix.

Closed forms rest on one identity.  For a cone ``C`` and a homogeneous
monomial of degree ``m``,

    int_{S ∩ C} theta^alpha dsigma = int_C y^alpha exp(-|y|^2) dy / (Gamma((m+d)/2) / 2),

and for orthants (in an orthonormal frame adapted to the normals) the Gaussian
integral factorizes into one-dimensional half-line or full-line integrals.
That gives every moment tensor of Full, HalfSpace and Orthant sectors exactly.
"""

import math
from dataclasses import dataclass

import numpy as np

from kinklap._parallel import block_ranges, block_rng, exact_sum, map_ordered
from kinklap.geometry import FullSector, HalfSpaceSector, OrthantSector, PredicateSector
from kinklap.specfun import sphere_area


class NoClosedForm(ValueError):
    """Raised for sectors whose moments are only available by Monte Carlo."""


@dataclass(frozen=True)
class MomentError:
    measure: float
    first_moment: np.ndarray
    second_moment: np.ndarray


@dataclass(frozen=True)
class SectorMoments:
    measure: float
    first_moment: np.ndarray
    second_moment: np.ndarray
    stderr: MomentError
    source: str = "closed_form"
    samples: int = 0
    seed: int | None = None
    degenerate: bool = False

    @property
    def dim(self):
        return len(self.first_moment)

    def as_rows(self):
        """Flat ``(quantity, index, value, stderr)`` rows for CSV output."""
        rows = [("measure", "", self.measure, self.stderr.measure)]
        for i, (v, e) in enumerate(zip(self.first_moment, self.stderr.first_moment)):
            rows.append(("first_moment", str(i), float(v), float(e)))
        d = self.dim
        for i in range(d):
            for j in range(d):
                rows.append(("second_moment", f"{i}{j}" if d < 10 else f"{i}_{j}",
                             float(self.second_moment[i, j]), float(self.stderr.second_moment[i, j])))
        return rows


def _sector_dim(sector, d):
    own = sector.dim
    if d is not None and d != own:
        raise ValueError(f"sector has dimension {own}, got d={d}")
    return own


def _frame(sector):
    """Orthonormal frame whose first ``k`` rows are the sector's inward normals."""
    if isinstance(sector, FullSector):
        return np.eye(sector.dim), 0
    if isinstance(sector, HalfSpaceSector):
        normals = np.asarray(sector.nu, dtype=float)[None, :]
    elif isinstance(sector, OrthantSector):
        normals = np.asarray(sector.normals, dtype=float)
    else:
        raise NoClosedForm(f"{type(sector).__name__} has no closed-form moments; "
                           "use monte_carlo_moments")
    k, d = normals.shape
    gram = normals @ normals.T
    if not np.allclose(gram, np.eye(k), atol=1e-12):
        raise NoClosedForm("orthant normals must be orthonormal for closed forms")
    # complete the frame: null space of the normals
    _, _, vt = np.linalg.svd(normals, full_matrices=True)
    frame = np.vstack([normals, vt[k:]])
    return frame, k


def _line_moment(power, half_line):
    # int over [0, inf) or R of z^power exp(-z^2) dz
    if half_line:
        return 0.5 * math.gamma(0.5 * (power + 1))
    return 0.0 if power % 2 else math.gamma(0.5 * (power + 1))


def moment_tensor(sector, order, d=None):
    """Exact tensor ``int_{S ∩ C} theta^{⊗ order} dsigma`` for closed-form sectors."""
    d = _sector_dim(sector, d)
    frame, k = _frame(sector)
    if order < 0:
        raise ValueError("order must be nonnegative")
    norm = 0.5 * math.gamma(0.5 * (order + d))
    table = np.array([[_line_moment(p, c < k) for p in range(order + 1)] for c in range(d)])
    if order == 0:
        return np.array(np.prod(table[:, 0]) / norm)
    # tensor in frame coordinates: product over coordinates of 1D moments
    idx = np.indices((d,) * order).reshape(order, -1)
    counts = np.stack([(idx == c).sum(axis=0) for c in range(d)])
    values = np.prod(table[np.arange(d)[:, None], counts], axis=0) / norm
    tensor = values.reshape((d,) * order)
    # rotate every leg back to ambient coordinates
    for _ in range(order):
        tensor = np.tensordot(tensor, frame, axes=([0], [0]))
    return tensor


def closed_form_moments(sector, d=None):
    """Exact measure, first moment and second-moment matrix."""
    d = _sector_dim(sector, d)
    measure = float(moment_tensor(sector, 0, d))
    first = moment_tensor(sector, 1, d)
    second = moment_tensor(sector, 2, d)
    second = 0.5 * (second + second.T)
    zero = MomentError(0.0, np.zeros(d), np.zeros((d, d)))
    return SectorMoments(measure, first, second, zero)


def _mc_block(sector, d, seed, stream):
    def run(bounds):
        start, stop = bounds
        rng = block_rng(seed, start, stream)
        theta = rng.standard_normal((stop - start, d))
        theta /= np.linalg.norm(theta, axis=1, keepdims=True)
        keep = np.asarray(sector.contains(theta), dtype=bool)
        sel = theta[keep]
        outer = (sel[:, :, None] * sel[:, None, :]).reshape(len(sel), d * d)
        return np.concatenate([
            [keep.sum()],
            sel.sum(axis=0), (sel * sel).sum(axis=0),
            outer.sum(axis=0), (outer * outer).sum(axis=0),
        ])
    return run


def monte_carlo_moments(sector, d=None, samples=1_000_000, seed=0, stream=0):
    """Seeded Monte Carlo estimate of the sector moments.

    Uniform directions come from normalized Gaussian vectors.  Results depend
    only on ``(seed, samples, stream)``, never on the worker count.
    """
    d = _sector_dim(sector, d)
    if samples < 1000:
        raise ValueError("need at least 1000 samples")
    partials = map_ordered(_mc_block(sector, d, seed, stream), block_ranges(samples))
    totals = exact_sum(np.stack(partials))
    count = totals[0]
    s1, s1sq = totals[1:1 + d], totals[1 + d:1 + 2 * d]
    s2 = totals[1 + 2 * d:1 + 2 * d + d * d].reshape(d, d)
    s2sq = totals[1 + 2 * d + d * d:].reshape(d, d)
    area = sphere_area(d)
    n = float(samples)
    if count == 0:
        zero = MomentError(0.0, np.zeros(d), np.zeros((d, d)))
        return SectorMoments(0.0, np.zeros(d), np.zeros((d, d)), zero, "monte_carlo",
                             samples, seed, degenerate=True)

    def mean_and_err(total, total_sq):
        mean = total / n
        var = np.maximum(total_sq / n - mean * mean, 0.0)
        return area * mean, area * np.sqrt(var / (n - 1))

    measure, measure_err = mean_and_err(count, count)
    first, first_err = mean_and_err(s1, s1sq)
    second, second_err = mean_and_err(s2, s2sq)
    err = MomentError(float(measure_err), first_err, second_err)
    return SectorMoments(float(measure), first, second, err, "monte_carlo", samples, seed)


def _as_tensor(value, order, d, label):
    arr = np.asarray(value, dtype=float)
    if arr.shape != (d,) * order:
        raise ValueError(f"{label} of order {order} must have shape {(d,) * order}, got {arr.shape}")
    return arr


def _derivative(derivs, order, d, label):
    try:
        value = derivs[order]
    except (KeyError, IndexError):
        raise ValueError(f"missing {label} derivative of order {order}") from None
    if value is None:
        raise ValueError(f"missing {label} derivative of order {order}")
    return _as_tensor(value, order, d, label)


def _eval_form(tensor, theta):
    # tensor(theta, ..., theta) for each row of theta
    out = np.broadcast_to(tensor, (len(theta),) + tensor.shape)
    for _ in range(tensor.ndim):
        out = np.einsum("n...i,ni->n...", out, theta)
    return out


def mixed_moment(sector, i, j, f_derivs, p_derivs, d=None, samples=1_000_000, seed=0):
    """``int_{S ∩ C} D^i f(theta, ..) D^j p(theta, ..) dsigma``.

    ``f_derivs[m]`` and ``p_derivs[m]`` are the order-``m`` derivative tensors
    (``p_derivs[0]`` is the value of ``p``).  Closed-form sectors contract
    against exact moment tensors; predicate sectors fall back to Monte Carlo.
    """
    d = _sector_dim(sector, d)
    if not (1 <= i <= 4 and 0 <= j <= 3):
        raise ValueError(f"orders must satisfy 1 <= i <= 4 and 0 <= j <= 3, got ({i}, {j})")
    f_tensor = _derivative(f_derivs, i, d, "f")
    p_tensor = _derivative(p_derivs, j, d, "p")
    if isinstance(sector, PredicateSector):
        return _mixed_moment_mc(sector, d, f_tensor, p_tensor, samples, seed)
    moments = moment_tensor(sector, i + j, d)
    partial = np.tensordot(moments, f_tensor, axes=(list(range(i)), list(range(i))))
    return float(np.tensordot(partial, p_tensor, axes=j))


def _mixed_moment_mc(sector, d, f_tensor, p_tensor, samples, seed):
    def run(bounds):
        start, stop = bounds
        rng = block_rng(seed, start, stream=7)
        theta = rng.standard_normal((stop - start, d))
        theta /= np.linalg.norm(theta, axis=1, keepdims=True)
        sel = theta[np.asarray(sector.contains(theta), dtype=bool)]
        if not len(sel):
            return 0.0
        return float(np.sum(_eval_form(f_tensor, sel) * _eval_form(p_tensor, sel)))

    total = exact_sum(map_ordered(run, block_ranges(samples)))
    return sphere_area(d) * total / samples
