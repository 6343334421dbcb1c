"""Adaptive iterated Gauss-Legendre cubature over regions given by line clipping.

One coordinate (the *inner axis*) is integrated exactly over the pieces of
each axis-parallel line that lie in the region; the remaining coordinates are
covered by a tensor Gauss-Legendre rule on cells that are bisected until the
embedded error estimate meets the tolerance.  Boundary discontinuities along
the inner axis are therefore resolved exactly, and only the (much milder)
kinks of the outer integrand drive refinement.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


class QuadratureError(RuntimeError):
    """Refinement budget exhausted before the tolerance was met."""

    def __init__(self, message, estimate, error):
        super().__init__(message)
        self.estimate = estimate
        self.error = error


@dataclass(frozen=True)
class QuadResult:
    value: float
    error: float
    abs_value: float
    cells: int


@lru_cache(maxsize=None)
def _gauss_legendre(n):
    x, w = np.polynomial.legendre.leggauss(n)
    # exact mirror symmetry so symmetric integrands cancel to rounding
    x = 0.5 * (x - x[::-1])
    w = 0.5 * (w + w[::-1])
    return x, w


def _tensor_rule(order, dim):
    x, w = _gauss_legendre(order)
    if dim == 0:
        return np.zeros((1, 0)), np.ones(1)
    grids = np.meshgrid(*([x] * dim), indexing="ij")
    wgrids = np.meshgrid(*([w] * dim), indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=1)
    weights = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
    return nodes, weights


def _line_integrals(integrand, segments, other, axis, inner_lo, inner_hi, inner_order, pieces):
    """Integrate ``integrand`` along the inner axis for each row of ``other``."""
    n = other.shape[0]
    seg_lo, seg_hi = segments(other, axis)
    seg_lo = np.clip(seg_lo, inner_lo, inner_hi)
    seg_hi = np.clip(seg_hi, inner_lo, inner_hi)
    length = np.where(seg_hi > seg_lo, seg_hi - seg_lo, 0.0)
    n_seg = seg_lo.shape[1]
    x, w = _gauss_legendre(inner_order)
    # split every segment into equal pieces, each with its own rule
    frac = (np.arange(pieces) + 0.5) / pieces
    piece_mid = seg_lo[:, :, None] + length[:, :, None] * frac[None, None, :]
    half = (length / (2 * pieces))[:, :, None, None]
    s = piece_mid[:, :, :, None] + half * x[None, None, None, :]
    ww = np.broadcast_to(half * w[None, None, None, :], s.shape)
    m = n_seg * pieces * inner_order
    s = s.reshape(n, m)
    ww = ww.reshape(n, m)
    live = ww != 0.0
    rows, cols = np.nonzero(live)
    total = np.zeros(n)
    total_abs = np.zeros(n)
    if rows.size:
        pts = np.insert(other[rows], axis, s[rows, cols], axis=1)
        vals = np.asarray(integrand(pts), dtype=float)
        contrib = ww[rows, cols] * vals
        np.add.at(total, rows, contrib)
        np.add.at(total_abs, rows, np.abs(contrib))
    return total, total_abs


def integrate_region(integrand, segments, lo, hi, axis, rtol=1e-8, atol=0.0,
                     order=7, low_order=4, inner_order=16, pieces=4,
                     max_cells=50_000, initial_splits=2):
    """Integrate ``integrand`` over ``{y in [lo, hi] : y in region}``.

    Parameters
    ----------
    integrand : callable
        Maps an ``(N, d)`` array of points to ``(N,)`` values.
    segments : callable
        ``segments(other, axis) -> (lo, hi)`` arrays of shape ``(N, S)``
        giving the region's pieces on the line along ``axis`` through the
        ``(N, d-1)`` remaining coordinates.
    lo, hi : array_like
        Bounding box of the integration; the inner axis is clipped to it too.
    axis : int
        Inner axis.
    rtol, atol : float
        Stop when the summed error estimate is below
        ``max(atol, rtol * integral of |integrand|)``.

    Returns
    -------
    QuadResult
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    d = lo.size
    outer = [i for i in range(d) if i != axis]
    dm1 = d - 1
    if np.any(hi <= lo):
        return QuadResult(0.0, 0.0, 0.0, 0)

    nodes_hi, w_hi = _tensor_rule(order, dm1)
    nodes_lo, w_lo = _tensor_rule(low_order, dm1)

    def evaluate(centers, halfw):
        # bounded memory: at most ~2e5 lines per integrand call
        step = max(1, 200_000 // len(w_hi))
        if len(centers) > step:
            parts = [evaluate_chunk(centers[i:i + step], halfw[i:i + step])
                     for i in range(0, len(centers), step)]
            return tuple(np.concatenate(p) for p in zip(*parts))
        return evaluate_chunk(centers, halfw)

    def evaluate_chunk(centers, halfw):
        vols = np.prod(halfw, axis=1) if dm1 else np.ones(len(centers))
        out = []
        for nodes, weights in ((nodes_hi, w_hi), (nodes_lo, w_lo)):
            pts = centers[:, None, :] + halfw[:, None, :] * nodes[None, :, :]
            flat = pts.reshape(-1, dm1)
            line, line_abs = _line_integrals(integrand, segments, flat, axis,
                                             lo[axis], hi[axis], inner_order, pieces)
            line = line.reshape(len(centers), -1)
            line_abs = line_abs.reshape(len(centers), -1)
            out.append((vols * (line @ weights), vols * (line_abs @ weights)))
        (q_hi, a_hi), (q_lo, _) = out
        return q_hi, a_hi, np.abs(q_hi - q_lo)

    # initial uniform grid of cells
    base_lo, base_hi = lo[outer], hi[outer]
    k = 2 ** initial_splits if dm1 else 1
    edges = [np.linspace(base_lo[i], base_hi[i], k + 1) for i in range(dm1)]
    if dm1:
        mids = [0.5 * (e[1:] + e[:-1]) for e in edges]
        halves = [0.5 * (e[1:] - e[:-1]) for e in edges]
        cgrid = np.meshgrid(*mids, indexing="ij")
        hgrid = np.meshgrid(*halves, indexing="ij")
        centers = np.stack([g.ravel() for g in cgrid], axis=1)
        halfw = np.stack([g.ravel() for g in hgrid], axis=1)
    else:
        centers = np.zeros((1, 0))
        halfw = np.zeros((1, 0))

    q, a, err = evaluate(centers, halfw)
    if dm1 == 0:
        return QuadResult(float(q[0]), float(err[0]), float(a[0]), 1)

    done_q = done_a = done_err = 0.0
    n_cells = len(centers)
    child_offsets = _tensor_rule(2, dm1)[0]
    child_offsets = np.sign(child_offsets) * 0.5  # (+-1/2) corners
    while True:
        total_err = done_err + err.sum()
        total_abs = done_a + a.sum()
        target = max(atol, rtol * total_abs)
        if total_err <= target or total_abs == 0.0:
            break
        share = target / max(len(err), 1)
        split = err > share
        if n_cells + (len(child_offsets) - 1) * int(split.sum()) > max_cells:
            raise QuadratureError(
                f"cubature did not reach the tolerance within {max_cells} cells "
                f"(error {total_err:.3e} > target {target:.3e})",
                float(done_q + q.sum()), float(total_err))
        # retire converged cells
        keep = ~split
        done_q += q[keep].sum()
        done_a += a[keep].sum()
        done_err += err[keep].sum()
        c_split, h_split = centers[split], halfw[split]
        new_h = 0.5 * h_split
        centers = (c_split[:, None, :] + child_offsets[None, :, :] * h_split[:, None, :]).reshape(-1, dm1)
        halfw = np.repeat(new_h, len(child_offsets), axis=0)
        n_cells += len(centers) - len(c_split)
        q, a, err = evaluate(centers, halfw)
    value = done_q + q.sum()
    return QuadResult(float(value), float(done_err + err.sum()), float(done_a + a.sum()), n_cells)
