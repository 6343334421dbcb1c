"""Flat domains with kinks: membership, point classes, inward sectors, tangent cones.

All domains are closed regions of R^d (boundaries count as inside).  Every
domain can report the interval(s) cut out of an axis-parallel line, which is
what the quadrature in :mod:`kinklap.quadrature` integrates over.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

# Boundary detection slack, relative to the domain's feature scale.
_ON_BOUNDARY = 1e-12


class GeometryError(ValueError):
    """Invalid geometric input (wrong dimension, point outside, bad parameters)."""


class UnresolvedClassification(GeometryError):
    """The point sits between the boundary slack and the interior tolerance."""


class FluctuatingDirection(GeometryError):
    """Difference quotients along a direction oscillate instead of converging."""


def _as_points(x, d):
    pts = np.asarray(x, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if pts.shape[-1] != d:
        raise GeometryError(f"expected points of dimension {d}, got shape {np.shape(x)}")
    return pts, single


def _unit(v):
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n == 0:
        raise GeometryError("zero vector has no direction")
    return v / n


def _frozen(v):
    return tuple(float(c) for c in np.asarray(v, dtype=float))


def _frozen_rows(rows):
    return tuple(_frozen(r) for r in rows)


# ---------------------------------------------------------------------------
# Point classifications
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Interior:
    pass


@dataclass(frozen=True)
class C1Boundary:
    inner_normal: tuple


@dataclass(frozen=True)
class CornerDepthK:
    k: int
    inward_normals: tuple


@dataclass(frozen=True)
class LcddKink:
    """Lipschitz, continuously directionally differentiable kink.

    Locally the domain is the epigraph, in the direction ``vertical``, of a
    function whose directional derivative at the point is
    ``directional_derivative(v')`` for horizontal coordinates ``v'`` taken in
    the orthonormal ``horizontal`` basis (rows).
    """
    vertical: tuple
    horizontal: tuple
    directional_derivative: Callable = field(compare=False)


@dataclass(frozen=True)
class Cusp:
    """Border point whose inward sector has empty interior."""
    membership: Callable = field(compare=False)


# ---------------------------------------------------------------------------
# Sectors of the unit sphere
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FullSector:
    dim: int

    def contains(self, theta):
        theta = np.atleast_2d(theta)
        return np.ones(theta.shape[0], dtype=bool)

    def linear_constraints(self):
        return np.zeros((0, self.dim))


@dataclass(frozen=True)
class HalfSpaceSector:
    nu: tuple

    @property
    def dim(self):
        return len(self.nu)

    def contains(self, theta):
        return np.atleast_2d(theta) @ np.asarray(self.nu) >= 0.0

    def linear_constraints(self):
        return np.asarray(self.nu, dtype=float)[None, :]


@dataclass(frozen=True)
class OrthantSector:
    normals: tuple

    @property
    def k(self):
        return len(self.normals)

    @property
    def dim(self):
        return len(self.normals[0])

    def contains(self, theta):
        return np.all(np.atleast_2d(theta) @ np.asarray(self.normals).T >= 0.0, axis=1)

    def linear_constraints(self):
        return np.asarray(self.normals, dtype=float)


@dataclass(frozen=True)
class PredicateSector:
    """Sector given by a membership test on unit vectors (vectorized over rows)."""
    dim: int
    membership: Callable = field(compare=False)
    measure_zero: bool = False

    def contains(self, theta):
        theta = np.atleast_2d(np.asarray(theta, dtype=float))
        theta = theta / np.linalg.norm(theta, axis=1, keepdims=True)
        return np.asarray(self.membership(theta), dtype=bool)


# ---------------------------------------------------------------------------
# Domains
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _Domain:
    """Common interface.  Subclasses fill in the geometry."""

    @property
    def convex(self):
        return False

    @property
    def feature_scale(self):
        lo, hi = self.bounding_box()
        return float(np.min(np.asarray(hi) - np.asarray(lo)))

    def contains(self, x):
        pts, single = _as_points(x, self.dim)
        inside = self._contains(pts)
        return bool(inside[0]) if single else inside

    def segments(self, other, axis):
        """Intervals of ``{y : y in domain}`` on the line through ``other`` along ``axis``.

        ``other`` holds the remaining ``d - 1`` coordinates (shape ``(N, d-1)``).
        Returns ``(lo, hi)`` of shape ``(N, S)``; empty pieces have ``lo >= hi``.
        """
        lo, hi = self.bounding_box()
        return _scan_segments(self._contains, other, axis, lo[axis], hi[axis])

    def quadrature_axis(self, x):
        return self.dim - 1

    def volume_value(self, rtol=1e-7):
        """Lebesgue measure by cubature, for shapes without a closed form."""
        from kinklap.quadrature import integrate_region
        lo, hi = self.bounding_box()
        res = integrate_region(lambda y: np.ones(len(y)), self.segments, np.asarray(lo),
                               np.asarray(hi), axis=self.quadrature_axis(None),
                               rtol=rtol, max_cells=50_000)
        return res.value


def _scan_segments(contains, other, axis, lo, hi, n_scan=257, max_pieces=4):
    """Generic line clipping: sample the line, then bisect each membership flip."""
    other = np.atleast_2d(other)
    n, dm1 = other.shape
    s = np.linspace(lo, hi, n_scan)
    pts = np.empty((n, n_scan, dm1 + 1))
    pts[:, :, :axis] = other[:, None, :axis]
    pts[:, :, axis + 1:] = other[:, None, axis:]
    pts[:, :, axis] = s[None, :]
    inside = contains(pts.reshape(-1, dm1 + 1)).reshape(n, n_scan)

    def locate(row, a, b, a_in):
        for _ in range(60):
            m = 0.5 * (a + b)
            p = np.insert(other[row], axis, m)[None, :]
            if bool(contains(p)[0]) == a_in:
                a = m
            else:
                b = m
        return 0.5 * (a + b)

    out_lo = np.full((n, max_pieces), 0.0)
    out_hi = np.full((n, max_pieces), 0.0)
    for row in range(n):
        flags = inside[row]
        if not flags.any():
            continue
        piece = 0
        j = 0
        while j < n_scan and piece < max_pieces:
            if not flags[j]:
                j += 1
                continue
            start = s[0] if j == 0 else locate(row, s[j - 1], s[j], False)
            k = j
            while k + 1 < n_scan and flags[k + 1]:
                k += 1
            end = s[-1] if k == n_scan - 1 else locate(row, s[k], s[k + 1], True)
            out_lo[row, piece], out_hi[row, piece] = start, end
            piece += 1
            j = k + 1
    return out_lo, out_hi


def _insert_axis(other, axis, values):
    other = np.atleast_2d(other)
    return np.insert(other, axis, values, axis=1)


@dataclass(frozen=True)
class Ball(_Domain):
    dim: int = 3
    radius: float = 1.0
    center: Optional[tuple] = None
    distance_mode: str = "intrinsic"

    def __post_init__(self):
        if self.dim < 1 or self.radius <= 0:
            raise GeometryError("Ball needs dim >= 1 and radius > 0")
        if self.center is None:
            object.__setattr__(self, "center", (0.0,) * self.dim)
        if len(self.center) != self.dim:
            raise GeometryError("center has wrong dimension")

    @property
    def convex(self):
        return True

    @property
    def volume(self):
        d = self.dim
        return math.pi ** (d / 2) / math.gamma(d / 2 + 1) * self.radius ** d

    @property
    def feature_scale(self):
        return self.radius

    def bounding_box(self):
        c = np.asarray(self.center)
        return c - self.radius, c + self.radius

    def _contains(self, pts):
        diff = pts - np.asarray(self.center)
        return np.einsum("ij,ij->i", diff, diff) <= self.radius ** 2

    def segments(self, other, axis):
        c = np.asarray(self.center)
        c_other = np.delete(c, axis)
        rest = np.atleast_2d(other) - c_other
        h2 = self.radius ** 2 - np.einsum("ij,ij->i", rest, rest)
        half = np.sqrt(np.maximum(h2, 0.0))
        lo = np.where(h2 > 0, c[axis] - half, 0.0)
        hi = np.where(h2 > 0, c[axis] + half, 0.0)
        return lo[:, None], hi[:, None]

    def quadrature_axis(self, x):
        if x is None:
            return self.dim - 1
        off = np.abs(np.asarray(x, dtype=float) - np.asarray(self.center))
        return int(np.argmax(off)) if off.max() > 0 else self.dim - 1

    def _constraints(self, x):
        diff = x - np.asarray(self.center)
        r = np.linalg.norm(diff)
        grad = -diff / r if r > 0 else np.zeros(self.dim)
        return [(self.radius - r, grad)]


@dataclass(frozen=True)
class Box(_Domain):
    lower: tuple = (0.0, 0.0, 0.0)
    upper: tuple = (1.0, 1.0, 1.0)
    distance_mode: str = "intrinsic"

    def __post_init__(self):
        lo, hi = np.asarray(self.lower, float), np.asarray(self.upper, float)
        if lo.shape != hi.shape or lo.ndim != 1 or np.any(hi <= lo):
            raise GeometryError("Box needs matching lower < upper vectors")

    @classmethod
    def unit(cls, d=3, **kw):
        return cls(lower=(0.0,) * d, upper=(1.0,) * d, **kw)

    @property
    def dim(self):
        return len(self.lower)

    @property
    def convex(self):
        return True

    @property
    def volume(self):
        return float(np.prod(np.asarray(self.upper) - np.asarray(self.lower)))

    def bounding_box(self):
        return np.asarray(self.lower, float), np.asarray(self.upper, float)

    def _contains(self, pts):
        return np.all((pts >= np.asarray(self.lower)) & (pts <= np.asarray(self.upper)), axis=1)

    def segments(self, other, axis):
        other = np.atleast_2d(other)
        lo_o = np.delete(np.asarray(self.lower, float), axis)
        hi_o = np.delete(np.asarray(self.upper, float), axis)
        ok = np.all((other >= lo_o) & (other <= hi_o), axis=1)
        lo = np.where(ok, self.lower[axis], 0.0)
        hi = np.where(ok, self.upper[axis], 0.0)
        return lo[:, None], hi[:, None]

    def _constraints(self, x):
        out = []
        eye = np.eye(self.dim)
        for i in range(self.dim):
            out.append((x[i] - self.lower[i], eye[i]))
            out.append((self.upper[i] - x[i], -eye[i]))
        return out


@dataclass(frozen=True)
class OrthantModel(Box):
    """The local corner model R^k_+ x R^(d-k), truncated to a finite box.

    The origin is a corner of depth ``k``; the truncation faces sit at
    distance ``extent`` and are far from it.
    """
    k: int = 3
    extent: float = 1.0

    def __init__(self, dim=3, k=3, extent=1.0, distance_mode="intrinsic"):
        if not 0 <= k <= dim:
            raise GeometryError(f"depth k must lie in [0, {dim}]")
        lower = tuple([0.0] * k + [-extent] * (dim - k))
        upper = tuple([extent] * dim)
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "extent", extent)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "distance_mode", distance_mode)
        Box.__post_init__(self)


@dataclass(frozen=True)
class Cone(_Domain):
    """Solid circular cone ``{y : angle(y - apex, axis) <= half_angle, (y - apex).axis <= height}``."""
    dim: int = 3
    half_angle: float = math.pi / 4
    axis: Optional[tuple] = None
    height: float = 1.0
    apex: Optional[tuple] = None
    distance_mode: str = "intrinsic"

    def __post_init__(self):
        if not 0 < self.half_angle < math.pi / 2:
            raise GeometryError("half_angle must lie in (0, pi/2)")
        if self.axis is None:
            object.__setattr__(self, "axis", tuple(np.eye(self.dim)[-1]))
        object.__setattr__(self, "axis", _frozen(_unit(self.axis)))
        if self.apex is None:
            object.__setattr__(self, "apex", (0.0,) * self.dim)

    @property
    def convex(self):
        return True

    @property
    def volume(self):
        d = self.dim
        base_radius = self.height * math.tan(self.half_angle)
        unit_ball = math.pi ** ((d - 1) / 2) / math.gamma((d + 1) / 2)
        return unit_ball * base_radius ** (d - 1) * self.height / d

    @property
    def feature_scale(self):
        return self.height * math.sin(self.half_angle)

    def bounding_box(self):
        u = np.asarray(self.axis)
        a = np.asarray(self.apex)
        top = a + self.height * u
        rad = self.height * math.tan(self.half_angle)
        ext = rad * np.sqrt(np.maximum(1.0 - u ** 2, 0.0))
        lo = np.minimum(a, top - ext)
        hi = np.maximum(a, top + ext)
        return lo, hi

    def _split(self, pts):
        w = pts - np.asarray(self.apex)
        along = w @ np.asarray(self.axis)
        perp = np.linalg.norm(w - along[:, None] * np.asarray(self.axis), axis=1)
        return along, perp

    def _contains(self, pts):
        along, perp = self._split(pts)
        ca, sa = math.cos(self.half_angle), math.sin(self.half_angle)
        return (along * sa >= perp * ca) & (along <= self.height)

    def _axis_index(self):
        u = np.asarray(self.axis)
        j = int(np.argmax(np.abs(u)))
        return j if abs(abs(u[j]) - 1.0) < 1e-15 else None

    def quadrature_axis(self, x):
        j = self._axis_index()
        return self.dim - 1 if j is None else j

    def segments(self, other, axis):
        j = self._axis_index()
        if j != axis:
            return super().segments(other, axis)
        sign = np.sign(self.axis[j])
        a = np.asarray(self.apex)
        rest = np.atleast_2d(other) - np.delete(a, axis)
        perp = np.linalg.norm(rest, axis=1)
        start = perp / math.tan(self.half_angle)
        ok = start <= self.height
        s0, s1 = a[axis] + sign * start, a[axis] + sign * self.height
        lo = np.where(ok, np.minimum(s0, s1), 0.0)
        hi = np.where(ok, np.maximum(s0, s1), 0.0)
        return lo[:, None], hi[:, None]

    def _constraints(self, x):
        u = np.asarray(self.axis)
        w = x - np.asarray(self.apex)
        along = w @ u
        wp = w - along * u
        perp = np.linalg.norm(wp)
        ca, sa = math.cos(self.half_angle), math.sin(self.half_angle)
        radial = wp / perp if perp > 0 else np.zeros(self.dim)
        return [(along * sa - perp * ca, u * sa - radial * ca), (self.height - along, -u)]

    def _singular(self, x, eps):
        w = x - np.asarray(self.apex)
        if np.linalg.norm(w) > eps:
            return None
        u = np.asarray(self.axis)
        basis = _complement_basis(u)
        cot = 1.0 / math.tan(self.half_angle)
        return LcddKink(_frozen(u), _frozen_rows(basis),
                        lambda vp: cot * np.linalg.norm(np.atleast_2d(vp), axis=1))


def _complement_basis(u):
    """Orthonormal rows spanning the complement of unit vector ``u``."""
    d = len(u)
    q, _ = np.linalg.qr(np.column_stack([u, np.eye(d)]))
    basis = q[:, 1:d].T
    return basis


@dataclass(frozen=True)
class Epigraph(_Domain):
    """``{y in [lower, upper] : y_d >= gamma(y')}`` for a Lipschitz ``gamma``.

    ``gamma`` maps an ``(N, d-1)`` array to ``(N,)``.
    """
    dim: int = 3
    gamma: Callable = field(default=lambda yp: np.zeros(len(yp)), compare=False)
    lipschitz_bound: float = 0.0
    lower: tuple = (-1.0, -1.0, -1.0)
    upper: tuple = (1.0, 1.0, 1.0)
    is_convex: bool = False
    distance_mode: str = "extrinsic"

    def __post_init__(self):
        if len(self.lower) != self.dim or len(self.upper) != self.dim:
            raise GeometryError("bounding box has wrong dimension")
        if self.lipschitz_bound < 0:
            raise GeometryError("lipschitz_bound must be nonnegative")
        if math.isfinite(self.lipschitz_bound):
            self._probe_lipschitz()

    def _probe_lipschitz(self, probes=4096):
        lo, hi = np.asarray(self.lower[:-1], float), np.asarray(self.upper[:-1], float)
        rng = np.random.default_rng(0x1195)
        a = lo + (hi - lo) * rng.random((probes, self.dim - 1))
        b = a + 1e-3 * (hi - lo) * rng.standard_normal((probes, self.dim - 1))
        b = np.clip(b, lo, hi)
        a = np.vstack([a, lo + (hi - lo) * rng.random((probes, self.dim - 1))])
        b = np.vstack([b, lo + (hi - lo) * rng.random((probes, self.dim - 1))])
        dist = np.linalg.norm(a - b, axis=1)
        keep = dist > 0
        slopes = np.abs(self.graph(a[keep]) - self.graph(b[keep])) / dist[keep]
        worst = float(slopes.max()) if slopes.size else 0.0
        if worst > self.lipschitz_bound * (1 + 1e-9) + 1e-12:
            raise GeometryError(f"gamma has slope {worst:.6g} above lipschitz_bound "
                                f"{self.lipschitz_bound:.6g}")

    @property
    def convex(self):
        return self.is_convex

    @property
    def volume(self):
        return self.volume_value()

    def bounding_box(self):
        return np.asarray(self.lower, float), np.asarray(self.upper, float)

    def graph(self, yp):
        return np.asarray(self.gamma(np.atleast_2d(yp)), dtype=float)

    def _contains(self, pts):
        lo, hi = self.bounding_box()
        in_box = np.all((pts >= lo) & (pts <= hi), axis=1)
        return in_box & (pts[:, -1] >= self.graph(pts[:, :-1]))

    def segments(self, other, axis):
        if axis != self.dim - 1:
            return super().segments(other, axis)
        lo, hi = self.bounding_box()
        other = np.atleast_2d(other)
        ok = np.all((other >= lo[:-1]) & (other <= hi[:-1]), axis=1)
        g = np.where(ok, self.graph(np.clip(other, lo[:-1], hi[:-1])), np.inf)
        start = np.maximum(g, lo[-1])
        good = ok & (start <= hi[-1])
        return (np.where(good, start, 0.0)[:, None], np.where(good, hi[-1], 0.0)[:, None])

    def _box_constraints(self, x):
        out = []
        eye = np.eye(self.dim)
        for i in range(self.dim):
            out.append((x[i] - self.lower[i], eye[i]))
            out.append((self.upper[i] - x[i], -eye[i]))
        return out

    def _graph_gap(self, x):
        return x[-1] - float(self.graph(x[:-1][None, :])[0])

    def _constraints(self, x):
        gap = self._graph_gap(x) / math.sqrt(1.0 + self.lipschitz_bound ** 2)
        return self._box_constraints(x) + [(gap, None)]

    def _singular(self, x, eps):
        return None

    def directional_derivative(self, xp, vp, h0=None):
        """Richardson-stabilized one-sided derivative ``gamma'(x'; v')``.

        Returns ``(value, error)``; ``value`` is ``+-inf`` when the quotients
        diverge monotonically.  Raises :class:`FluctuatingDirection` when they
        oscillate.
        """
        return _directional_derivative(self.graph, xp, vp,
                                       h0 if h0 is not None else 1e-2 * self.feature_scale)


@dataclass(frozen=True)
class CuspEpigraph(Epigraph):
    """Epigraph of ``|y_1|^beta`` (``variant='axis'``) or ``|y'|^beta`` (``'radial'``).

    Truncated to ``|y_i| <= 1`` and ``y_d <= height``; the origin is a cusp.
    """
    beta: float = 0.5
    variant: str = "axis"
    height: float = 1.0

    def __init__(self, dim=3, beta=0.5, variant="axis", height=1.0, distance_mode="extrinsic"):
        if not 0 < beta < 1:
            raise GeometryError("cusp exponent beta must lie in (0, 1)")
        if variant not in ("axis", "radial"):
            raise GeometryError("variant must be 'axis' or 'radial'")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "variant", variant)
        object.__setattr__(self, "height", height)
        object.__setattr__(self, "dim", dim)
        object.__setattr__(self, "gamma", self._gamma)
        object.__setattr__(self, "lipschitz_bound", math.inf)
        object.__setattr__(self, "lower", tuple([-1.0] * (dim - 1) + [0.0]))
        object.__setattr__(self, "upper", tuple([1.0] * (dim - 1) + [height]))
        object.__setattr__(self, "is_convex", False)
        object.__setattr__(self, "distance_mode", distance_mode)

    def _gamma(self, yp):
        yp = np.atleast_2d(yp)
        r = np.abs(yp[:, 0]) if self.variant == "axis" else np.linalg.norm(yp, axis=1)
        return r ** self.beta

    @property
    def volume(self):
        if self.variant == "axis" and self.height == 1.0:
            return 2.0 ** (self.dim - 1) * self.beta / (self.beta + 1.0)
        return self.volume_value()

    @property
    def feature_scale(self):
        return 1.0

    def _graph_gradient(self, xp):
        if self.variant == "axis":
            g = np.zeros(self.dim - 1)
            g[0] = self.beta * abs(xp[0]) ** (self.beta - 1) * np.sign(xp[0])
            return g
        r = np.linalg.norm(xp)
        return self.beta * r ** (self.beta - 2) * xp

    def _on_singular_set(self, xp, eps):
        return abs(xp[0]) <= eps if self.variant == "axis" else np.linalg.norm(xp) <= eps

    def _constraints(self, x):
        xp = x[:-1]
        out = self._box_constraints(x)
        # drop the bottom face y_d >= 0; the graph constraint supersedes it
        out = [c for i, c in enumerate(out) if i != 2 * (self.dim - 1)]
        if self._on_singular_set(xp, 1e-300):
            out.append((self._graph_gap(x), None))
            return out
        grad = self._graph_gradient(xp)
        normal = np.append(-grad, 1.0)
        nn = np.linalg.norm(normal)
        out.append((self._graph_gap(x) / nn, normal / nn))
        return out

    def _singular(self, x, eps):
        if not self._on_singular_set(x[:-1], eps) or abs(self._graph_gap(x)) > eps:
            return None
        if self.variant == "axis":
            member = lambda th: (th[:, 0] == 0.0) & (th[:, -1] >= 0.0)
        else:
            member = lambda th: np.all(th[:, :-1] == 0.0, axis=1) & (th[:, -1] > 0.0)
        return Cusp(member)


def _directional_derivative(gamma, xp, vp, h0, levels=24, rtol=1e-3):
    xp = np.asarray(xp, dtype=float)
    vp = np.asarray(vp, dtype=float)
    base = float(gamma(xp[None, :])[0])
    hs = h0 * 2.0 ** -np.arange(levels)
    vals = np.asarray(gamma(xp[None, :] + hs[:, None] * vp[None, :]), dtype=float)
    q = (vals - base) / hs
    rich = 2.0 * q[1:] - q[:-1]
    inc = np.diff(q)
    tail = inc[-8:]
    scale = np.maximum(1.0, np.abs(q[-8:]))
    # Monotone blow-up: increments keep one sign and do not shrink.
    if np.all(tail > 0) and np.all(np.abs(tail[1:]) >= 0.999 * np.abs(tail[:-1])) and q[-1] > 1e3:
        return math.inf, 0.0
    if np.all(tail < 0) and np.all(np.abs(tail[1:]) >= 0.999 * np.abs(tail[:-1])) and q[-1] < -1e3:
        return -math.inf, 0.0
    spread = np.abs(np.diff(rich[-6:]))
    if np.any(spread > rtol * scale[-5:]):
        raise FluctuatingDirection(
            f"difference quotients along {vp.tolist()} do not settle "
            f"(last quotients {q[-4:].tolist()})")
    err = float(np.max(spread)) + 1e-9 * max(1.0, abs(rich[-1]))
    return float(rich[-1]), err


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def contains(domain, x):
    """True iff ``x`` lies in the closed region (vectorized over rows)."""
    return domain.contains(x)


def classify(domain, x, tol=1e-6):
    """Classify ``x`` as interior, smooth boundary, orthogonal corner, LCDD kink or cusp."""
    if tol <= 0:
        raise GeometryError("tol must be positive")
    x = np.asarray(x, dtype=float)
    if x.shape != (domain.dim,):
        raise GeometryError(f"expected a point of dimension {domain.dim}")
    if not domain.contains(x):
        raise GeometryError(f"point {x.tolist()} lies outside the domain")
    eps = _ON_BOUNDARY * max(1.0, domain.feature_scale)
    special = getattr(domain, "_singular", lambda *_: None)(x, eps)
    if special is not None:
        return special
    active = []
    for dist, normal in domain._constraints(x):
        if dist <= eps:
            active.append(normal)
        elif dist < tol:
            raise UnresolvedClassification(
                f"point lies {dist:.3g} from the boundary, inside the tolerance band "
                f"({eps:.1e}, {tol:.1e})")
    if not active:
        return Interior()
    if any(n is None for n in active):
        if len(active) > 1:
            raise UnresolvedClassification("graph kink meeting a box face is not supported")
        return _graph_kink(domain, x)
    normals = np.array([_unit(n) for n in active])
    if len(normals) == 1:
        return C1Boundary(_frozen(normals[0]))
    gram = normals @ normals.T - np.eye(len(normals))
    if np.max(np.abs(gram)) <= 1e-12:
        return CornerDepthK(len(normals), _frozen_rows(normals))
    return _wedge_kink(normals)


def _graph_kink(domain, x):
    xp = x[:-1]
    e = np.eye(domain.dim)
    h0 = 1e-2 * domain.feature_scale

    def deriv(vp):
        vp = np.atleast_2d(vp)
        out = np.empty(len(vp))
        for i, row in enumerate(vp):
            out[i] = _directional_derivative(domain.graph, xp, row, h0)[0]
        return out

    return LcddKink(_frozen(e[-1]), _frozen_rows(e[:-1]), deriv)


def _wedge_kink(normals):
    w = _unit(normals.sum(axis=0))
    heights = normals @ w
    if np.any(heights <= 0):
        raise UnresolvedClassification("active faces do not bound a pointed wedge")
    basis = _complement_basis(w)
    slopes = normals @ basis.T  # n_i . (horizontal part)

    def deriv(vp):
        vp = np.atleast_2d(vp)
        return np.max(-(vp @ slopes.T) / heights, axis=1)

    return LcddKink(_frozen(w), _frozen_rows(basis), deriv)


def sector_at(domain, cls):
    """Inward unit-sphere sector for a classification produced by :func:`classify`."""
    d = domain.dim
    if isinstance(cls, Interior):
        return FullSector(d)
    if isinstance(cls, C1Boundary):
        return HalfSpaceSector(cls.inner_normal)
    if isinstance(cls, CornerDepthK):
        return OrthantSector(cls.inward_normals)
    if isinstance(cls, LcddKink):
        u = np.asarray(cls.vertical)
        basis = np.asarray(cls.horizontal)
        deriv = cls.directional_derivative

        def member(theta):
            height = theta @ u
            slack = 1e-12 * np.ones(len(theta))
            return height >= deriv(theta @ basis.T) - slack

        return PredicateSector(d, member)
    if isinstance(cls, Cusp):
        return PredicateSector(d, cls.membership, measure_zero=True)
    raise GeometryError(f"unknown classification {cls!r}")


@dataclass(frozen=True)
class BouligandResult:
    contained: bool
    tie: bool
    derivative: float

    def __bool__(self):
        return self.contained


def bouligand_contains(domain, x, v, h0=None):
    """Test ``v`` against the tangent cone ``epi(gamma'(x'; .))`` of an epigraph domain."""
    if not isinstance(domain, Epigraph):
        raise GeometryError("bouligand_contains needs an epigraph domain")
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if abs(x[-1] - float(domain.graph(x[:-1][None, :])[0])) > 1e-10:
        raise GeometryError("x must lie on the graph of gamma")
    value, err = domain.directional_derivative(x[:-1], v[:-1], h0)
    if math.isinf(value):
        return BouligandResult(value < 0, False, value)
    gap = v[-1] - value
    if abs(gap) <= err:
        return BouligandResult(True, True, value)
    return BouligandResult(bool(gap > 0), False, value)


def blow_up_indicator(domain, x, z, t):
    """Indicator of the rescaled domain ``(domain - x) / t`` at ``z`` (vectorized over ``z``)."""
    if t <= 0:
        raise GeometryError("t must be positive")
    return domain.contains(np.asarray(x, dtype=float) + t * np.asarray(z, dtype=float))


def intrinsic_distance(domain, x, y, mode=None):
    """Geodesic distance inside a convex flat domain (Euclidean norm).

    ``mode='extrinsic'`` returns the Euclidean norm for any domain.
    """
    mode = mode or domain.distance_mode
    if mode not in ("intrinsic", "extrinsic"):
        raise GeometryError(f"unknown distance mode {mode!r}")
    if mode == "intrinsic" and not domain.convex:
        raise GeometryError("unsupported: intrinsic distance on a non-convex domain; "
                            "use extrinsic mode")
    return float(np.linalg.norm(np.asarray(x, float) - np.asarray(y, float)))
