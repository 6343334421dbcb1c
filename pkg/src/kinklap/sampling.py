"""Seeded samplers on domains, scalar test fields and densities, and sample-set I/O."""

import csv
import math
import struct
from dataclasses import dataclass, field, fields, is_dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from kinklap._parallel import block_ranges, block_rng, map_ordered
from kinklap.geometry import Ball, Box

KLSS_MAGIC = b"KLSS"
KLSS_VERSION = 1
_HEADER = struct.Struct("<4sIQI")

MIN_ACCEPTANCE = 1e-4


def domain_label(domain):
    """Stable text identifier of a domain (callables are named, not addressed)."""
    parts = []
    for f in fields(domain) if is_dataclass(domain) else ():
        value = getattr(domain, f.name)
        if callable(value):
            value = getattr(value, "__name__", type(value).__name__)
        elif isinstance(value, tuple):
            value = "(" + ",".join(repr(float(v)) if isinstance(v, (int, float)) else repr(v)
                                   for v in value) + ")"
        parts.append(f"{f.name}={value}")
    return f"{type(domain).__name__}[{';'.join(parts)}]"


# ---------------------------------------------------------------------------
# Sample sets
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SampleSet:
    points: np.ndarray
    seed: Optional[int] = None
    domain_id: str = ""
    density_id: str = "uniform"

    def __post_init__(self):
        pts = np.ascontiguousarray(self.points, dtype=np.float64)
        if pts.ndim != 2:
            raise ValueError("points must be an (n, d) array")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n(self):
        return self.points.shape[0]

    @property
    def dim(self):
        return self.points.shape[1]

    def __len__(self):
        return self.n

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow([f"x{i + 1}" for i in range(self.dim)])
            for row in self.points:
                writer.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path, **meta):
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            expected = [f"x{i + 1}" for i in range(len(header))]
            if header != expected:
                raise ValueError(f"bad CSV header {header!r}; expected {expected!r}")
            rows = [[float(v) for v in row] for row in reader if row]
        pts = np.array(rows, dtype=float).reshape(len(rows), len(header))
        return cls(pts, **meta)

    def to_binary(self, path):
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(KLSS_MAGIC, KLSS_VERSION, self.n, self.dim))
            fh.write(self.points.astype("<f8", copy=False).tobytes(order="C"))

    @classmethod
    def from_binary(cls, path, **meta):
        path = Path(path)
        with open(path, "rb") as fh:
            head = fh.read(_HEADER.size)
            if len(head) != _HEADER.size:
                raise ValueError("truncated KLSS header")
            magic, version, n, d = _HEADER.unpack(head)
            if magic != KLSS_MAGIC:
                raise ValueError(f"not a KLSS file (magic {magic!r})")
            if version != KLSS_VERSION:
                raise ValueError(f"unsupported KLSS version {version}")
            count = n * d
            data = np.fromfile(fh, dtype="<f8", count=count)
        if data.size != count:
            raise ValueError(f"KLSS payload holds {data.size} values, header promises {count}")
        return cls(data.reshape(n, d).astype(np.float64), **meta)


# ---------------------------------------------------------------------------
# Scalar fields
# ---------------------------------------------------------------------------

class _PolynomialField:
    """Fields whose derivative tensors are known exactly."""

    def derivatives(self, x, order):
        """``[f(x), grad, hess, ...]`` up to ``order`` (higher tensors are zero)."""
        x = np.asarray(x, dtype=float)
        d = x.size
        out = [float(self.value(x[None, :])[0]), self.gradient(x), self.hessian(x)]
        for m in range(3, order + 1):
            out.append(np.zeros((d,) * m))
        return out[:order + 1]


@dataclass(frozen=True)
class Linear(_PolynomialField):
    a: tuple

    def value(self, pts):
        return np.atleast_2d(pts) @ np.asarray(self.a, dtype=float)

    def gradient(self, x):
        return np.asarray(self.a, dtype=float).copy()

    def hessian(self, x):
        d = len(self.a)
        return np.zeros((d, d))

    @property
    def label(self):
        return "linear(" + ",".join(repr(float(v)) for v in self.a) + ")"


@dataclass(frozen=True)
class CoordinateSum(Linear):
    """``f(y) = y_1 + ... + y_d``."""

    def __init__(self, dim=3):
        object.__setattr__(self, "a", (1.0,) * dim)

    def value(self, pts):
        return np.atleast_2d(pts).sum(axis=1)

    @property
    def label(self):
        return "coordinate_sum"


@dataclass(frozen=True, eq=False)
class Quadratic(_PolynomialField):
    """``f(y) = y^T A y / 2 + b . y + c`` with symmetric ``A``."""
    A: np.ndarray
    b: np.ndarray
    c: float = 0.0

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or not np.allclose(A, A.T):
            raise ValueError("A must be a symmetric square matrix")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float))

    def value(self, pts):
        pts = np.atleast_2d(pts)
        return 0.5 * np.einsum("ni,ij,nj->n", pts, self.A, pts) + pts @ self.b + self.c

    def gradient(self, x):
        return self.A @ np.asarray(x, dtype=float) + self.b

    def hessian(self, x):
        return self.A.copy()

    @property
    def label(self):
        return "quadratic"


@dataclass(frozen=True, eq=False)
class CustomField:
    """User-supplied field; missing derivatives come from central differences."""
    evaluator: Callable
    grad: Optional[Callable] = None
    hess: Optional[Callable] = None
    step: float = 1e-4
    higher: Optional[Callable] = field(default=None)
    label: str = "custom"

    def value(self, pts):
        return np.asarray(self.evaluator(np.atleast_2d(pts)), dtype=float)

    def _fd_gradient(self, x, h):
        d = x.size
        eye = np.eye(d) * h
        return (self.value(x + eye) - self.value(x - eye)) / (2 * h)

    def _fd_hessian(self, x, h):
        d = x.size
        eye = np.eye(d) * h
        hess = np.empty((d, d))
        for i in range(d):
            plus = self.value(x + eye[i] + eye) - self.value(x + eye[i] - eye)
            minus = self.value(x - eye[i] + eye) - self.value(x - eye[i] - eye)
            hess[i] = (plus - minus) / (4 * h * h)
        return 0.5 * (hess + hess.T)

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        if self.grad is not None:
            return np.asarray(self.grad(x), dtype=float)
        return self._fd_gradient(x, self.step)

    def hessian(self, x):
        x = np.asarray(x, dtype=float)
        if self.hess is not None:
            return np.asarray(self.hess(x), dtype=float)
        return self._fd_hessian(x, math.sqrt(self.step))

    def derivatives(self, x, order):
        x = np.asarray(x, dtype=float)
        out = [float(self.value(x[None, :])[0]), self.gradient(x), self.hessian(x)]
        if order > 2:
            if self.higher is None:
                raise ValueError("derivatives above order 2 need a 'higher' evaluator")
            out.extend(np.asarray(self.higher(x, m), dtype=float) for m in range(3, order + 1))
        return out[:order + 1]

    def consistency_gap(self, x):
        """Relative disagreement of finite differences at step ``h`` and ``h/2``."""
        x = np.asarray(x, dtype=float)
        g1, g2 = self._fd_gradient(x, self.step), self._fd_gradient(x, self.step / 2)
        h1 = self._fd_hessian(x, math.sqrt(self.step))
        h2 = self._fd_hessian(x, math.sqrt(self.step) / 2)

        def rel(a, b):
            return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1.0))

        return max(rel(g1, g2), rel(h1, h2))


# ---------------------------------------------------------------------------
# Densities
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class UniformDensity:
    volume: float

    def value(self, pts):
        return np.full(np.atleast_2d(pts).shape[0], 1.0 / self.volume)

    def gradient(self, x):
        return np.zeros(np.asarray(x).size)

    def derivatives(self, x, order):
        d = np.asarray(x).size
        out = [1.0 / self.volume] + [np.zeros((d,) * m) for m in range(1, order + 1)]
        return out

    @property
    def sup(self):
        return 1.0 / self.volume

    @property
    def label(self):
        return "uniform"


@dataclass(frozen=True, eq=False)
class CustomDensity:
    """Density ``evaluator(y) / normalization`` with optional analytic derivatives."""
    evaluator: Callable
    normalization: float = 1.0
    grad: Optional[Callable] = None
    higher: Optional[Callable] = None
    step: float = 1e-5
    label: str = "custom"

    def value(self, pts):
        return np.asarray(self.evaluator(np.atleast_2d(pts)), dtype=float) / self.normalization

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        if self.grad is not None:
            return np.asarray(self.grad(x), dtype=float) / self.normalization
        eye = np.eye(x.size) * self.step
        return (self.value(x + eye) - self.value(x - eye)) / (2 * self.step)

    def derivatives(self, x, order):
        x = np.asarray(x, dtype=float)
        out = [float(self.value(x[None, :])[0]), self.gradient(x)]
        if order > 1:
            if self.higher is None:
                raise ValueError("density derivatives above order 1 need a 'higher' evaluator")
            out.extend(np.asarray(self.higher(x, m), dtype=float) / self.normalization
                       for m in range(2, order + 1))
        return out[:order + 1]


# ---------------------------------------------------------------------------
# Samplers
# ---------------------------------------------------------------------------

def _uniform_points(domain, rng, m):
    """``m`` uniform points in ``domain`` drawn from ``rng``."""
    d = domain.dim
    if isinstance(domain, Box):
        lo, hi = domain.bounding_box()
        return lo + (hi - lo) * rng.random((m, d))
    if isinstance(domain, Ball):
        direction = rng.standard_normal((m, d))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        radius = domain.radius * rng.random(m) ** (1.0 / d)
        return np.asarray(domain.center) + direction * radius[:, None]
    lo, hi = domain.bounding_box()
    out = []
    have = 0
    batch = max(2 * m, 1024)
    drawn = accepted = 0
    while have < m:
        cand = lo + (hi - lo) * rng.random((batch, d))
        ok = domain.contains(cand)
        drawn += batch
        accepted += int(ok.sum())
        if drawn >= 10_000 and accepted < MIN_ACCEPTANCE * drawn:
            raise ValueError(f"rejection acceptance rate {accepted / drawn:.2e} is below "
                             f"{MIN_ACCEPTANCE:g}; use a tighter bounding box")
        out.append(cand[ok])
        have += int(ok.sum())
    return np.concatenate(out)[:m]


def sample_uniform(domain, n, seed=0):
    """``n`` i.i.d. uniform points; identical for a given ``(domain, n, seed)``."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    d = domain.dim

    def block(bounds):
        start, stop = bounds
        return _uniform_points(domain, block_rng(seed, start, stream=1), stop - start)

    parts = map_ordered(block, block_ranges(n))
    pts = np.concatenate(parts) if parts else np.empty((0, d))
    return SampleSet(pts, seed, domain_label(domain), "uniform")


def check_envelope(domain, density, envelope, probes=100_000, seed=12345):
    """Largest density value over uniform probes; raises if it exceeds ``envelope``."""
    pts = _uniform_points(domain, block_rng(seed, 0, stream=3), probes)
    values = density.value(pts)
    if np.any(values < 0):
        raise ValueError("density is negative at a probe point")
    peak = float(values.max())
    if peak > envelope:
        raise ValueError(f"envelope {envelope:g} is below the density peak {peak:g}")
    return peak


def rejection_sample(domain, density, n, seed=0, envelope=None):
    """``n`` i.i.d. draws from ``density`` by accept/reject against uniform proposals."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    if isinstance(density, UniformDensity):
        envelope = envelope if envelope is not None else density.sup
    if envelope is None or envelope <= 0:
        raise ValueError("a positive envelope >= sup p is required")
    check_envelope(domain, density, envelope)
    d = domain.dim

    def block(bounds):
        start, stop = bounds
        rng = block_rng(seed, start, stream=2)
        need = stop - start
        out, have, drawn = [], 0, 0
        while have < need:
            batch = max(2 * (need - have), 256)
            cand = _uniform_points(domain, rng, batch)
            ok = rng.random(batch) * envelope <= density.value(cand)
            drawn += batch
            out.append(cand[ok])
            have += int(ok.sum())
            if drawn >= 100_000 and have < MIN_ACCEPTANCE * drawn:
                raise ValueError("acceptance rate too low; lower the envelope")
        return np.concatenate(out)[:need]

    parts = map_ordered(block, block_ranges(n))
    pts = np.concatenate(parts) if parts else np.empty((0, d))
    return SampleSet(pts, seed, domain_label(domain), getattr(density, "label", "custom"))
