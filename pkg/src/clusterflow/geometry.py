"""Norms, metrics, per-dimension statistics and hypercuboid bounding boxes.

Vectors are 1-D float64 numpy arrays in which ``nan`` marks a missing entry.
Present entries must be finite. All distances over incomplete vectors are
computed on the shared-present subspace as a raw subspace norm (no
renormalisation by dimension count); callers that care about the support size
can query :func:`shared_dims`.

Boxes come in three flavours:

* ``FULL``      every dimension participates.
* ``LOWER``     a dimension becomes active only once a point with a non-zero
                value in it has been seen; zero entries of a query point never
                exclude containment.
* ``PARTIAL``   a dimension becomes active only via a present (non-missing)
                value; missing entries of a query are unconstrained.
"""

from __future__ import annotations

import math
from enum import Enum

import numpy as np

from .errors import (
    DimensionError,
    EmptyInputError,
    MissingDataError,
    NoSharedSubspaceError,
)

__all__ = [
    "Metric",
    "BoxMode",
    "vec",
    "present_mask",
    "shared_dims",
    "lp_norm",
    "distance",
    "softmax",
    "unit_sum_softmax",
    "DimStats",
    "BoundingBox",
    "point_to_box_distance",
    "points_to_box_distance",
]

# Floor scale for degenerate standard deviations and zero-width box ranges.
EPSILON_SCALE = 1e-9


class Metric(str, Enum):
    """Distance family. L0 counts non-zero coordinates, LINF is the max."""

    L0 = "l0"
    L1 = "l1"
    L2 = "l2"
    LINF = "linf"
    MAHALANOBIS = "mahalanobis"


class BoxMode(str, Enum):
    FULL = "full"
    LOWER = "lower"
    PARTIAL = "partial"


def vec(values) -> np.ndarray:
    """Build a vector from a sequence, mapping ``None`` to a missing entry.

    Raises MissingDataError-adjacent ValueError if a present entry is not
    finite; nan inputs are accepted and treated as missing.
    """
    arr = np.asarray(
        [np.nan if v is None else float(v) for v in values], dtype=np.float64
    )
    if np.isinf(arr).any():
        raise ValueError("vector entries must be finite")
    return arr


def present_mask(v: np.ndarray) -> np.ndarray:
    return ~np.isnan(v)


def shared_dims(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Indices where both vectors carry a present value."""
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch: {a.shape} vs {b.shape}")
    return np.nonzero(present_mask(a) & present_mask(b))[0]


def _norm_of(diff: np.ndarray, p) -> float:
    absd = np.abs(diff)
    if p == 0:
        return float(np.count_nonzero(absd))
    if p == 1:
        return float(absd.sum())
    if p == 2:
        return float(np.sqrt((absd * absd).sum()))
    if p == math.inf:
        return float(absd.max()) if absd.size else 0.0
    raise ValueError(f"unsupported norm order {p!r}")


def lp_norm(v: np.ndarray, p) -> float:
    """The L^p length of a complete vector, p in {0, 1, 2, inf}.

    L^0 is the number of non-zero coordinates, L^1 the coordinate sum of
    absolute values, L^2 the Euclidean length and L^inf the largest absolute
    coordinate.
    """
    v = np.asarray(v, dtype=np.float64)
    if np.isnan(v).any():
        raise MissingDataError("lp_norm requires a complete vector")
    return _norm_of(v, p)


_METRIC_ORDER = {Metric.L0: 0, Metric.L1: 1, Metric.L2: 2, Metric.LINF: math.inf}


def distance(a: np.ndarray, b: np.ndarray, metric: Metric = Metric.L2,
             stats: "DimStats | None" = None) -> float:
    """Metric distance between two vectors on their shared-present subspace.

    Mahalanobis divides each per-dimension difference by that dimension's
    standard deviation (taken from ``stats``) before applying L2.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch: {a.shape} vs {b.shape}")
    shared = present_mask(a) & present_mask(b)
    if not shared.any():
        raise NoSharedSubspaceError("no dimension is present in both vectors")
    diff = a[shared] - b[shared]
    metric = Metric(metric)
    if metric is Metric.MAHALANOBIS:
        if stats is None:
            raise ValueError("Mahalanobis distance requires DimStats")
        return _norm_of(diff / stats.stddev[shared], 2)
    return _norm_of(diff, _METRIC_ORDER[metric])


def softmax(v) -> np.ndarray:
    """Exponential normalisation e^x / sum(e^x), stabilised against overflow.

    Order preserving and invariant to adding a constant to every entry.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0:
        raise EmptyInputError("softmax of an empty vector")
    if np.isnan(v).any():
        raise MissingDataError("softmax requires a complete vector")
    shifted = v - v.max()
    e = np.exp(shifted)
    return e / e.sum()


def unit_sum_softmax(v) -> np.ndarray:
    """Softmax applied after rescaling the input to unit sum.

    This is the low-contrast comparison row used when judging how much the
    plain exponent normalisation inflates the spread between similar scores:
    rescaling by the total first keeps near-equal inputs near-equal outputs.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0:
        raise EmptyInputError("normalisation of an empty vector")
    total = v.sum()
    if total == 0.0:
        raise ValueError("cannot rescale a vector whose entries sum to zero")
    return softmax(v / total)


class DimStats:
    """Online per-dimension mean/stddev/min/max with missing-value support.

    Single-writer accumulation (Welford); reads are safe from any thread once
    accumulation stops. ``stddev`` is population-style and floored at
    ``1e-9 x (observed range of the dimension, or 1.0 when degenerate)`` so
    Mahalanobis scaling never divides by zero.
    """

    __slots__ = ("dim", "n", "present", "_mean", "_m2", "_min", "_max")

    def __init__(self, dim: int):
        if dim <= 0:
            raise DimensionError("DimStats needs a positive dimension count")
        self.dim = dim
        self.n = 0
        self.present = np.zeros(dim, dtype=np.int64)
        self._mean = np.zeros(dim, dtype=np.float64)
        self._m2 = np.zeros(dim, dtype=np.float64)
        self._min = np.full(dim, np.inf)
        self._max = np.full(dim, -np.inf)

    @classmethod
    def from_points(cls, points) -> "DimStats":
        mat = np.atleast_2d(np.asarray(points, dtype=np.float64))
        stats = cls(mat.shape[1])
        pres = ~np.isnan(mat)
        stats.n = mat.shape[0]
        stats.present = pres.sum(axis=0)
        seen = stats.present > 0
        safe = np.where(pres, mat, 0.0)
        mean = safe.sum(axis=0) / np.maximum(stats.present, 1)
        stats._mean = np.where(seen, mean, 0.0)
        dev = np.where(pres, mat - stats._mean, 0.0)
        stats._m2 = (dev * dev).sum(axis=0)
        stats._min = np.where(seen, np.where(pres, mat, np.inf).min(axis=0), np.inf)
        stats._max = np.where(seen, np.where(pres, mat, -np.inf).max(axis=0), -np.inf)
        return stats

    def update(self, v: np.ndarray) -> None:
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (self.dim,):
            raise DimensionError(f"expected dim {self.dim}, got {v.shape}")
        ok = present_mask(v)
        self.n += 1
        self.present[ok] += 1
        x = v[ok]
        delta = x - self._mean[ok]
        self._mean[ok] += delta / self.present[ok]
        self._m2[ok] += delta * (x - self._mean[ok])
        self._min[ok] = np.minimum(self._min[ok], x)
        self._max[ok] = np.maximum(self._max[ok], x)

    def update_many(self, points) -> None:
        for row in np.atleast_2d(np.asarray(points, dtype=np.float64)):
            self.update(row)

    @property
    def count(self) -> int:
        return self.n

    @property
    def mean(self) -> np.ndarray:
        return self._mean.copy()

    @property
    def observed_range(self) -> np.ndarray:
        rng = self._max - self._min
        return np.where(np.isfinite(rng), rng, 0.0)

    @property
    def epsilon(self) -> np.ndarray:
        """Per-dimension floor: 1e-9 x observed range (1.0 when degenerate)."""
        rng = self.observed_range
        return EPSILON_SCALE * np.where(rng > 0, rng, 1.0)

    @property
    def stddev(self) -> np.ndarray:
        var = np.where(self.present > 0, self._m2 / np.maximum(self.present, 1), 0.0)
        return np.maximum(np.sqrt(var), self.epsilon)


def _as_matrix(points, dim: int) -> np.ndarray:
    mat = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if mat.shape[1] < dim:
        raise DimensionError(f"points have dim {mat.shape[1]}, box needs {dim}")
    return mat[:, :dim]


class BoundingBox:
    """Axis-aligned hypercuboid over a subset of dimensions.

    Immutable: extension, expansion and union all return new boxes. ``lo`` and
    ``hi`` hold nan in inactive dimensions.
    """

    __slots__ = ("mode", "dim", "active", "lo", "hi")

    def __init__(self, mode: BoxMode, dim: int, active=None, lo=None, hi=None):
        if dim <= 0:
            raise DimensionError("box dimension must be positive")
        self.mode = BoxMode(mode)
        self.dim = dim
        self.active = (
            np.zeros(dim, dtype=bool) if active is None
            else np.asarray(active, dtype=bool).copy()
        )
        self.lo = np.full(dim, np.nan) if lo is None else np.asarray(lo, dtype=np.float64).copy()
        self.hi = np.full(dim, np.nan) if hi is None else np.asarray(hi, dtype=np.float64).copy()
        act = self.active
        if np.any(self.lo[act] > self.hi[act]):
            raise ValueError("box has lo > hi in an active dimension")
        for arr in (self.active, self.lo, self.hi):
            arr.setflags(write=False)

    @classmethod
    def empty(cls, mode: BoxMode, dim: int) -> "BoundingBox":
        return cls(mode, dim)

    @property
    def is_empty(self) -> bool:
        return not self.active.any()

    @property
    def active_dims(self) -> np.ndarray:
        return np.nonzero(self.active)[0]

    def __eq__(self, other):
        if not isinstance(other, BoundingBox):
            return NotImplemented
        return (
            self.mode is other.mode
            and self.dim == other.dim
            and np.array_equal(self.active, other.active)
            and np.array_equal(self.lo[self.active], other.lo[other.active])
            and np.array_equal(self.hi[self.active], other.hi[other.active])
        )

    def __repr__(self):
        return (f"BoundingBox({self.mode.value}, dim={self.dim}, "
                f"active={self.active_dims.tolist()})")

    # -- construction -----------------------------------------------------

    def _activating(self, mat: np.ndarray) -> np.ndarray:
        """Entries allowed to create or widen bounds under this mode."""
        ok = ~np.isnan(mat)
        if self.mode is BoxMode.LOWER:
            return ok & (mat != 0.0)
        return ok

    def extend(self, v) -> "BoundingBox":
        return self.extend_many(np.atleast_2d(np.asarray(v, dtype=np.float64)))

    def extend_many(self, points) -> "BoundingBox":
        """Widen the box to cover every point, activating dims per mode."""
        mat = _as_matrix(points, self.dim)
        if self.mode is not BoxMode.PARTIAL and np.isnan(mat).any():
            raise MissingDataError(
                f"{self.mode.value} boxes cannot be extended with missing entries"
            )
        activating = self._activating(mat)
        seen = activating.any(axis=0)
        colmin = np.where(activating, mat, np.inf).min(axis=0)
        colmax = np.where(activating, mat, -np.inf).max(axis=0)
        active = self.active | seen
        cur_lo = np.where(self.active, self.lo, np.inf)
        cur_hi = np.where(self.active, self.hi, -np.inf)
        lo = np.where(active, np.minimum(cur_lo, np.where(seen, colmin, np.inf)), np.nan)
        hi = np.where(active, np.maximum(cur_hi, np.where(seen, colmax, -np.inf)), np.nan)
        return BoundingBox(self.mode, self.dim, active, lo, hi)

    def union(self, other: "BoundingBox") -> "BoundingBox":
        if self.mode is not other.mode or self.dim != other.dim:
            raise DimensionError("union requires boxes of the same mode and dim")
        active = self.active | other.active
        a_lo = np.where(self.active, self.lo, np.inf)
        b_lo = np.where(other.active, other.lo, np.inf)
        a_hi = np.where(self.active, self.hi, -np.inf)
        b_hi = np.where(other.active, other.hi, -np.inf)
        lo = np.where(active, np.minimum(a_lo, b_lo), np.nan)
        hi = np.where(active, np.maximum(a_hi, b_hi), np.nan)
        return BoundingBox(self.mode, self.dim, active, lo, hi)

    def expansion_margins(self, fraction: float, stats: DimStats | None = None) -> np.ndarray:
        """Per-dimension outward move: fraction x that dimension's range.

        The range is floored at the statistics epsilon, so expanding a
        point-like box still opens a sliver of volume and repeated expansions
        stay monotone in the fraction.
        """
        if fraction < 0:
            raise ValueError("expansion fraction must be >= 0")
        rng = np.where(self.active, self.hi - self.lo, 0.0)
        eps = stats.epsilon if stats is not None else np.full(self.dim, EPSILON_SCALE)
        return np.where(self.active, fraction * np.maximum(rng, eps), 0.0)

    def expand(self, fraction: float, stats: DimStats | None = None) -> "BoundingBox":
        margins = self.expansion_margins(fraction, stats)
        lo = np.where(self.active, self.lo - margins, np.nan)
        hi = np.where(self.active, self.hi + margins, np.nan)
        return BoundingBox(self.mode, self.dim, self.active, lo, hi)

    # -- queries ----------------------------------------------------------

    def _violations(self, mat: np.ndarray) -> np.ndarray:
        """Boolean (n, dim) matrix of constraint violations. nan never violates."""
        with np.errstate(invalid="ignore"):
            out = (mat < self.lo) | (mat > self.hi)
        out &= self.active
        if self.mode is BoxMode.LOWER:
            out &= mat != 0.0
        return out

    def contains(self, v) -> bool:
        return bool(self.contains_many(np.atleast_2d(np.asarray(v, dtype=np.float64)))[0])

    def contains_many(self, points) -> np.ndarray:
        """True per point when no active, constraining entry falls outside.

        Missing entries never constrain; in LOWER mode zero entries never
        constrain either (mirroring the construction rule). A box with no
        active dimension contains everything.
        """
        mat = _as_matrix(points, self.dim)
        return ~self._violations(mat).any(axis=1)

    def diagonal(self) -> float:
        """Euclidean length of the active-dims extent vector."""
        if self.is_empty:
            return 0.0
        rng = (self.hi - self.lo)[self.active]
        return float(np.sqrt((rng * rng).sum()))


def points_to_box_distance(points, box: BoundingBox, metric: Metric = Metric.L2,
                           stats: DimStats | None = None) -> np.ndarray:
    """Vectorised nearest-boundary distance from each point to the box.

    Zero exactly when the box contains the point. Per dimension the gap is
    max(lo - v, 0, v - hi) over active dims with a constraining value; the
    requested metric is applied to the gap vector. Raises
    NoSharedSubspaceError for a point with no present value in any active
    dimension of a non-empty box, since no gap is measurable there.
    """
    metric = Metric(metric)
    mat = _as_matrix(points, box.dim)
    n = mat.shape[0]
    if box.is_empty:
        return np.zeros(n)
    pres = present_mask(mat) & box.active
    if not pres.any(axis=1).all():
        raise NoSharedSubspaceError(
            "a point has no present value in any active box dimension"
        )
    constrain = pres.copy()
    if box.mode is BoxMode.LOWER:
        constrain &= mat != 0.0
    with np.errstate(invalid="ignore"):
        below = np.where(constrain, box.lo - mat, 0.0)
        above = np.where(constrain, mat - box.hi, 0.0)
    gaps = np.maximum(np.maximum(below, above), 0.0)
    gaps = np.where(constrain, gaps, 0.0)
    if metric is Metric.MAHALANOBIS:
        if stats is None:
            raise ValueError("Mahalanobis distance requires DimStats")
        gaps = gaps / stats.stddev
        return np.sqrt((gaps * gaps).sum(axis=1))
    p = _METRIC_ORDER[metric]
    if p == 0:
        return np.count_nonzero(gaps, axis=1).astype(np.float64)
    if p == 1:
        return gaps.sum(axis=1)
    if p == 2:
        return np.sqrt((gaps * gaps).sum(axis=1))
    return gaps.max(axis=1)


def point_to_box_distance(v, box: BoundingBox, metric: Metric = Metric.L2,
                          stats: DimStats | None = None) -> float:
    return float(points_to_box_distance(
        np.atleast_2d(np.asarray(v, dtype=np.float64)), box, metric, stats)[0])
