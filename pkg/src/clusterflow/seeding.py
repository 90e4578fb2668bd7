"""Flat clustering used to propose level-1 clusters: k-means, k-means++, detK.

All routines are deterministic given ``rng_seed`` and operate on complete
matrices (the tree imputes missing values before seeding). Distances are
squared Euclidean throughout; inertia is the sum of squared distances of each
point to its assigned centroid.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DegenerateSeedError, EmptyInputError, MissingDataError

__all__ = ["SeedConfig", "FlatClustering", "kmeans", "kmeanspp_init", "detk",
           "flat_cluster", "impute_columns"]

# Pham-Dimov-Nguyen acceptance threshold: the smallest k with f(k) below this
# wins; otherwise k stays 1.
FK_THRESHOLD = 0.85


@dataclass(frozen=True)
class SeedConfig:
    algorithm: str = "detk"  # kmeans | kmeanspp | detk
    k: int = 1
    k_max: int = 8
    max_iters: int = 100
    rng_seed: int = 0
    tolerance: float = 1e-6
    n_init: int = 4  # restarts per run; best inertia wins (detK needs
    #                  well-converged inertias, single runs are too noisy)

    def __post_init__(self):
        if self.algorithm not in ("kmeans", "kmeanspp", "detk"):
            raise ValueError(f"unknown seeding algorithm {self.algorithm!r}")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.k_max < 2:
            raise ValueError("k_max must be >= 2")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be > 0")
        if self.n_init < 1:
            raise ValueError("n_init must be >= 1")


@dataclass
class FlatClustering:
    centroids: np.ndarray          # (k, dim)
    assignment: np.ndarray         # (n,) centroid index per point
    inertia: float
    fk_curve: Optional[dict] = field(default=None)       # detK evaluation per k
    inertia_curve: Optional[dict] = field(default=None)  # detK inertia per k

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    def groups(self) -> list:
        """Point indices per centroid, in centroid order."""
        return [np.nonzero(self.assignment == j)[0] for j in range(self.k)]


def impute_columns(points: np.ndarray) -> np.ndarray:
    """Replace missing entries with the column mean of present values.

    Columns with no present value become zero. Used for centroid math only;
    the original vectors keep their missingness.
    """
    points = np.asarray(points, dtype=np.float64)
    out = points.copy()
    miss = np.isnan(out)
    if miss.any():
        present = ~miss
        counts = np.maximum(present.sum(axis=0), 1)
        means = np.where(present, out, 0.0).sum(axis=0) / counts
        means = np.where(present.any(axis=0), means, 0.0)
        out[miss] = np.broadcast_to(means, out.shape)[miss]
    return out


def _check_points(points) -> np.ndarray:
    mat = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if mat.size == 0:
        raise EmptyInputError("seeding needs at least one point")
    if np.isnan(mat).any():
        raise MissingDataError("seeding requires complete vectors; impute first")
    return mat


def _sq_dists(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances, (n, k)."""
    diff = points[:, None, :] - centroids[None, :, :]
    return (diff * diff).sum(axis=2)


def _n_distinct(points: np.ndarray) -> int:
    return np.unique(points, axis=0).shape[0]


def kmeanspp_init(points, k: int, rng_seed: int = 0) -> np.ndarray:
    """D^2-weighted seeding: each next centroid is sampled with probability
    proportional to its squared distance to the nearest centroid so far."""
    mat = _check_points(points)
    rng = np.random.default_rng(rng_seed)
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > _n_distinct(mat):
        raise DegenerateSeedError(f"k={k} exceeds {_n_distinct(mat)} distinct points")
    chosen = [int(rng.integers(mat.shape[0]))]
    best = _sq_dists(mat, mat[chosen])[:, 0]
    while len(chosen) < k:
        total = best.sum()
        if total <= 0.0:
            raise DegenerateSeedError("no distinct point left to seed from")
        idx = int(np.searchsorted(np.cumsum(best), rng.random() * total))
        idx = min(idx, mat.shape[0] - 1)
        chosen.append(idx)
        best = np.minimum(best, _sq_dists(mat, mat[[idx]])[:, 0])
    return mat[chosen].copy()


def _uniform_init(mat: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    distinct = np.unique(mat, axis=0)
    if k > distinct.shape[0]:
        raise DegenerateSeedError(f"k={k} exceeds {distinct.shape[0]} distinct points")
    idx = rng.choice(distinct.shape[0], size=k, replace=False)
    return distinct[np.sort(idx)].copy()


def _repair_empty(mat: np.ndarray, centroids: np.ndarray,
                  assignment: np.ndarray):
    """Reseed empty clusters from the farthest point until none is empty.

    Each repair strictly lowers the inertia (the reseeded point is at
    positive distance from its old centroid and zero from the new one), so
    this terminates. Requires k <= number of distinct points.
    """
    while True:
        empty = [j for j in range(centroids.shape[0])
                 if not (assignment == j).any()]
        if not empty:
            return centroids, assignment
        d2 = _sq_dists(mat, centroids)
        far = int(d2[np.arange(mat.shape[0]), assignment].argmax())
        centroids = centroids.copy()
        centroids[empty[0]] = mat[far]
        assignment = _sq_dists(mat, centroids).argmin(axis=1)


def _lloyd(mat: np.ndarray, centroids: np.ndarray, cfg: SeedConfig) -> FlatClustering:
    prev_inertia = np.inf
    assignment = np.zeros(mat.shape[0], dtype=np.int64)
    for _ in range(cfg.max_iters):
        d2 = _sq_dists(mat, centroids)
        assignment = d2.argmin(axis=1)  # ties: lowest centroid index
        centroids, assignment = _repair_empty(mat, centroids, assignment)
        d2 = _sq_dists(mat, centroids)
        inertia = float(d2[np.arange(mat.shape[0]), assignment].sum())
        assert inertia <= prev_inertia + 1e-9 * (1.0 + prev_inertia), \
            "k-means inertia increased"
        prev_inertia = inertia
        new_centroids = np.vstack([
            mat[assignment == j].mean(axis=0) for j in range(centroids.shape[0])
        ])
        movement = np.sqrt(((new_centroids - centroids) ** 2).sum(axis=1)).max()
        centroids = new_centroids
        if movement < cfg.tolerance:
            break
    d2 = _sq_dists(mat, centroids)
    assignment = d2.argmin(axis=1)
    centroids, assignment = _repair_empty(mat, centroids, assignment)
    d2 = _sq_dists(mat, centroids)
    inertia = float(d2[np.arange(mat.shape[0]), assignment].sum())
    return FlatClustering(centroids, assignment, inertia)


def kmeans(points, cfg: SeedConfig, k: int | None = None,
           init: np.ndarray | None = None) -> FlatClustering:
    """Lloyd iterations, restarted ``n_init`` times; the lowest-inertia run
    wins. A provided ``init`` runs exactly once."""
    mat = _check_points(points)
    k = cfg.k if k is None else k
    if k > _n_distinct(mat):
        raise DegenerateSeedError(f"k={k} exceeds {_n_distinct(mat)} distinct points")
    if init is not None:
        if k != init.shape[0]:
            raise ValueError("init centroid count disagrees with k")
        return _lloyd(mat, init.astype(np.float64), cfg)
    rng = np.random.default_rng(cfg.rng_seed)
    restart_seeds = rng.integers(0, 2**63 - 1, size=cfg.n_init)
    best = None
    for seed in restart_seeds:
        if cfg.algorithm == "kmeanspp":
            start = kmeanspp_init(mat, k, int(seed))
        else:
            start = _uniform_init(mat, k, np.random.default_rng(int(seed)))
        run = _lloyd(mat, start, cfg)
        if best is None or run.inertia < best.inertia:
            best = run
    return best


def _fk_alpha(k: int, dim: int) -> float:
    """Weight factor recurrence of the f(K) evaluation criterion."""
    alpha = 1.0 - 3.0 / (4.0 * dim)
    for _ in range(3, k + 1):
        alpha = alpha + (1.0 - alpha) / 6.0
    return alpha


def detk(points, cfg: SeedConfig, k_cap: int | None = None) -> FlatClustering:
    """Run k-means for k = 1..k_max and pick k by the f(K) criterion.

    f(1) = 1; for k >= 2, f(k) = S_k / (alpha_k * S_{k-1}) with S_k the
    inertia at k (f(k) = 1 where S_{k-1} vanishes). The smallest k with
    f(k) < 0.85 wins, defaulting to k = 1. The evaluated curve is recorded on
    the returned clustering.
    """
    mat = _check_points(points)
    n, dim = mat.shape
    hi = min(cfg.k_max, n, _n_distinct(mat))
    if k_cap is not None:
        hi = min(hi, max(1, k_cap))
    rng = np.random.default_rng(cfg.rng_seed)
    child_seeds = rng.integers(0, 2**63 - 1, size=max(hi, 1))
    runs = {}
    curve = {}
    prev_s = None
    for k in range(1, hi + 1):
        if k == 1:
            run = _lloyd(mat, mat.mean(axis=0, keepdims=True), cfg)
        else:
            sub = np.random.default_rng(int(child_seeds[k - 1]))
            run = None
            for seed in sub.integers(0, 2**63 - 1, size=cfg.n_init):
                trial = _lloyd(mat, kmeanspp_init(mat, k, int(seed)), cfg)
                if run is None or trial.inertia < run.inertia:
                    run = trial
        runs[k] = run
        if k == 1:
            curve[k] = 1.0
        elif prev_s == 0.0:
            curve[k] = 1.0
        else:
            curve[k] = run.inertia / (_fk_alpha(k, dim) * prev_s)
        prev_s = run.inertia
    chosen = 1
    for k in range(2, hi + 1):
        if curve[k] < FK_THRESHOLD:
            chosen = k
            break
    result = runs[chosen]
    result.fk_curve = curve
    result.inertia_curve = {k: runs[k].inertia for k in runs}
    return result


def flat_cluster(points, cfg: SeedConfig, k_cap: int | None = None) -> FlatClustering:
    """Dispatch on cfg.algorithm. ``k_cap`` bounds the cluster count from
    above without touching the config (used for very small member sets)."""
    if cfg.algorithm == "detk":
        return detk(points, cfg, k_cap=k_cap)
    k = cfg.k if k_cap is None else max(1, min(cfg.k, k_cap))
    return kmeans(points, cfg, k=k)
