"""Label guessing against a built cluster tree.

Resolution order for a query vector:

1. outside the world cluster's box: refuse to guess (all-NaN, out-of-world);
2. inside a pure cluster: that cluster's common labels at full confidence,
   the deepest such cluster winning;
3. inside some mixed node below the root: the deepest containing node's
   labels in order of majority, confidence = histogram share;
4. inside the world box only: the nearest leaf clusters weighted by
   closeness (inverse boundary distance), each leaf's weight spread over its
   labels by histogram share.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DimensionError, EmptyInputError, NoSharedSubspaceError
from .geometry import Metric, point_to_box_distance
from .tree import Cluster, ClusterStatus, ClusterTree

__all__ = ["Guess", "guess", "guess_many", "confidence_histogram",
           "ConfidenceHistogram", "N_NEAR", "WEIGHT_EPS"]

# Number of nearest leaf clusters consulted for an off-cluster query, and the
# epsilon guarding the inverse-distance weights against division by zero.
N_NEAR = 3
WEIGHT_EPS = 1e-12


@dataclass(frozen=True)
class Guess:
    """Ranked (label, confidence) pairs. Out-of-world guesses carry no ranked
    entries and an empty containing path."""

    ranked: tuple
    containing_path: tuple
    out_of_world: bool

    @property
    def top(self):
        return self.ranked[0] if self.ranked else (None, float("nan"))


def _path_to(tree: ClusterTree, node: Cluster) -> tuple:
    path = {id(tree.root): (tree.root.node_id,)}
    for parent in tree.walk():
        for child in parent.children:
            path[id(child)] = path[id(parent)] + (child.node_id,)
    return path[id(node)]


def _histogram_ranking(node: Cluster, top_k: int) -> tuple:
    total = sum(node.label_histogram.values())
    pairs = sorted(node.label_histogram.items(), key=lambda kv: (-kv[1], kv[0]))
    return tuple((label, count / total) for label, count in pairs[:top_k])


def guess(tree: ClusterTree, v, top_k: int = 5,
          metric: Optional[Metric] = None) -> Guess:
    """Guess labels for one vector. ``metric`` overrides the build metric for
    the nearest-cluster weighting step only."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (tree.dim,):
        raise DimensionError(f"query has shape {v.shape}, tree dim is {tree.dim}")
    if not tree.root.box.contains(v):
        return Guess(ranked=(), containing_path=(), out_of_world=True)

    containing = []  # (depth, order, node)
    order = 0
    stack = [(tree.root, 0)]
    while stack:
        node, depth = stack.pop()
        if node.box.contains(v):
            containing.append((depth, order, node))
            order += 1
        for child in reversed(node.children):
            stack.append((child, depth + 1))

    pure = [(d, o, n) for d, o, n in containing if n.status is ClusterStatus.PURE]
    if pure:
        depth, _, node = max(pure, key=lambda t: (t[0], -t[1]))
        labels = sorted(node.common_labels)
        conf = 1.0 / len(labels)
        ranked = tuple((label, conf) for label in labels[:top_k])
        return Guess(ranked=ranked, containing_path=_path_to(tree, node),
                     out_of_world=False)

    deeper = [(d, o, n) for d, o, n in containing if d > 0]
    if deeper:
        depth, _, node = max(deeper, key=lambda t: (t[0], -t[1]))
        return Guess(ranked=_histogram_ranking(node, top_k),
                     containing_path=_path_to(tree, node), out_of_world=False)

    # in the world but in no cluster: weight the nearest leaves by closeness
    metric = Metric(metric) if metric is not None else tree.build_config.metric
    scored = []
    for i, leaf in enumerate(tree.leaves()):
        try:
            d = point_to_box_distance(v, leaf.box, metric, tree.global_stats)
        except NoSharedSubspaceError:
            continue
        scored.append((d, i, leaf))
    scored.sort(key=lambda t: (t[0], t[1]))
    nearest = scored[:N_NEAR]
    if not nearest:
        return Guess(ranked=(), containing_path=(tree.root.node_id,),
                     out_of_world=False)
    inv = np.array([1.0 / (d + WEIGHT_EPS) for d, _, _ in nearest])
    weights = inv / inv.sum()
    label_conf: dict = {}
    for w, (_, _, leaf) in zip(weights, nearest):
        total = sum(leaf.label_histogram.values())
        for label, count in leaf.label_histogram.items():
            label_conf[label] = label_conf.get(label, 0.0) + w * count / total
    pairs = sorted(label_conf.items(), key=lambda kv: (-kv[1], kv[0]))
    ranked = tuple(pairs[:top_k])
    return Guess(ranked=ranked, containing_path=(tree.root.node_id,),
                 out_of_world=False)


def guess_many(tree: ClusterTree, vectors, top_k: int = 5,
               metric: Optional[Metric] = None) -> list:
    return [guess(tree, v, top_k=top_k, metric=metric) for v in vectors]


@dataclass(frozen=True)
class ConfidenceHistogram:
    """Fraction of guesses whose top confidence clears each threshold, plus
    the fraction refused outright (NaN)."""

    rows: tuple          # ((threshold, fraction), ...) thresholds descending
    nan_fraction: float
    n: int


def confidence_histogram(guesses: Sequence[Guess],
                         thresholds: Sequence[float]) -> ConfidenceHistogram:
    if not guesses:
        raise EmptyInputError("confidence histogram over zero guesses")
    thresholds = list(thresholds)
    if thresholds != sorted(thresholds, reverse=True):
        raise ValueError("thresholds must be sorted descending")
    n = len(guesses)
    tops = [g.top[1] for g in guesses]
    nan_count = sum(1 for t in tops if np.isnan(t))
    rows = tuple(
        (t, sum(1 for c in tops if not np.isnan(c) and c > t) / n)
        for t in thresholds
    )
    return ConfidenceHistogram(rows=rows, nan_fraction=nan_count / n, n=n)
