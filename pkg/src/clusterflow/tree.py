"""Recursive hypercuboid cluster tree over labelled activation vectors.

Build pipeline: per-label level-1 clusters (flat seeding), a world cluster
enclosing them, batched allocation of every point with point-witnessed merging
of overlapping siblings, recursive refinement of mixed clusters until every
leaf is pure or irreducibly mixed, and a final batch that places the pooled
singleton activations.

The finished tree is immutable by convention and safe for concurrent readers.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterator, Optional

import numpy as np

from .errors import DimensionError, EmptyDatasetError, NoSharedSubspaceError
from .geometry import (
    BoundingBox,
    BoxMode,
    DimStats,
    Metric,
    point_to_box_distance,
    vec,
)
from .seeding import SeedConfig, flat_cluster, impute_columns, kmeans

__all__ = ["Activation", "Cluster", "ClusterStatus", "ClusterTree", "BuildConfig",
           "build", "build_level1", "build_world", "allocate", "refine"]


class ClusterStatus(str, Enum):
    PURE = "pure"
    MIXED = "mixed"
    IRREDUCIBLE = "irreducible_mixed"


@dataclass(frozen=True, eq=False)
class Activation:
    """One data point: feature vector, non-empty label set, source id."""

    features: np.ndarray
    labels: frozenset
    source_id: str

    @classmethod
    def make(cls, features, labels, source_id: str) -> "Activation":
        labels = frozenset(str(l) for l in labels)
        if not labels:
            raise ValueError(f"activation {source_id!r} has no labels")
        f = vec(features)
        f.setflags(write=False)
        return cls(f, labels, str(source_id))


@dataclass
class Cluster:
    """Tree node: box, member activations, children and purity status."""

    box: BoundingBox
    members: list
    children: list = field(default_factory=list)
    status: ClusterStatus = ClusterStatus.MIXED
    common_labels: frozenset = frozenset()
    label_histogram: dict = field(default_factory=dict)
    stats: Optional[DimStats] = None
    node_id: str = ""
    member_ids: tuple = ()

    @property
    def is_leaf(self) -> bool:
        return not self.children

    @property
    def n_members(self) -> int:
        return len(self.members) if self.members else len(self.member_ids)

    def walk(self) -> Iterator["Cluster"]:
        yield self
        for child in self.children:
            yield from child.walk()

    def leaves(self) -> Iterator["Cluster"]:
        return (node for node in self.walk() if node.is_leaf)


@dataclass(frozen=True)
class BuildConfig:
    metric: Metric = Metric.L2
    box_mode: BoxMode = BoxMode.LOWER
    expand_fraction: float = 0.10
    seed_config: SeedConfig = field(default_factory=SeedConfig)
    batch_size: int = 4096
    max_depth: int = 32
    rng_seed: int = 0

    def __post_init__(self):
        if self.expand_fraction < 0:
            raise ValueError("expand_fraction must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")


@dataclass
class ClusterTree:
    """The built model: world cluster plus global statistics and config."""

    root: Cluster
    build_config: BuildConfig
    global_stats: DimStats
    label_dictionary: dict = field(default_factory=dict)
    rejects: tuple = ()
    dim: int = 0

    def walk(self) -> Iterator[Cluster]:
        return self.root.walk()

    def leaves(self) -> list:
        return list(self.root.leaves())


# ---------------------------------------------------------------------------
# helpers

def _features_of(members) -> np.ndarray:
    return np.vstack([a.features for a in members])


def _common_labels(members) -> frozenset:
    it = iter(members)
    common = set(next(it).labels)
    for a in it:
        common &= a.labels
        if not common:
            break
    return frozenset(common)


def _histogram(members) -> dict:
    hist = {}
    for a in members:
        for label in a.labels:
            hist[label] = hist.get(label, 0) + 1
    return {label: hist[label] for label in sorted(hist)}


def _refresh(cluster: Cluster) -> None:
    """Recompute status, common labels, histogram and stats from members."""
    members = cluster.members
    if not members:
        cluster.status = ClusterStatus.MIXED
        cluster.common_labels = frozenset()
        cluster.label_histogram = {}
        return
    common = _common_labels(members)
    cluster.common_labels = common
    cluster.label_histogram = _histogram(members)
    cluster.stats = DimStats.from_points(_features_of(members))
    if cluster.status is not ClusterStatus.IRREDUCIBLE:
        cluster.status = ClusterStatus.PURE if common else ClusterStatus.MIXED
    elif common:
        cluster.status = ClusterStatus.PURE


def _make_cluster(members, cfg: BuildConfig, global_stats: DimStats,
                  dim: int, box: BoundingBox | None = None) -> Cluster:
    """Cluster whose box covers the members and is expanded by the configured
    fraction; a provided box is union-extended over the members instead."""
    feats = _features_of(members)
    if box is None:
        box = BoundingBox.empty(cfg.box_mode, dim).extend_many(feats)
        box = box.expand(cfg.expand_fraction, global_stats)
    else:
        box = box.extend_many(feats)
    cluster = Cluster(box=box, members=list(members))
    _refresh(cluster)
    return cluster


def _absorb(cluster: Cluster, activation: Activation) -> None:
    """Incrementally add one activation to a non-empty cluster: membership,
    label bookkeeping, statistics and box coverage."""
    if not any(m is activation for m in cluster.members):
        cluster.members.append(activation)
        cluster.common_labels = frozenset(cluster.common_labels & activation.labels)
        hist = dict(cluster.label_histogram)
        for label in activation.labels:
            hist[label] = hist.get(label, 0) + 1
        cluster.label_histogram = {l: hist[l] for l in sorted(hist)}
        if cluster.stats is not None:
            cluster.stats.update(activation.features)
        if cluster.status is ClusterStatus.PURE and not cluster.common_labels:
            cluster.status = ClusterStatus.MIXED
    _cover_point(cluster, activation)


def _cover_point(cluster: Cluster, activation: Activation) -> None:
    """Widen the cluster box to cover one more point. If the point activates
    dimensions the box lacked, re-extend over all members so none is ejected
    by the freshly constrained dimension."""
    box = cluster.box
    if box.contains(activation.features):
        return
    probe = box.extend(activation.features)
    new_dims = probe.active & ~box.active
    if new_dims.any() and cluster.members:
        cluster.box = box.extend_many(
            np.vstack([_features_of(cluster.members), activation.features[None, :]])
        )
    else:
        cluster.box = probe


def _child_seed(rng_seed: int, tag: str) -> int:
    return (rng_seed * 1_000_003 + zlib.crc32(tag.encode("utf-8"))) % (2**63 - 1)


def _coincident(feats: np.ndarray) -> bool:
    first = feats[0]
    same = (feats == first) | (np.isnan(feats) & np.isnan(first))
    return bool(same.all())


# ---------------------------------------------------------------------------
# build stages

def build_level1(dataset, cfg: BuildConfig, global_stats: DimStats):
    """Flat-cluster each label's activations separately into level-1 clusters.

    An activation with several labels takes part in every one of its labels'
    runs. Labels with fewer than two activations cannot form a cluster, so
    their points may end up in no cluster at all; those are returned as the
    deferred pool.
    """
    dim = dataset[0].features.shape[0]
    by_label = {}
    for a in dataset:
        for label in a.labels:
            by_label.setdefault(label, []).append(a)
    clusters = []
    covered = set()
    for label in sorted(by_label):
        carriers = by_label[label]
        if len(carriers) < 2:
            continue
        feats = impute_columns(_features_of(carriers))
        seed_cfg = replace(cfg.seed_config,
                           rng_seed=_child_seed(cfg.rng_seed, f"level1:{label}"))
        flat = flat_cluster(feats, seed_cfg, k_cap=len(carriers) // 2)
        for group in flat.groups():
            group_members = [carriers[i] for i in group]
            clusters.append(_make_cluster(group_members, cfg, global_stats, dim))
            covered.update(id(a) for a in group_members)
    pool = [a for a in dataset if id(a) not in covered]
    return clusters, pool


def build_world(level1, dataset, cfg: BuildConfig, global_stats: DimStats) -> Cluster:
    """The world cluster: slightly bigger than the union of level-1 boxes
    (or, with no level-1 cluster, than the raw data extent)."""
    dim = dataset[0].features.shape[0]
    if level1:
        box = level1[0].box
        for cluster in level1[1:]:
            box = box.union(cluster.box)
    else:
        box = BoundingBox.empty(cfg.box_mode, dim).extend_many(_features_of(dataset))
    box = box.expand(cfg.expand_fraction, global_stats)
    world = Cluster(box=box, members=list(dataset), children=list(level1))
    _refresh(world)
    return world


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, i):
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def allocate(batch, siblings, cfg: BuildConfig, global_stats: DimStats):
    """Place every activation into the sibling clusters, merging overlaps.

    Containment is judged against the siblings' original boxes for the whole
    batch (so results do not depend on batch size); any activation contained
    by two or more siblings merges them (box = union, re-extended over the
    merged members). Activations contained by none are attached to the
    nearest sibling, widening it, when within ``expand_fraction x mean box
    diagonal``; beyond that they are pooled for the final batch.

    Returns ``(new_siblings, pooled)``.
    """
    if not siblings:
        return [], list(batch)
    dim = siblings[0].box.dim
    n = len(batch)
    first_hit = np.full(n, -1, dtype=np.int64)
    uf = _UnionFind(len(siblings))
    feats = _features_of(batch)
    for start in range(0, n, cfg.batch_size):
        chunk = feats[start:start + cfg.batch_size]
        hits = np.column_stack([s.box.contains_many(chunk) for s in siblings])
        for row, point_hits in enumerate(hits):
            idx = np.nonzero(point_hits)[0]
            if idx.size:
                first_hit[start + row] = idx[0]
                for other in idx[1:]:
                    uf.union(int(idx[0]), int(other))

    groups = {}
    for j in range(len(siblings)):
        groups.setdefault(uf.find(j), []).append(j)

    group_members = {root: [] for root in groups}
    for i, a in enumerate(batch):
        if first_hit[i] >= 0:
            group_members[uf.find(int(first_hit[i]))].append(a)

    new_siblings = []
    for root in sorted(groups):
        member_list = group_members[root]
        if not member_list:
            continue
        idxs = groups[root]
        if len(idxs) == 1:
            cluster = Cluster(box=siblings[idxs[0]].box, members=member_list)
            _refresh(cluster)
        else:
            box = siblings[idxs[0]].box
            for j in idxs[1:]:
                box = box.union(siblings[j].box)
            cluster = _make_cluster(member_list, cfg, global_stats, dim, box=box)
        new_siblings.append(cluster)

    pooled = []
    unallocated = [batch[i] for i in range(n) if first_hit[i] < 0]
    if unallocated and new_siblings:
        diag = float(np.mean([c.box.diagonal() for c in new_siblings]))
        radius = cfg.expand_fraction * diag
        for a in unallocated:
            best = None
            for j, cluster in enumerate(new_siblings):
                try:
                    d = point_to_box_distance(a.features, cluster.box,
                                              cfg.metric, global_stats)
                except NoSharedSubspaceError:
                    continue
                if best is None or d < best[0]:
                    best = (d, j)
            if best is not None and best[0] <= radius:
                target = new_siblings[best[1]]
                target.members.append(a)
                if best[0] > 0.0:
                    _cover_point(target, a)
            else:
                pooled.append(a)
        for cluster in new_siblings:
            _refresh(cluster)
    else:
        pooled = unallocated
    return new_siblings, pooled


def refine(cluster: Cluster, cfg: BuildConfig, global_stats: DimStats,
           depth: int, pool: list) -> bool:
    """Recursively split a mixed cluster until its leaves are pure or
    irreducibly mixed. Members whose every label has fewer than two carriers
    in this cluster are rejected to the singleton pool first. Returns False
    when the cluster emptied out entirely and should be dropped.
    """
    if cluster.status is not ClusterStatus.MIXED:
        return True
    if depth >= cfg.max_depth:
        cluster.status = ClusterStatus.IRREDUCIBLE
        return True

    counts = _histogram(cluster.members)
    keep, rejected = [], []
    for a in cluster.members:
        if any(counts[label] >= 2 for label in a.labels):
            keep.append(a)
        else:
            rejected.append(a)

    if not keep:
        if _coincident(_features_of(cluster.members)):
            cluster.status = ClusterStatus.IRREDUCIBLE
            return True
        pool.extend(rejected)
        return False

    if rejected:
        pool.extend(rejected)
        cluster.members = keep
        _refresh(cluster)
        if cluster.status is ClusterStatus.PURE:
            return True

    feats = _features_of(cluster.members)
    if _coincident(feats):
        cluster.status = ClusterStatus.IRREDUCIBLE
        return True

    seed_cfg = replace(cfg.seed_config,
                       rng_seed=_child_seed(cfg.rng_seed, f"refine:{cluster.node_id}"))
    imputed = impute_columns(feats)
    n_members = len(cluster.members)
    n_distinct = np.unique(imputed, axis=0).shape[0]
    dim = cluster.box.dim

    flat = flat_cluster(imputed, seed_cfg, k_cap=n_members // 2)
    k_try = flat.k
    while True:
        if k_try < 2:
            # no natural structure found, but a mixed cluster must still be
            # broken down: force a two-way split
            if n_distinct < 2:
                cluster.status = ClusterStatus.IRREDUCIBLE
                return True
            k_try = 2
            flat = kmeans(imputed, replace(seed_cfg, algorithm="kmeans"), k=2)
        proposals = [
            _make_cluster([cluster.members[i] for i in group], cfg,
                          global_stats, dim)
            for group in flat.groups() if group.size
        ]
        children, pooled = allocate(cluster.members, proposals, cfg, global_stats)
        if not (len(children) == 1 and len(children[0].members) == n_members):
            break
        # every piece merged straight back: the overlap graph is connected at
        # this granularity, so split finer before calling it irreducible
        next_k = min(2 * k_try, n_members // 2, n_distinct)
        if next_k <= k_try:
            cluster.status = ClusterStatus.IRREDUCIBLE
            return True
        flat = kmeans(imputed, replace(seed_cfg, algorithm="kmeans"), k=next_k)
        k_try = next_k
    pool.extend(pooled)
    survivors = []
    dropped = set()
    for i, child in enumerate(children):
        child.node_id = f"{cluster.node_id}.{i}"
        scope_ids = [id(m) for m in child.members]  # before refine mutates it
        if refine(child, cfg, global_stats, depth + 1, pool):
            survivors.append(child)
        else:
            # the whole child dissolved into the singleton pool; its members
            # are no longer anywhere in this subtree
            dropped.update(scope_ids)
    cluster.children = survivors
    if not survivors:
        return False
    if dropped:
        cluster.members = [m for m in cluster.members if id(m) not in dropped]
        if not cluster.members:
            return False
        _refresh(cluster)
    return True


def _final_batch(root: Cluster, pool, cfg: BuildConfig,
                 global_stats: DimStats) -> list:
    """Run the pooled singletons as one last batch: attach each to the
    nearest pure leaf sharing a label when close enough, otherwise give it a
    one-point leaf of its own under the deepest containing internal node.
    Returns the source ids that could not be attached (the rejects)."""
    rejects = []
    if not pool:
        return rejects

    parents = {}
    for node in root.walk():
        for child in node.children:
            parents[id(child)] = node
    leaves = [node for node in root.walk() if node.is_leaf and node is not root]
    diag = float(np.mean([l.box.diagonal() for l in leaves])) if leaves else 0.0
    radius = cfg.expand_fraction * diag

    def ancestors_of(node):
        chain = []
        cur = parents.get(id(node))
        while cur is not None:
            chain.append(cur)
            cur = parents.get(id(cur))
        return chain

    for a in pool:
        best = None
        for i, leaf in enumerate(leaves):
            if leaf.status is not ClusterStatus.PURE:
                continue
            if not (leaf.common_labels & a.labels):
                continue
            try:
                d = point_to_box_distance(a.features, leaf.box,
                                          cfg.metric, global_stats)
            except NoSharedSubspaceError:
                continue
            if best is None or d < best[0]:
                best = (d, i)
        if best is not None and best[0] <= radius:
            leaf = leaves[best[1]]
            _absorb(leaf, a)
            for anc in ancestors_of(leaf):
                _absorb(anc, a)
            continue

        # own one-point leaf under the deepest containing internal node
        dim = root.box.dim
        box = BoundingBox.empty(cfg.box_mode, dim).extend(a.features)
        box = box.expand(cfg.expand_fraction, global_stats)
        new_leaf = Cluster(box=box, members=[a])
        _refresh(new_leaf)

        target, target_depth = root, 0
        stack = [(root, 0)]
        while stack:
            node, d = stack.pop()
            if node.children and node.box.contains(a.features) and d > target_depth:
                target, target_depth = node, d
            for child in reversed(node.children):
                stack.append((child, d + 1))
        target.children.append(new_leaf)
        parents[id(new_leaf)] = target
        _absorb(target, a)
        for anc in ancestors_of(target):
            _absorb(anc, a)
        leaves.append(new_leaf)
        rejects.append(a.source_id)
    return rejects


def _assign_ids(root: Cluster) -> None:
    root.node_id = "C0"
    stack = [root]
    while stack:
        node = stack.pop()
        node.member_ids = tuple(a.source_id for a in node.members)
        for i, child in enumerate(node.children):
            child.node_id = f"{node.node_id}.{i}"
            stack.append(child)


def build(dataset, cfg: BuildConfig | None = None,
          label_dictionary: dict | None = None) -> ClusterTree:
    """Construct the full cluster tree for a dataset of activations."""
    cfg = cfg or BuildConfig()
    dataset = list(dataset)
    if not dataset:
        raise EmptyDatasetError("cannot build a tree over zero activations")
    dim = dataset[0].features.shape[0]
    for a in dataset:
        if a.features.shape[0] != dim:
            raise DimensionError(
                f"activation {a.source_id!r} has dim {a.features.shape[0]}, expected {dim}"
            )

    global_stats = DimStats.from_points(_features_of(dataset))
    level1, deferred = build_level1(dataset, cfg, global_stats)
    root = build_world(level1, dataset, cfg, global_stats)

    if level1:
        children, pool = allocate(dataset, level1, cfg, global_stats)
        root.children = children
    else:
        root.children = []
        pool = list(deferred)

    _assign_ids(root)  # provisional ids give refine deterministic seeds
    survivors = []
    for child in root.children:
        if refine(child, cfg, global_stats, 1, pool):
            survivors.append(child)
    root.children = survivors

    rejects = _final_batch(root, pool, cfg, global_stats)
    _assign_ids(root)
    return ClusterTree(
        root=root,
        build_config=cfg,
        global_stats=global_stats,
        label_dictionary=dict(label_dictionary or {}),
        rejects=tuple(rejects),
        dim=dim,
    )
