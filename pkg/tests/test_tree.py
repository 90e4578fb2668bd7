"""Build-pipeline tests: level-1 clustering, the world cluster, allocation
with merging, refinement, the final singleton batch, and whole-tree
invariants."""

from collections import Counter
from dataclasses import replace

import numpy as np
import pytest

from clusterflow.errors import EmptyDatasetError
from clusterflow.geometry import BoxMode, DimStats
from clusterflow.seeding import SeedConfig
from clusterflow.tree import (
    Activation,
    BuildConfig,
    Cluster,
    ClusterStatus,
    allocate,
    build,
    build_level1,
    build_world,
    refine,
)
from clusterflow.dataio import dumps_tree

from conftest import blob


def act(features, labels, source_id):
    return Activation.make(features, labels, source_id)


def make_stats(dataset):
    return DimStats.from_points(np.vstack([a.features for a in dataset]))


class TestBuildLevel1:
    def test_two_labels_two_blobs_each(self, rng, default_cfg):
        data = (blob(0.0, 30, 4, "a", rng, prefix="a0_")
                + blob(15.0, 30, 4, "a", rng, prefix="a1_")
                + blob(40.0, 30, 4, "b", rng, prefix="b0_")
                + blob(60.0, 30, 4, "b", rng, prefix="b1_"))
        clusters, pool = build_level1(data, default_cfg, make_stats(data))
        assert len(clusters) == 4
        assert pool == []
        # oracle: per-label runs are independent, so each cluster is pure
        for c in clusters:
            assert c.status is ClusterStatus.PURE

    def test_single_point_label_deferred(self, default_cfg):
        data = [act([0.0, 0.0], {"solo"}, "s0")]
        clusters, pool = build_level1(data, default_cfg, make_stats(data))
        assert clusters == []
        assert pool == data

    def test_identical_points_one_cluster(self, default_cfg):
        data = [act([1.0, 2.0], {"a"}, f"p{i}") for i in range(5)]
        clusters, pool = build_level1(data, default_cfg, make_stats(data))
        assert len(clusters) == 1
        assert pool == []
        box = clusters[0].box
        rng_width = (box.hi - box.lo)[box.active]
        assert (rng_width < 1e-6).all()  # zero-volume up to the epsilon floor

    def test_multi_label_participates_in_every_run(self, rng, default_cfg):
        shared = [act(rng.normal(0, 1, 3), {"a", "b"}, f"ab{i}") for i in range(4)]
        data = shared + blob(0.0, 4, 3, "a", rng) + blob(0.5, 4, 3, "b", rng)
        clusters, _ = build_level1(data, default_cfg, make_stats(data))
        carrier_sets = [frozenset(a.source_id for a in c.members) for c in clusters]
        for s in shared:
            appearances = sum(s.source_id in ids for ids in carrier_sets)
            assert appearances >= 2


class TestBuildWorld:
    def test_strictly_contains_single_cluster(self, rng, default_cfg):
        data = blob(0.0, 10, 3, "a", rng)
        clusters, _ = build_level1(data, default_cfg, make_stats(data))
        world = build_world(clusters, data, default_cfg, make_stats(data))
        inner = clusters[0].box
        act_dims = inner.active
        assert (world.box.lo[act_dims] < inner.lo[act_dims]).all()
        assert (world.box.hi[act_dims] > inner.hi[act_dims]).all()

    def test_zero_expansion_equals_union(self, rng):
        cfg = BuildConfig(expand_fraction=0.0,
                          seed_config=SeedConfig(algorithm="kmeans", k=1))
        data = blob(0.0, 10, 3, "a", rng) + blob(9.0, 10, 3, "b", rng)
        clusters, _ = build_level1(data, cfg, make_stats(data))
        world = build_world(clusters, data, cfg, make_stats(data))
        union = clusters[0].box
        for c in clusters[1:]:
            union = union.union(c.box)
        assert world.box == union

    def test_encloses_every_level1_cluster(self, rng, default_cfg):
        data = blob(0.0, 20, 4, "a", rng) + blob(30.0, 20, 4, "b", rng)
        clusters, _ = build_level1(data, default_cfg, make_stats(data))
        world = build_world(clusters, data, default_cfg, make_stats(data))
        for c in clusters:
            for a in c.members:
                assert world.box.contains(a.features)


class TestAllocate:
    def test_disjoint_boxes_identity(self, rng, default_cfg):
        data = blob(0.0, 20, 3, "a", rng) + blob(50.0, 20, 3, "b", rng)
        stats = make_stats(data)
        clusters, _ = build_level1(data, default_cfg, stats)
        out, pooled = allocate(data, clusters, default_cfg, stats)
        assert len(out) == len(clusters)
        assert pooled == []
        assert all(c.status is ClusterStatus.PURE for c in out)

    def test_overlap_merges_into_mixed(self, rng, default_cfg):
        # two labels whose blobs overlap in the middle: the witnessing points
        # sit inside both boxes, so the siblings merge into one mixed cluster
        data = blob(0.0, 40, 3, "a", rng) + blob(1.0, 40, 3, "b", rng)
        stats = make_stats(data)
        clusters, _ = build_level1(data, default_cfg, stats)
        out, _ = allocate(data, clusters, default_cfg, stats)
        assert len(out) < len(clusters)
        assert any(c.status is ClusterStatus.MIXED for c in out)

    def test_batched_equals_unbatched(self, rng):
        data = []
        for i in range(500):
            label = "a" if i % 2 else "b"
            center = 0.0 if label == "a" else 6.0
            data.append(act(rng.normal(center, 2.0, 5), {label}, f"p{i}"))
        stats = make_stats(data)
        results = []
        for batch_size in (1, 64, len(data)):
            cfg = BuildConfig(batch_size=batch_size,
                              seed_config=SeedConfig(algorithm="detk", k_max=3))
            clusters, _ = build_level1(data, cfg, stats)
            out, pooled = allocate(data, clusters, cfg, stats)
            results.append((
                [tuple(a.source_id for a in c.members) for c in out],
                tuple(a.source_id for a in pooled),
            ))
        assert results[0] == results[1] == results[2]


class TestRefine:
    def test_mixed_splits_into_pure_children(self, rng, default_cfg):
        members = blob(0.0, 20, 3, "a", rng) + blob(30.0, 20, 3, "b", rng)
        stats = make_stats(members)
        cluster = Cluster(
            box=_cover_all(members, default_cfg),
            members=list(members),
        )
        _refresh_for_test(cluster)
        assert cluster.status is ClusterStatus.MIXED
        pool = []
        assert refine(cluster, default_cfg, stats, 1, pool)
        assert pool == []
        leaves = [n for n in cluster.walk() if n.is_leaf]
        assert len(leaves) == 2
        assert all(l.status is ClusterStatus.PURE for l in leaves)

    def test_coincident_two_labels_irreducible(self, default_cfg):
        members = [act([1.0, 1.0], {"a"}, "x"), act([1.0, 1.0], {"b"}, "y")]
        cluster = Cluster(box=_cover_all(members, default_cfg), members=members)
        _refresh_for_test(cluster)
        pool = []
        assert refine(cluster, default_cfg, make_stats(members), 1, pool)
        assert cluster.status is ClusterStatus.IRREDUCIBLE
        assert cluster.is_leaf
        assert pool == []

    def test_pure_input_untouched(self, rng, default_cfg):
        members = blob(0.0, 5, 3, "a", rng)
        cluster = Cluster(box=_cover_all(members, default_cfg), members=members)
        _refresh_for_test(cluster)
        before = list(cluster.members)
        refine(cluster, default_cfg, make_stats(members), 1, [])
        assert cluster.members == before and cluster.is_leaf

    def test_depth_exhaustion_marks_irreducible(self, rng):
        cfg = BuildConfig(max_depth=1,
                          seed_config=SeedConfig(algorithm="detk", k_max=4))
        members = blob(0.0, 10, 3, "a", rng) + blob(30.0, 10, 3, "b", rng)
        cluster = Cluster(box=_cover_all(members, cfg), members=members)
        _refresh_for_test(cluster)
        refine(cluster, cfg, make_stats(members), 1, [])
        assert cluster.status is ClusterStatus.IRREDUCIBLE

    def test_singleton_label_rejected_to_pool(self, rng, default_cfg):
        members = blob(0.0, 6, 3, "a", rng) + [act([0.5] * 3, {"z"}, "odd")]
        cluster = Cluster(box=_cover_all(members, default_cfg), members=members)
        _refresh_for_test(cluster)
        pool = []
        refine(cluster, default_cfg, make_stats(members), 1, pool)
        assert [a.source_id for a in pool] == ["odd"]
        assert cluster.status is ClusterStatus.PURE


def _cover_all(members, cfg):
    from clusterflow.geometry import BoundingBox
    feats = np.vstack([a.features for a in members])
    return BoundingBox.empty(cfg.box_mode, feats.shape[1]).extend_many(feats)


def _refresh_for_test(cluster):
    from clusterflow.tree import _refresh
    _refresh(cluster)


class TestBuild:
    def test_empty_dataset(self, default_cfg):
        with pytest.raises(EmptyDatasetError):
            build([], default_cfg)

    def test_training_points_in_pure_leaves(self, two_class_separable, default_cfg):
        tree = build(two_class_separable, default_cfg)
        for leaf in tree.leaves():
            assert leaf.status is ClusterStatus.PURE
        assert tree.rejects == ()

    def test_aab_structure(self, rng, default_cfg):
        items = [act(rng.normal(0, 1, 4), {"a"}, "x"),
                 act(rng.normal(0, 1, 4), {"a"}, "y"),
                 act(rng.normal(25, 1, 4), {"b"}, "z")]
        tree = build(items, default_cfg)
        assert tree.root.status is ClusterStatus.MIXED
        pure2 = [n for n in tree.walk()
                 if n.status is ClusterStatus.PURE and n.n_members == 2]
        assert len(pure2) == 1
        assert tree.rejects == ("z",)

    def test_incomplete_multilabel_build(self, rng):
        cfg = BuildConfig(box_mode=BoxMode.PARTIAL, rng_seed=5,
                          seed_config=SeedConfig(algorithm="detk", k_max=4,
                                                 rng_seed=5))
        labels = ["u", "v", "w", "x"]
        data = []
        for i in range(160):
            g = i % 4
            feats = rng.normal(g * 6.0, 1.0, 10)
            vals = [None if rng.random() < 0.3 else float(v) for v in feats]
            labs = {labels[g]} | ({labels[(g + 1) % 4]} if rng.random() < 0.4 else set())
            data.append(act(vals, labs, f"m{i}"))
        tree = build(data, cfg)
        for leaf in tree.leaves():
            assert leaf.status in (ClusterStatus.PURE, ClusterStatus.IRREDUCIBLE)

    def test_leaf_purity_full_walk(self, rng, default_cfg):
        data = (blob(0.0, 40, 5, "a", rng) + blob(2.0, 40, 5, "b", rng)
                + blob(30.0, 40, 5, "c", rng))
        tree = build(data, default_cfg)
        for leaf in tree.leaves():
            assert leaf.status in (ClusterStatus.PURE, ClusterStatus.IRREDUCIBLE)

    def test_containment_chain(self, rng, default_cfg):
        data = blob(0.0, 50, 4, "a", rng) + blob(3.0, 50, 4, "b", rng)
        tree = build(data, default_cfg)
        for node in tree.walk():
            for child in node.children:
                for a in child.members:
                    assert node.box.contains(a.features)
                    assert child.box.contains(a.features)

    def test_member_conservation(self, rng, default_cfg):
        data = (blob(0.0, 30, 4, "a", rng) + blob(1.5, 30, 4, "b", rng)
                + [act(rng.normal(10, 1, 4), {"solo"}, "lonely")])
        tree = build(data, default_cfg)
        leaf_ids = Counter()
        for leaf in tree.leaves():
            leaf_ids.update(a.source_id for a in leaf.members)
        assert leaf_ids == Counter(a.source_id for a in data)

    def test_purity_recomputation_matches(self, rng, default_cfg):
        data = blob(0.0, 30, 4, "a", rng) + blob(2.0, 30, 4, "b", rng)
        tree = build(data, default_cfg)
        for node in tree.walk():
            common = frozenset.intersection(*(a.labels for a in node.members))
            assert node.common_labels == common
            if node.status is ClusterStatus.PURE:
                assert common
            else:
                assert not common
            hist = Counter()
            for a in node.members:
                hist.update(a.labels)
            assert node.label_histogram == dict(hist)

    def test_determinism_bit_identical(self, two_class_separable, default_cfg):
        t1 = build(two_class_separable, default_cfg)
        t2 = build(two_class_separable, default_cfg)
        assert dumps_tree(t1) == dumps_tree(t2)

    def test_batch_size_invariance(self, rng):
        data = []
        for i in range(500):
            label = ("a", "b", "c")[i % 3]
            center = {"a": 0.0, "b": 4.0, "c": 20.0}[label]
            data.append(act(rng.normal(center, 1.5, 6), {label}, f"q{i}"))
        import json
        shapes = []
        for batch_size in (1, 64, len(data)):
            cfg = BuildConfig(batch_size=batch_size, rng_seed=17,
                              seed_config=SeedConfig(algorithm="detk", k_max=3,
                                                     rng_seed=17))
            doc = json.loads(dumps_tree(build(data, cfg)))
            doc.pop("build_config")  # batch_size itself differs by design
            shapes.append(json.dumps(doc, sort_keys=True))
        assert shapes[0] == shapes[1] == shapes[2]

    def test_world_contains_every_training_point(self, rng, default_cfg):
        data = (blob(0.0, 30, 4, "a", rng)
                + [act(rng.normal(100, 1, 4), {"far"}, "far0")])
        tree = build(data, default_cfg)
        for a in data:
            assert tree.root.box.contains(a.features)

    def test_every_activation_reachable(self, rng, default_cfg):
        data = blob(0.0, 20, 3, "a", rng) + blob(9.0, 20, 3, "b", rng)
        tree = build(data, default_cfg)
        assert {a.source_id for a in tree.root.members} == \
            {a.source_id for a in data}


class TestBuildFuzz:
    """Whole-tree invariants over random shapes, modes, metrics and seeding
    algorithms. This sweep has caught cascading-prune bookkeeping and
    empty-cluster repair bugs; keep it broad."""

    MODES = [BoxMode.FULL, BoxMode.LOWER, BoxMode.PARTIAL]

    def random_case(self, rng, trial):
        from clusterflow.geometry import Metric
        metrics = [Metric.L1, Metric.L2, Metric.LINF, Metric.MAHALANOBIS]
        algs = ["kmeans", "kmeanspp", "detk"]
        n = int(rng.integers(1, 50))
        dim = int(rng.integers(1, 10))
        n_labels = int(rng.integers(1, 5))
        mode = self.MODES[int(rng.integers(3))]
        data = []
        for i in range(n):
            feats = rng.normal(rng.integers(0, 3) * 6.0, 1.0, dim)
            if mode is BoxMode.LOWER and rng.random() < 0.3:
                feats[rng.random(dim) < 0.4] = 0.0
            vals = list(feats)
            if mode is BoxMode.PARTIAL:
                vals = [None if rng.random() < 0.25 else float(v) for v in vals]
            labels = {f"L{int(rng.integers(n_labels))}"
                      for _ in range(int(rng.integers(1, 3)))}
            data.append(act(vals, labels, f"t{trial}p{i}"))
        cfg = BuildConfig(
            metric=metrics[int(rng.integers(4))], box_mode=mode,
            expand_fraction=float(rng.choice([0.0, 0.05, 0.1, 0.5])),
            batch_size=int(rng.integers(1, n + 2)),
            max_depth=int(rng.integers(2, 12)), rng_seed=trial,
            seed_config=SeedConfig(algorithm=algs[int(rng.integers(3))],
                                   k=int(rng.integers(1, 4)),
                                   k_max=int(rng.integers(2, 6)),
                                   rng_seed=trial))
        return data, cfg

    def test_invariants_over_random_configurations(self):
        rng = np.random.default_rng(20240)
        for trial in range(40):
            data, cfg = self.random_case(rng, trial)
            tree = build(data, cfg)
            for leaf in tree.leaves():
                assert leaf.status in (ClusterStatus.PURE,
                                       ClusterStatus.IRREDUCIBLE)
            got = Counter()
            for leaf in tree.leaves():
                got.update(a.source_id for a in leaf.members)
            assert got == Counter(a.source_id for a in data)
            for node in tree.walk():
                common = frozenset.intersection(*(a.labels for a in node.members))
                assert node.common_labels == common
                hist = Counter()
                for a in node.members:
                    hist.update(a.labels)
                assert node.label_histogram == dict(hist)
                member_ids = {id(m) for m in node.members}
                for child in node.children:
                    assert all(id(m) in member_ids for m in child.members)
                for a in node.members:
                    assert node.box.contains(a.features)
            for a in data:
                assert tree.root.box.contains(a.features)
