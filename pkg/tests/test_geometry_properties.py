"""Property-based checks of the metric-space axioms and box invariants."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from clusterflow.geometry import (
    BoundingBox,
    BoxMode,
    Metric,
    distance,
    point_to_box_distance,
    softmax,
    vec,
)

# magnitudes either exactly zero or comfortably above float underflow, so
# squared gaps stay representable
finite = st.one_of(
    st.just(0.0),
    st.floats(min_value=1e-6, max_value=1e6, allow_nan=False, width=64),
    st.floats(min_value=-1e6, max_value=-1e-6, allow_nan=False, width=64),
)


@st.composite
def vectors(draw, dim=None, min_dim=1, max_dim=8):
    d = dim or draw(st.integers(min_dim, max_dim))
    return np.asarray(draw(st.lists(finite, min_size=d, max_size=d)))


@st.composite
def vector_triples(draw):
    d = draw(st.integers(1, 6))
    return tuple(draw(vectors(dim=d)) for _ in range(3))


@given(vector_triples(), st.sampled_from([Metric.L1, Metric.L2, Metric.LINF]))
def test_metric_axioms(triple, metric):
    x, y, z = triple
    assert distance(x, x, metric) == 0.0
    assert distance(x, y, metric) == distance(y, x, metric)
    dxz = distance(x, z, metric)
    dxy = distance(x, y, metric)
    dyz = distance(y, z, metric)
    assert dxz <= dxy + dyz + 1e-9 * (1.0 + dxy + dyz)


@given(vectors(min_dim=1, max_dim=10), st.floats(-1e4, 1e4, allow_nan=False))
def test_softmax_sums_to_one_and_order_preserving(v, shift):
    out = softmax(v)
    assert abs(out.sum() - 1.0) < 1e-9
    # non-strict order preservation: exp may underflow far-apart inputs to
    # equal outputs, but can never invert a pair
    for i in range(len(v)):
        for j in range(len(v)):
            if v[i] < v[j]:
                assert out[i] <= out[j]
    assert int(np.argmax(softmax(v + shift))) == int(np.argmax(v))


@st.composite
def point_sequences(draw):
    mode = draw(st.sampled_from(list(BoxMode)))
    d = draw(st.integers(1, 5))
    n = draw(st.integers(1, 8))
    rows = []
    for _ in range(n):
        row = []
        for _ in range(d):
            kind = draw(st.integers(0, 3))
            if kind == 0 and mode is BoxMode.PARTIAL:
                row.append(None)
            elif kind == 1:
                row.append(0.0)
            else:
                row.append(draw(finite))
        rows.append(row)
    return mode, d, rows


@given(point_sequences())
def test_extend_then_contains(seq):
    mode, d, rows = seq
    box = BoundingBox.empty(mode, d)
    seen = []
    for row in rows:
        v = vec(row)
        seen.append(v)
        box = box.extend(v)
        for prior in seen:
            assert box.contains(prior)


@given(point_sequences())
def test_activation_rules(seq):
    mode, d, rows = seq
    box = BoundingBox.empty(mode, d).extend_many(np.vstack([vec(r) for r in rows]))
    mat = np.vstack([vec(r) for r in rows])
    present = ~np.isnan(mat)
    if mode is BoxMode.LOWER:
        expected = (present & (mat != 0)).any(axis=0)
    else:
        expected = present.any(axis=0)
    assert np.array_equal(box.active, expected)


@given(point_sequences(), st.floats(0, 3, allow_nan=False),
       st.floats(0, 3, allow_nan=False))
def test_expand_monotone(seq, f1, f2):
    mode, d, rows = seq
    box = BoundingBox.empty(mode, d).extend_many(np.vstack([vec(r) for r in rows]))
    once = box.expand(f1)
    act = box.active
    assert (once.lo[act] <= box.lo[act]).all()
    assert (once.hi[act] >= box.hi[act]).all()
    twice = once.expand(f2)
    ref = box.expand(max(f1, f2))
    assert (twice.lo[act] <= ref.lo[act] + 1e-12).all()
    assert (twice.hi[act] >= ref.hi[act] - 1e-12).all()


@given(point_sequences(), st.data())
def test_distance_zero_iff_contained(seq, data):
    mode, d, rows = seq
    box = BoundingBox.empty(mode, d).extend_many(np.vstack([vec(r) for r in rows]))
    q = np.asarray(data.draw(st.lists(finite, min_size=d, max_size=d)))
    dist = point_to_box_distance(q, box, Metric.L2)
    assert (dist == 0.0) == box.contains(q)


@pytest.mark.parametrize("metric", [Metric.L1, Metric.L2, Metric.LINF])
def test_distance_monotone_along_ray(metric):
    box = BoundingBox(BoxMode.FULL, 3, [True] * 3,
                      [-1.0, -2.0, 0.0], [1.0, 2.0, 0.5])
    rng = np.random.default_rng(0)
    for _ in range(50):
        start = rng.uniform(-20, 20, 3)
        target = rng.uniform([-1, -2, 0], [1, 2, 0.5])
        ts = np.linspace(0, 1, 30)
        ds = [point_to_box_distance(start + t * (target - start), box, metric)
              for t in ts]
        assert all(b <= a + 1e-9 for a, b in zip(ds, ds[1:]))
