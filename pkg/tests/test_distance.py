import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xplain.distance import DistanceMetric
from xplain.errors import SchemaError
from xplain.schema import Feature, FeatureSchema


@pytest.fixture
def schema():
    return FeatureSchema(
        features=(Feature("n", "numeric", (0.0, 10.0)),
                  Feature("c", "categorical", ("a", "b"))),
        target_name="y", classes=("0", "1"))


def test_identical_instances_distance_zero(schema):
    x = schema.instance([3.0, "a"])
    for kind in ("gower", "normalized-l1", "normalized-l2"):
        assert DistanceMetric(kind).distance(schema, x, x) == 0.0


def test_gower_maximal_pair(schema):
    # mean of (|0-10|/10, 1) = mean of (1, 1) = 1
    x1 = schema.instance([0.0, "a"])
    x2 = schema.instance([10.0, "b"])
    assert DistanceMetric("gower").distance(schema, x1, x2) == pytest.approx(1.0)


def test_gower_partial_pair(schema):
    # mean of (|5-7|/10, 0) = mean of (0.2, 0) = 0.1
    x1 = schema.instance([5.0, "a"])
    x2 = schema.instance([7.0, "a"])
    assert DistanceMetric("gower").distance(schema, x1, x2) == pytest.approx(0.1)


def test_symmetry_and_weights(schema):
    x1 = schema.instance([2.0, "a"])
    x2 = schema.instance([8.0, "b"])
    m = DistanceMetric("gower", weights=(3.0, 1.0))
    assert m.distance(schema, x1, x2) == m.distance(schema, x2, x1)
    # (3*0.6 + 1*1) / 4
    assert m.distance(schema, x1, x2) == pytest.approx(0.7)


def test_l1_l2_combinations(schema):
    x1 = schema.instance([0.0, "a"])
    x2 = schema.instance([5.0, "b"])
    assert DistanceMetric("normalized-l1").distance(schema, x1, x2) == pytest.approx(1.5)
    assert DistanceMetric("normalized-l2").distance(schema, x1, x2) == \
        pytest.approx(np.sqrt(0.25 + 1.0))


def test_unknown_kind_rejected():
    with pytest.raises(SchemaError):
        DistanceMetric("euclidean")


@settings(max_examples=200, deadline=None)
@given(a=st.floats(0, 10), b=st.floats(0, 10),
       ca=st.sampled_from(["a", "b"]), cb=st.sampled_from(["a", "b"]))
def test_gower_bounded_unit_interval(a, b, ca, cb):
    schema = FeatureSchema(
        features=(Feature("n", "numeric", (0.0, 10.0)),
                  Feature("c", "categorical", ("a", "b"))),
        target_name="y", classes=("0", "1"))
    d = DistanceMetric("gower").distance(schema, schema.instance([a, ca]),
                                         schema.instance([b, cb]))
    assert 0.0 <= d <= 1.0


def test_vectorized_matches_scalar(schema):
    rng = np.random.default_rng(0)
    rows = [schema.instance([float(rng.uniform(0, 10)),
                             "a" if rng.random() < 0.5 else "b"])
            for _ in range(20)]
    matrix = np.array([schema.encode(x) for x in rows])
    for kind in ("gower", "normalized-l1", "normalized-l2"):
        m = DistanceMetric(kind)
        fast = m.matrix_distances(schema, matrix[0], matrix)
        slow = [m.distance(schema, rows[0], x) for x in rows]
        assert np.allclose(fast, slow, atol=1e-12)
        full = m.pairwise(schema, matrix)
        assert np.allclose(full[0], slow, atol=1e-12)
        assert np.allclose(full, full.T)
