import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from banditclo.features import (
    FeatureSpec,
    LinearHypothesis,
    feature_map,
    load_hypothesis,
    predict,
    read_matrix,
    save_hypothesis,
    write_matrix,
)
from banditclo.simulator import f0_eval

finite = st.floats(-1e3, 1e3, allow_nan=False)


def test_basis_values():
    np.testing.assert_array_equal(feature_map(FeatureSpec.WELL, [0, 0, 0]), [1, 0, 0, 0, 0, 0, 0, 0])
    np.testing.assert_array_equal(feature_map(FeatureSpec.DEG4, [2, -1, 3]), [1, 2, -1, 3])
    np.testing.assert_array_equal(feature_map(FeatureSpec.WELL, [1, 2, 3]), [1, 1, 2, 3, 2, 6, 3, 6])
    np.testing.assert_array_equal(feature_map(FeatureSpec.DEG2, [1, 2, 3]), [1, 1, 2, 3, 2, 6])


def test_spec_sizes_and_parse():
    assert [s.k for s in FeatureSpec] == [8, 6, 4]
    assert FeatureSpec.parse("MisspecDeg2") is FeatureSpec.DEG2
    assert FeatureSpec.parse("well-specified") is FeatureSpec.WELL
    with pytest.raises(ValueError):
        FeatureSpec.parse("deg3")


def test_feature_map_rejects_wrong_width():
    with pytest.raises(ValueError):
        feature_map(FeatureSpec.WELL, np.zeros((4, 2)))


@given(arrays(np.float64, (5, 3), elements=finite))
def test_restricted_bases_are_column_subsets(X):
    full = feature_map(FeatureSpec.WELL, X)
    for spec in (FeatureSpec.DEG2, FeatureSpec.DEG4):
        np.testing.assert_array_equal(feature_map(spec, X), full[:, : spec.k])


def test_zero_hypothesis_predicts_zero():
    h = LinearHypothesis.zeros(40, FeatureSpec.WELL)
    np.testing.assert_array_equal(predict(h, np.ones((3, 3))), 0.0)


def test_ground_truth_embedding_matches_f0(gt5):
    X = np.random.default_rng(3).standard_normal((50, 3))
    np.testing.assert_allclose(gt5.as_hypothesis().predict(X), np.array([f0_eval(gt5, x) for x in X]))


@given(arrays(np.float64, (4, 6), elements=finite), arrays(np.float64, (4, 6), elements=finite),
       arrays(np.float64, (7, 3), elements=st.floats(-3, 3)))
def test_predict_is_linear_in_W(A, B, X):
    s = FeatureSpec.DEG2
    lhs = LinearHypothesis(A + B, s).predict(X)
    rhs = LinearHypothesis(A, s).predict(X) + LinearHypothesis(B, s).predict(X)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-9, atol=1e-6)


def test_embed_preserves_predictions():
    rng = np.random.default_rng(4)
    h = LinearHypothesis(rng.standard_normal((5, 4)), FeatureSpec.DEG4)
    X = rng.standard_normal((20, 3))
    np.testing.assert_allclose(h.embed(FeatureSpec.WELL).predict(X), h.predict(X))
    with pytest.raises(ValueError):
        LinearHypothesis(np.zeros((2, 8)), FeatureSpec.WELL).embed(FeatureSpec.DEG4)


def test_hypothesis_validation():
    with pytest.raises(ValueError):
        LinearHypothesis(np.zeros((3, 5)), FeatureSpec.WELL)
    with pytest.raises(ValueError):
        LinearHypothesis(np.full((3, 4), np.inf), FeatureSpec.DEG4)
    h = LinearHypothesis(np.zeros((2, 4)), FeatureSpec.DEG4)
    with pytest.raises(ValueError):
        h.W[0, 0] = 1.0


@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.just(4)), elements=st.floats(allow_nan=False, allow_infinity=False)))
def test_matrix_file_round_trip(tmp_path_factory, W):
    path = tmp_path_factory.mktemp("m") / "w.txt"
    write_matrix(path, W, ["a", "b", "c", "d"], comments=["penalty 0.5"])
    W2, names, comments = read_matrix(path)
    np.testing.assert_array_equal(W2, W)
    assert names == ("a", "b", "c", "d") and comments == ["penalty 0.5"]


def test_hypothesis_file_round_trip(tmp_path):
    h = LinearHypothesis(np.random.default_rng(5).standard_normal((40, 6)), FeatureSpec.DEG2)
    save_hypothesis(tmp_path / "h.txt", h)
    h2 = load_hypothesis(tmp_path / "h.txt")
    assert h2.spec is FeatureSpec.DEG2
    np.testing.assert_array_equal(h2.W, h.W)
