import numpy as np
import pytest
from scipy.stats import norm
from hypothesis import given, settings
from hypothesis import strategies as st

from banditclo.polytope import build_grid, enumerate_paths
from banditclo.rng import stream
from banditclo.simulator import (
    DATASET_HEADER,
    LoggingKind,
    build_logging_policy,
    f0_eval,
    generate_dataset,
    init_ground_truth,
    load_dataset,
    sample_full,
    save_dataset,
)

THREE_SIGMA = 2 * norm.sf(3.0)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=25)
def test_ground_truth_deterministic_and_bounded(seed):
    g = build_grid(5, 5)
    a, b = init_ground_truth(seed, g), init_ground_truth(seed, g)
    np.testing.assert_array_equal(a.coeffs, b.coeffs)
    assert a.coeffs.shape == (40, 8)
    assert np.all(a.coeffs[:, 0] == 3.0)
    assert np.all((a.coeffs[:, 1:] >= 0) & (a.coeffs[:, 1:] <= 1))
    np.testing.assert_array_equal(f0_eval(a, np.zeros(3)), np.full(40, 3.0))


def test_f0_hand_values(gt5):
    W = gt5.coeffs
    np.testing.assert_allclose(f0_eval(gt5, [1, 0, 0]), 3 + W[:, 1])
    np.testing.assert_allclose(f0_eval(gt5, [1, 1, 1]), W.sum(axis=1))
    x = np.array([0.5, -2.0, 1.5])
    by_hand = W @ np.array([1, x[0], x[1], x[2], x[0] * x[1], x[1] * x[2], x[0] * x[2], x.prod()])
    np.testing.assert_allclose(f0_eval(gt5, x), by_hand)


def test_noise_mean_and_support(gt5):
    N = 1_000_000
    X, Y = sample_full(gt5, N, np.random.default_rng(0))
    E = Y - gt5.f0(X)
    assert np.abs(E).max() <= 0.5
    se = np.sqrt(1 / 12 / N)
    assert np.all(np.abs(E.mean(axis=0)) <= 3 * se)
    np.testing.assert_allclose(E.var(axis=0), 1 / 12, rtol=0.02)


def test_covariates_standard_normal(gt5):
    N = 1_000_000
    X, _ = sample_full(gt5, N, np.random.default_rng(1))
    cov = np.cov(X.T)
    # SE of a sample covariance entry is about sqrt((1 + delta_ij) / N)
    se = np.sqrt((1 + np.eye(3)) / N)
    assert np.all(np.abs(cov - np.eye(3)) <= 3 * se)
    assert np.all(np.abs(X.mean(axis=0)) <= 3 / np.sqrt(N))


def test_sample_full_rejects_empty(gt5):
    with pytest.raises(ValueError):
        sample_full(gt5, 0, np.random.default_rng(0))


def test_uniform_policy_probabilities(uniform_policy):
    P = uniform_policy.probabilities(np.random.default_rng(2).standard_normal((10, 3)))
    np.testing.assert_allclose(P, 1 / 70)
    assert uniform_policy.support.size == 70


def test_x1_policy_probabilities(x1_policy):
    pol = x1_policy
    assert len(pol.removed) == 20 and len(pol.group_a) == len(pol.group_b) == 25
    pos = pol.probabilities(np.array([[0.3, -1.0, 2.0]]))[0]
    assert pos[list(pol.group_a)].sum() == pytest.approx(2 / 3)
    np.testing.assert_allclose(pos[list(pol.group_a)], 2 / 75)
    np.testing.assert_allclose(pos[list(pol.group_b)], 1 / 75)
    neg = pol.probabilities(np.array([[-0.3, 1.0, 0.0]]))[0]
    assert neg[list(pol.group_a)].sum() == pytest.approx(1 / 3)
    assert np.all(pos[list(pol.removed)] == 0)


@pytest.mark.parametrize("x,pa", [((1, 1, 0), 2 / 3), ((1, -1, 0), 1 / 3), ((-1, 1, 0), 3 / 4), ((-1, -1, 0), 1 / 4),
                                  ((0, 0, 0), 1 / 4)])
def test_x1x2_policy_regions(x1x2_policy, x, pa):
    p = x1x2_policy.probabilities(np.array([x], dtype=float))[0]
    assert p[list(x1x2_policy.group_a)].sum() == pytest.approx(pa)


def test_removed_paths_are_most_often_optimal(gt5, paths5, reference_X, x1_policy):
    from banditclo.simulator import optimal_path_indices

    counts = np.bincount(optimal_path_indices(gt5, paths5, reference_X), minlength=70)
    kept = [j for j in range(70) if j not in x1_policy.removed]
    assert counts[list(x1_policy.removed)].min() >= counts[kept].max()
    assert x1_policy.group_a == tuple(kept[:25]) and x1_policy.group_b == tuple(kept[25:])


def test_logging_rows_sum_to_one(x1x2_policy):
    np.testing.assert_allclose(x1x2_policy.region_probs.sum(axis=1), 1.0)


def test_small_grid_rejected_for_covariate_logging():
    g = build_grid(3, 3)
    P = enumerate_paths(g)
    gt = init_ground_truth(0, g)
    with pytest.raises(ValueError):
        build_logging_policy("x1", gt, P, np.zeros((5, 3)))


def test_costs_equal_hidden_inner_products(gt5, paths5, x1x2_policy):
    data = generate_dataset(gt5, x1x2_policy, paths5, 500, np.random.default_rng(3))
    Y = data.diagnostics_full_costs()
    assert np.all(data.C - np.einsum("ij,ij->i", Y, paths5.incidence[data.Z]) == 0)


def test_uniform_frequencies(gt5, paths5, uniform_policy):
    n = 70_000
    data = generate_dataset(gt5, uniform_policy, paths5, n, np.random.default_rng(4))
    freq = np.bincount(data.Z, minlength=70) / n
    se = np.sqrt((1 / 70) * (69 / 70) / n)
    # a 3-sigma false-alarm rate for the family of 70 estimates, not for each one
    assert np.all(np.abs(freq - 1 / 70) <= norm.isf(THREE_SIGMA / 140) * se)


def test_x1_data_avoids_removed_paths(gt5, paths5, x1_policy):
    data = generate_dataset(gt5, x1_policy, paths5, 5000, np.random.default_rng(5))
    assert not np.isin(data.Z, x1_policy.removed).any()


def test_dataset_determinism(gt5, paths5, x1_policy):
    a = generate_dataset(gt5, x1_policy, paths5, 300, stream(9, "train", 300, 0))
    b = generate_dataset(gt5, x1_policy, paths5, 300, stream(9, "train", 300, 0))
    c = generate_dataset(gt5, x1_policy, paths5, 300, stream(9, "train", 300, 1))
    for f in ("X", "Z", "C"):
        np.testing.assert_array_equal(getattr(a, f), getattr(b, f))
    assert not np.array_equal(a.C, c.C)


def test_hidden_gate_shared_by_subsets(gt5, paths5, uniform_policy):
    data = generate_dataset(gt5, uniform_policy, paths5, 50, np.random.default_rng(6))
    sub = data.subset(np.arange(10))
    assert not data.hidden_accessed
    sub.diagnostics_full_costs()
    assert data.hidden_accessed


def test_dataset_csv_round_trip(tmp_path, gt5, paths5, uniform_policy):
    data = generate_dataset(gt5, uniform_policy, paths5, 40, np.random.default_rng(7))
    save_dataset(tmp_path / "d.csv", data)
    assert (tmp_path / "d.csv").read_text().splitlines()[0] == ",".join(DATASET_HEADER)
    back = load_dataset(tmp_path / "d.csv")
    np.testing.assert_array_equal(back.X, data.X)
    np.testing.assert_array_equal(back.Z, data.Z)
    np.testing.assert_array_equal(back.C, data.C)
    assert not back.has_hidden
    with pytest.raises(LookupError):
        back.diagnostics_full_costs()


def test_logging_kind_aliases():
    assert LoggingKind.parse("X1Policy") is LoggingKind.X1
    assert LoggingKind.parse("UniformRandom") is LoggingKind.UNIFORM
    with pytest.raises(ValueError):
        LoggingKind.parse("x2")
