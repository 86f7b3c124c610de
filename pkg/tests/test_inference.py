import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose
from scipy.stats import false_discovery_control, pearsonr

from rpls.exceptions import DegenerateModel, InvalidInput
from rpls.inference import (fdr_adjust, permutation_pvalues, permutation_test, redundancy,
                            vip_inference, vip_report, vip_scores)
from rpls.manifolds import EuclideanManifold, SPDManifold
from rpls.model import generate_synthetic
from rpls.nipals import nipals_fit


def brute_vip(fit, Y):
    """VIP from explicit loops over predictors, components and responses."""
    p, K = fit.W.shape
    rd = []
    for k in range(K):
        rd.append(np.mean([pearsonr(Y[:, i], fit.T[:, k])[0] ** 2 for i in range(Y.shape[1])]))
    out = []
    for j in range(p):
        num = sum(rd[k] * fit.W[j, k] ** 2 for k in range(K))
        out.append(np.sqrt(p * num / sum(rd)))
    return np.array(out)


def test_redundancy_cases(rng):
    t = rng.standard_normal(20)
    assert redundancy(np.column_stack([t, 3 * t + 1]), t) == pytest.approx(1.0)
    assert redundancy(np.column_stack([t, np.ones(20)]), t) == pytest.approx(0.5)
    y = rng.standard_normal(20)
    assert redundancy(y, t) == pytest.approx(pearsonr(y, t)[0] ** 2)
    with pytest.raises(InvalidInput):
        redundancy(y[:5], t)


def test_vip_matches_brute_force(rng):
    X, Y = rng.standard_normal((10, 4)), rng.standard_normal((10, 2))
    fit = nipals_fit(X, Y, 2)
    assert_allclose(vip_scores(fit, Y), brute_vip(fit, Y), rtol=1e-12)


def test_vip_single_predictor(rng):
    X, y = rng.standard_normal((10, 1)), rng.standard_normal(10)
    assert_allclose(vip_scores(nipals_fit(X, y, 1), y[:, None]), [1.0], rtol=1e-12)


def test_vip_k1_collapse(rng):
    X, Y = rng.standard_normal((25, 7)), rng.standard_normal((25, 2))
    fit = nipals_fit(X, Y, 1)
    assert_allclose(vip_scores(fit, Y), np.sqrt(7) * np.abs(fit.W[:, 0]), atol=1e-10)


def test_vip_degenerate(rng):
    X = rng.standard_normal((10, 3))
    fit = nipals_fit(X, rng.standard_normal(10), 1)
    fit.T[:] = 1.0
    with pytest.raises(DegenerateModel):
        vip_scores(fit, rng.standard_normal((10, 1)))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 8), st.integers(1, 3), st.integers(1, 3))
def test_property_vip_sum(seed, p, q, K):
    rng = np.random.default_rng(seed)
    X, Y = rng.standard_normal((20, p)), rng.standard_normal((20, q))
    K = min(K, p)
    v = vip_scores(nipals_fit(X, Y, K, max_iter=5000), Y)
    assert np.all(v >= 0)
    assert abs(np.sum(v**2) - p) <= 1e-6


def test_fdr_examples():
    assert_allclose(fdr_adjust([0.01, 0.02, 0.03]), [0.03, 0.03, 0.03])
    assert_allclose(fdr_adjust([0.5]), [0.5])
    assert fdr_adjust([]).size == 0
    with pytest.raises(InvalidInput):
        fdr_adjust([0.1, 1.5])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=40))
def test_property_fdr_oracle(p):
    p = np.array(p)
    q = fdr_adjust(p)
    assert_allclose(q, false_discovery_control(p, method="bh"), atol=1e-12)
    assert np.all(q >= p - 1e-15)
    order = np.argsort(p)
    assert np.all(np.diff(q[order]) >= -1e-15)


def test_pvalue_counts():
    null = np.array([[0.1, 0.5, 0.9, np.nan], [1, 2, 3, 4.0]])
    p, n_valid = permutation_pvalues([0.5, 0.0], null)
    assert_allclose(p, [1 / 3, 1.0])
    assert list(n_valid) == [3, 4]
    ps, _ = permutation_pvalues([0.5, 0.0], null, smoothed=True)
    assert_allclose(ps, [2 / 4, 5 / 5])


def test_permutation_lattice_and_mask(rng):
    X, Y = rng.standard_normal((20, 5)), rng.standard_normal((20, 1))
    Y[:, 0] += 2 * X[:, 0]
    mask = np.array([False, False, True, False, False])
    p, obs, n_valid = permutation_test(X, Y, 2, n_permutations=40, seed=1, diagonal_mask=mask)
    assert np.all(np.isclose(p * 40, np.round(p * 40)))
    assert p[2] == 1.0 and n_valid[2] == 0
    assert p[0] == 0.0


def test_permutation_determinism_across_jobs(rng):
    X, Y = rng.standard_normal((15, 4)), rng.standard_normal((15, 2))
    a = permutation_test(X, Y, 2, n_permutations=25, seed=9, n_jobs=1, return_null=True)
    b = permutation_test(X, Y, 2, n_permutations=25, seed=9, n_jobs=2, return_null=True)
    for x, y in zip(a, b):
        assert np.array_equal(x, y, equal_nan=True)
    c = permutation_test(X, Y, 2, n_permutations=25, seed=10, return_null=True)
    assert not np.array_equal(a[3], c[3])


def test_permutation_uses_seed_tuple(rng):
    X, Y = rng.standard_normal((12, 3)), rng.standard_normal((12, 1))
    _, _, _, null = permutation_test(X, Y, 1, n_permutations=3, seed=4, return_null=True)
    j, h = 1, 2
    Xc = X - X.mean(0)
    perm = np.random.default_rng([4, j, h]).permutation(12)
    Xp = Xc.copy()
    Xp[:, j] = Xc[perm, j]
    Yc = Y - Y.mean(0)
    assert null[j, h] == pytest.approx(vip_scores(nipals_fit(Xp, Yc, 1), Yc)[j], rel=1e-12)


def test_vip_report():
    rep = vip_report([0.001, 0.001, 0.5, 0.0], [2, 1, 0.5, 0.1],
                     diagonal_mask=[False, False, False, True], n_permutations=1000)
    assert rep.p_values[3] == 1.0
    assert list(rep.significant) == [True, True, False, False]
    assert rep.n_significant == 2


def test_vip_inference_spd():
    X, Y, _ = generate_synthetic(SPDManifold(3), EuclideanManifold(1), 40, 1,
                                 noise_scale=0.05, seed=2)
    rep, model = vip_inference(X, Y, 1, n_permutations=20, seed=0)
    assert rep.vip.shape == (6,)
    assert np.all(rep.p_values[:3] == 1.0) and not rep.significant[:3].any()
    assert abs(np.sum(rep.vip**2) - 6) < 1e-6
    assert rep.labels == [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)]
