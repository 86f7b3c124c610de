import math

import numpy as np
import pytest

from rpls.exceptions import DegenerateResponse, InvalidInput
from rpls.manifolds import EuclideanManifold, SPDManifold
from rpls.model import generate_synthetic, tnipals_fit
from rpls.model_selection import (classification_metrics, cross_validate, fit_fold,
                                  kfold_split, one_se_rule, r_squared, rmse)


def test_kfold_partition():
    splits = kfold_split(23, 5, seed=1)
    tests = np.concatenate([te for _, te in splits])
    assert sorted(tests) == list(range(23))
    sizes = [len(te) for _, te in splits]
    assert max(sizes) - min(sizes) <= 1
    for tr, te in splits:
        assert set(tr).isdisjoint(te) and len(tr) + len(te) == 23
    again = kfold_split(23, 5, seed=1)
    assert all(np.array_equal(a[1], b[1]) for a, b in zip(splits, again))


def test_kfold_stratified():
    labels = np.array([0] * 12 + [1] * 8)
    for _, te in kfold_split(20, 4, seed=3, stratify=labels):
        assert labels[te].sum() == 2


def test_kfold_bounds():
    with pytest.raises(InvalidInput):
        kfold_split(5, 6)
    with pytest.raises(InvalidInput):
        kfold_split(5, 1)
    assert len(kfold_split(5, 5)) == 5


def test_metric_oracles():
    y = np.array([[1.0], [2.0], [3.0]])
    p = np.array([[1.0], [2.0], [5.0]])
    assert rmse(y, p) == pytest.approx(math.sqrt(4 / 3))
    assert rmse(y, y) == 0.0
    assert r_squared(y, y, [2.0]) == 1.0
    assert r_squared(y, np.full_like(y, 2.0), [2.0]) == pytest.approx(0.0)
    # predicting worse than the training mean gives negative R^2
    assert r_squared(y, p, [2.0]) == pytest.approx(1 - 4 / 2)
    with pytest.raises(DegenerateResponse):
        r_squared(np.ones((3, 1)), y, [1.0])


def test_classification_oracle():
    cm = classification_metrics([1, 1, 0, 0, 1], [0.9, 0.4, 0.2, 0.6, 0.5])
    assert cm.accuracy == pytest.approx(3 / 5)
    assert cm.sensitivity == pytest.approx(2 / 3)
    assert cm.specificity == pytest.approx(1 / 2)
    cm = classification_metrics([1, 1], [0.9, 0.1])
    assert math.isnan(cm.specificity) and cm.undefined == ("specificity",)
    with pytest.raises(InvalidInput):
        classification_metrics([2], [0.1])


def test_one_se_rule():
    per_k = {1: {"rmse_mean": 1.0, "rmse_se": 0.1},
             2: {"rmse_mean": 0.55, "rmse_se": 0.1},
             3: {"rmse_mean": 0.5, "rmse_se": 0.1},
             4: {"rmse_mean": 0.52, "rmse_se": 0.1}}
    chosen, best, thr = one_se_rule(per_k)
    assert (chosen, best) == (2, 3)
    assert thr == pytest.approx(0.6)
    assert one_se_rule({7: {"rmse_mean": 0.3, "rmse_se": 0.0}})[0] == 7


def test_fold_fit_uses_training_rows_only(rng):
    X, Y, _ = generate_synthetic(SPDManifold(3), EuclideanManifold(2), 30, 2,
                                 noise_scale=0.05, seed=6)
    train = np.arange(20)
    X_bad, Y_bad = X.copy(), Y.copy()
    X_bad[20:] = np.nan
    Y_bad[20:] = 1e6
    m = fit_fold(X_bad, Y_bad, train, 2)
    ref = tnipals_fit(X[train], Y[train], 2, scale_y=True)
    assert np.array_equal(m.mu_x, ref.mu_x)
    assert np.array_equal(m.beta.coef, ref.beta.coef)
    assert np.array_equal(m.beta.y_scales, ref.beta.y_scales)


def test_cross_validate_selects_true_k():
    X, Y, _ = generate_synthetic(SPDManifold(4), EuclideanManifold(3), 80, 2,
                                 noise_scale=0.05, seed=11)
    res = cross_validate(X, Y, candidate_ks=range(1, 6), folds=5, seed=0)
    assert set(res.per_k) == {1, 2, 3, 4, 5}
    assert res.chosen_k == 2
    assert res.per_k[2]["r2_mean"] > 0.9
    assert math.isnan(res.per_k[2]["accuracy_mean"])
    assert res.per_k[2]["n_folds_ok"] == 5


def test_cross_validate_classification_and_jobs(rng):
    X = rng.standard_normal((40, 4))
    label = (X[:, 0] + 0.3 * rng.standard_normal(40) > 0).astype(float)
    Y = np.column_stack([label, X[:, 1]])
    a = cross_validate(X, Y, candidate_ks=[1, 2], folds=4, seed=2, group_column=0)
    b = cross_validate(X, Y, candidate_ks=[1, 2], folds=4, seed=2, group_column=0, n_jobs=2)
    assert a.per_k == b.per_k
    assert a.per_k[2]["accuracy_mean"] > 0.7


def test_cross_validate_rejects_large_k(rng):
    X, Y = rng.standard_normal((10, 3)), rng.standard_normal(10)
    with pytest.raises(InvalidInput):
        cross_validate(X, Y, candidate_ks=[4], folds=2)
    with pytest.raises(InvalidInput):
        cross_validate(X, Y, candidate_ks=[1], folds=11)
