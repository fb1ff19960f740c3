import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fairgraft.errors import ConfigError, ShapeError
from fairgraft.metrics import roc_auc
from fairgraft.trees import (
    GbdtModel,
    GbdtParams,
    RfModel,
    RfParams,
    Tree,
    fit_gbdt,
    fit_random_forest,
    fit_tree,
    leaf_indices,
    predict_margin,
    predict_proba,
    used_feature_indices,
)
from oracles import best_stump

STUMP = GbdtParams(n_trees=1, max_depth=1, min_samples_leaf=1)


def _separable(n, seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 2))
    return X, (X[:, 0] + X[:, 1] > 0).astype(int)


def test_two_point_stump():
    tree = fit_tree([[0.0], [1.0]], [-1.0, 1.0], [1.0, 1.0], STUMP)
    assert tree.feature[0] == 0 and tree.threshold[0] == 0.5
    assert tree.leaf_values.tolist() == [-0.5, 0.5]


def test_constant_targets_give_single_leaf():
    tree = fit_tree(np.arange(10.0)[:, None], np.full(10, 0.3), np.ones(10), GbdtParams(max_depth=3, min_samples_leaf=1))
    assert tree.leaf_count == 1
    assert tree.leaf_values[0] == pytest.approx(3.0 / 11.0)
    assert used_feature_indices([tree]) == []


def _stump_instance(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, 101))
    d = int(rng.integers(1, 6))
    # coarse grids produce ties in both values and gains
    X = rng.integers(0, 6, size=(n, d)).astype(float)
    targets = rng.normal(size=n).round(1)
    hess = rng.uniform(0.1, 1.0, size=n).round(2)
    min_leaf = int(rng.integers(1, 4))
    return X, targets, hess, min_leaf


@pytest.mark.parametrize("seed", range(40))
def test_stump_matches_exhaustive_search(seed):
    X, targets, hess, min_leaf = _stump_instance(seed)
    tree = fit_tree(X, targets, hess, GbdtParams(max_depth=1, min_samples_leaf=min_leaf))
    best = best_stump(X, targets, hess, 1.0, min_leaf)
    if best is None:
        assert tree.leaf_count == 1
        return
    _, j, thr = best
    assert (tree.feature[0], tree.threshold[0]) == (j, thr)
    left = X[:, j] <= thr
    expected = [targets[left].sum() / (hess[left].sum() + 1), targets[~left].sum() / (hess[~left].sum() + 1)]
    np.testing.assert_allclose(tree.leaf_values, expected, rtol=1e-12)


def test_tie_prefers_lowest_feature():
    # both columns give the same partition
    X = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 1.0], [1.0, 1.0]])
    tree = fit_tree(X, [1, 1, -1, -1], np.ones(4), STUMP)
    assert tree.feature[0] == 0


def test_gbdt_separable_auc():
    X, y = _separable(400, 0)
    model = fit_gbdt(X[:200], y[:200], GbdtParams(n_trees=50, max_depth=3, min_samples_leaf=5))
    assert roc_auc(model.predict_proba(X[200:]), y[200:]) >= 0.95
    assert model.base_score == pytest.approx(np.log(y[:200].mean() / (1 - y[:200].mean())))


def test_gbdt_loss_non_increasing():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(300, 4))
    y = (rng.random(300) < 1 / (1 + np.exp(-X[:, 0] * X[:, 1]))).astype(int)
    model = fit_gbdt(X, y, GbdtParams(n_trees=40, max_depth=3, min_samples_leaf=5))
    assert np.all(np.diff(model.train_loss) <= 1e-12)


@pytest.mark.parametrize("kwargs", [{"n_trees": 0}, {"max_depth": 0}, {"learning_rate": 0.0}, {"learning_rate": 1.5}])
def test_gbdt_params_validation(kwargs):
    with pytest.raises(ConfigError):
        GbdtParams(**kwargs)


def test_single_class_is_config_error():
    with pytest.raises(ConfigError):
        fit_gbdt(np.zeros((5, 1)), np.ones(5))
    with pytest.raises(ConfigError):
        fit_random_forest(np.zeros((5, 1)), np.zeros(5))


def test_base_only_model_gives_half():
    leaf = Tree(np.array([-1]), np.array([0.0]), np.array([-1]), np.array([-1]), np.array([0.0]), np.array([0]), 3)
    model = GbdtModel([leaf], 0.1, 0.0, 3)
    assert predict_proba(model, np.zeros(3)) == 0.5
    with pytest.raises(ShapeError):
        predict_margin(model, np.zeros(2))


def test_margin_matches_leaf_lookup():
    X, y = _separable(200, 2)
    model = fit_gbdt(X, y, GbdtParams(n_trees=20, max_depth=3, min_samples_leaf=5))
    ids = leaf_indices(model, X)
    q = [t.leaf_values for t in model.trees]
    by_leaf = model.base_score + model.learning_rate * np.array(
        [sum(q[t][ids[i, t]] for t in range(len(q))) for i in range(len(X))]
    )
    np.testing.assert_allclose(model.predict_margin(X), by_leaf, rtol=1e-12)
    assert all((ids[:, t] < model.trees[t].leaf_count).all() for t in range(len(q)))
    np.testing.assert_array_equal(leaf_indices(model, X[3]), leaf_indices(model, X[3]))


def test_positive_tree_increases_margin():
    X, y = _separable(100, 3)
    model = fit_gbdt(X, y, GbdtParams(n_trees=5, max_depth=2, min_samples_leaf=5))
    before = model.predict_margin(X)
    extra = fit_tree(X, np.abs(np.random.default_rng(0).normal(size=100)) + 0.1, np.ones(100), GbdtParams(max_depth=2, min_samples_leaf=5))
    assert (extra.leaf_values > 0).all()
    model.trees.append(extra)
    assert (model.predict_margin(X) > before).all()


def test_stump_leaf_ids():
    tree = fit_tree([[0.0], [1.0]], [-1.0, 1.0], [1.0, 1.0], STUMP)
    model = GbdtModel([tree], 0.1, 0.0, 1)
    assert leaf_indices(model, [0.2]).tolist() == [0]
    assert leaf_indices(model, [0.9]).tolist() == [1]


def test_used_feature_union():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(80, 4))
    t1 = fit_tree(X, np.where(X[:, 1] > 0, 1.0, -1.0), np.ones(80), STUMP)
    t2 = fit_tree(X, np.where(X[:, 2] > 0, 1.0, -1.0) + np.where(X[:, 1] > 0, 3.0, -3.0), np.ones(80),
                  GbdtParams(max_depth=2, min_samples_leaf=1))
    assert t1.used_features == {1}
    assert used_feature_indices([t1, t2]) == [1, 2]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_monotone_rescaling_keeps_predictions(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(40, 3))
    y = rng.integers(0, 2, size=40)
    if y.min() == y.max():
        y[0] = 1 - y[0]
    params = GbdtParams(n_trees=3, max_depth=2, min_samples_leaf=2)
    a = fit_gbdt(X, y, params).predict_margin(X)
    b = fit_gbdt(np.exp(X) * 3.0, y, params).predict_margin(np.exp(X) * 3.0)
    np.testing.assert_allclose(a, b, rtol=1e-12)


def test_gbdt_round_trip_exact():
    X, y = _separable(150, 5)
    model = fit_gbdt(X, y, GbdtParams(n_trees=10, max_depth=3, min_samples_leaf=3, feature_fraction=0.5, seed=7))
    back = GbdtModel.loads(model.dumps())
    np.testing.assert_array_equal(back.predict_margin(X), model.predict_margin(X))
    with pytest.raises(ConfigError):
        GbdtModel.from_dict({"format": "rf"})


def test_gbdt_deterministic():
    X, y = _separable(150, 6)
    params = GbdtParams(n_trees=8, max_depth=3, min_samples_leaf=3, feature_fraction=0.5, seed=2)
    assert fit_gbdt(X, y, params).dumps() == fit_gbdt(X, y, params).dumps()


def test_random_forest_separable_and_bounded():
    X, y = _separable(400, 7)
    model = fit_random_forest(X[:200], y[:200], RfParams(n_trees=30, seed=1))
    p = model.predict_proba(X[200:])
    assert roc_auc(p, y[200:]) >= 0.9
    assert ((p >= 0) & (p <= 1)).all()
    far = model.predict_proba(np.array([[1e6, -1e6]]))
    assert 0.0 <= far[0] <= 1.0
    back = RfModel.from_dict(json.loads(json.dumps(model.to_dict())))
    np.testing.assert_array_equal(back.predict_proba(X), model.predict_proba(X))


def test_single_tree_forest_outputs_leaf_purities():
    X, y = _separable(60, 8)
    model = fit_random_forest(X, y, RfParams(n_trees=1, max_depth=2, min_samples_leaf=3, bootstrap=False))
    tree = model.trees[0]
    ids = tree.leaf_index(X)
    purities = {i: y[ids == i].mean() for i in np.unique(ids)}
    np.testing.assert_allclose(model.predict_proba(X), [purities[i] for i in ids])
