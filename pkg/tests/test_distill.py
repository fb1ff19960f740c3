import json

import numpy as np
import pytest

from fairgraft.distill import (
    DistillConfig,
    DistilledNet,
    LeafEmbedding,
    TreeGroup,
    distill_dense_net,
    fit_distilled,
    fit_leaf_embedding,
    group_trees,
    y_kd,
)
from fairgraft.errors import ConfigError
from fairgraft.trees import GbdtParams, fit_gbdt


def _data(n=1200, seed=0, shift=0.0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 4))
    g = np.where(rng.random(n) < 0.6, "maj", "min").astype(object)
    z = X[:, 0] - 0.8 * X[:, 1] + shift * (g == "maj")
    y = (rng.random(n) < 1 / (1 + np.exp(-z))).astype(int)
    return X, y, g


def _teacher(X, y, n_trees=20, depth=3):
    return fit_gbdt(X, y, GbdtParams(n_trees=n_trees, max_depth=depth, min_samples_leaf=10))


# ---- grouping

def test_group_sizes():
    X, y, _ = _data(300)
    assert [len(g.members) for g in group_trees(_teacher(X, y, 100, 2), 5)] == [20] * 5
    assert [len(g.members) for g in group_trees(_teacher(X, y, 7, 2), 3)] == [3, 2, 2]


def test_groups_partition_and_single_group_union():
    X, y, _ = _data(300)
    teacher = _teacher(X, y, 13, 3)
    groups = group_trees(teacher, 4)
    members = sorted(m for g in groups for m in g.members)
    assert members == list(range(13))
    (whole,) = group_trees(teacher, 1)
    assert whole.used_features == sorted(set().union(*(t.used_features for t in teacher.trees)))
    assert whole.leaf_dim == sum(t.leaf_count for t in teacher.trees)


@pytest.mark.parametrize("n_groups", [0, 8])
def test_group_count_out_of_range(n_groups):
    X, y, _ = _data(200)
    with pytest.raises(ConfigError):
        group_trees(_teacher(X, y, 7, 2), n_groups)


def test_group_margins_sum_to_teacher_margin():
    X, y, _ = _data(400)
    teacher = _teacher(X, y)
    ids = teacher.leaf_indices(X)
    total = teacher.base_score + sum(g.margins(ids) for g in group_trees(teacher, 3))
    np.testing.assert_allclose(total, teacher.predict_margin(X), rtol=1e-12)


# ---- leaf embeddings

def _two_leaf_group():
    return TreeGroup([0], [0], [2], np.array([-1.0, 1.0]), 1.0)


def test_leaf_embedding_recovers_two_margins():
    group = _two_leaf_group()
    cols = np.array([[0], [1]] * 200)
    margins = np.where(cols[:, 0] == 0, -0.7, 1.3)
    emb, history = fit_leaf_embedding(group, cols, margins, d_leaf=1, epochs=300, lr=0.05, batch_size=64)
    assert np.abs(emb.predict(cols) - margins).max() <= 1e-3
    assert history[-1] < history[0]


def test_leaf_embedding_constant_margins():
    group = _two_leaf_group()
    cols = np.array([[0], [1]] * 100)
    emb, _ = fit_leaf_embedding(group, cols, np.full(200, 0.4), d_leaf=1, epochs=200, lr=0.05, batch_size=50)
    assert np.mean((emb.predict(cols) - 0.4) ** 2) < 1e-6


def test_leaf_embedding_is_a_function_of_leaves():
    rng = np.random.default_rng(0)
    emb = LeafEmbedding(6, 2, rng)
    cols = np.array([[0, 3], [1, 4], [0, 3]])
    e = emb.embed(cols)
    np.testing.assert_array_equal(e[0], e[2])
    with pytest.raises(ConfigError):
        LeafEmbedding(3, 3, rng)


def test_normalize_keeps_predictions():
    rng = np.random.default_rng(1)
    emb = LeafEmbedding(8, 3, rng)
    emb.projection.value[...] = rng.normal(size=(8, 3))
    cols = np.column_stack([rng.integers(0, 4, 50), rng.integers(4, 8, 50)])
    before = emb.predict(cols)
    emb.normalize(cols)
    np.testing.assert_allclose(emb.predict(cols), before, atol=1e-12)
    e = emb.embed(cols)
    np.testing.assert_allclose(e.mean(axis=0), 0.0, atol=1e-12)
    assert e.var(axis=0).mean() == pytest.approx(1.0)


# ---- dense distillation

def test_mse_decreases_over_first_epochs():
    X, y, _ = _data()
    net = fit_distilled(_teacher(X, y), X, X, n_groups=2, config=DistillConfig(epochs=4))
    mse = [e.mse for e in net.history]
    assert mse[0] > mse[1] > mse[2]


def test_single_stump_teacher_is_reproduced():
    X, y, _ = _data(3000, 2)
    teacher = fit_gbdt(X[:2000], y[:2000], GbdtParams(n_trees=1, max_depth=1, min_samples_leaf=10))
    net = fit_distilled(teacher, X[:2000], X[:2000], n_groups=1,
                        config=DistillConfig(epochs=30, lr=0.01, leaf_epochs=100, batch_size=128))
    held = teacher.predict_margin(X[2000:])
    assert np.mean((net.y_kd(X[2000:]) - held) ** 2) <= 0.05 * held.var()


def test_fidelity_correlation():
    X, y, _ = _data(3000, 3)
    teacher = _teacher(X[:2000], y[:2000], 50, 3)
    net = fit_distilled(teacher, X[:2000], X[:2000], config=DistillConfig(epochs=20, lr=0.003))
    assert np.corrcoef(net.y_kd(X[2000:]), teacher.predict_margin(X[2000:]))[0, 1] >= 0.9


def _gap(net, X, g):
    out = net.y_kd(X)
    return abs(out[g == "maj"].mean() - out[g == "min"].mean())


def test_large_penalty_shrinks_group_gap():
    plain, fair = [], []
    for seed in range(5):
        X, y, g = _data(1500, seed, shift=1.5)
        Xs = np.column_stack([X, (g == "maj").astype(float)])
        teacher = _teacher(Xs, y, 20, 3)
        cfg = DistillConfig(epochs=10, lr=0.003, seed=seed)
        plain.append(_gap(fit_distilled(teacher, Xs, Xs, 2, g, 0.0, "maj", cfg), Xs, g))
        fair.append(_gap(fit_distilled(teacher, Xs, Xs, 2, g, 1e3, "maj", cfg), Xs, g))
    assert np.mean(fair) < np.mean(plain)


def test_logged_terms_recombine():
    X, y, g = _data(800, 4, shift=1.0)
    net = fit_distilled(_teacher(X, y), X, X, 2, g, 5.0, "maj", DistillConfig(epochs=3))
    for e in net.history:
        assert e.total == pytest.approx(e.mse + e.fairness, rel=1e-12)
        assert e.fairness > 0


def test_zero_penalty_matches_plain_path_bitwise():
    X, y, g = _data(600, 5, shift=1.0)
    teacher = _teacher(X, y)
    cfg = DistillConfig(epochs=2)
    a = fit_distilled(teacher, X, X, 3, g, 0.0, "maj", cfg)
    b = fit_distilled(teacher, X, X, 3, config=cfg)
    np.testing.assert_array_equal(a.y_kd(X), b.y_kd(X))


def test_unknown_majority_group():
    X, y, g = _data(300)
    with pytest.raises(ConfigError):
        fit_distilled(_teacher(X, y, 5, 2), X, X, 1, g, 1.0, "nobody", DistillConfig(epochs=1))
    with pytest.raises(ConfigError):
        fit_distilled(_teacher(X, y, 5, 2), X, X, 1, None, -1.0, None, DistillConfig(epochs=1))


def test_y_kd_additive_and_degenerate_map():
    X, y, _ = _data(500, 6)
    net = fit_distilled(_teacher(X, y), X, X, 3, config=DistillConfig(epochs=1))
    np.testing.assert_allclose(net.y_kd(X), net.base_score + net.group_contributions(X).sum(axis=1), rtol=1e-12)
    np.testing.assert_allclose(net.forward(X).value, net.y_kd(X), rtol=1e-12)
    assert y_kd(net, X[0]) == pytest.approx(net.y_kd(X[:1])[0])

    single = fit_distilled(_teacher(X, y, 4, 2), X, X, 1, config=DistillConfig(epochs=1))
    emb = single.nets[0].embedding
    emb.w_out.value[...] = 0.0
    np.testing.assert_allclose(single.y_kd(X), emb.b_out.value + single.base_score)


def test_distilled_round_trip():
    X, y, _ = _data(400, 7)
    net = fit_distilled(_teacher(X, y, 8, 2), X, X, 3, config=DistillConfig(epochs=1))
    back = DistilledNet.from_dict(json.loads(json.dumps(net.to_dict())))
    np.testing.assert_array_equal(back.y_kd(X), net.y_kd(X))
    assert back.teacher_hash == net.teacher_hash


def test_distill_requires_leaf_ids():
    X, y, _ = _data(200)
    teacher = _teacher(X, y, 3, 2)
    with pytest.raises(ConfigError):
        distill_dense_net(X, teacher, group_trees(teacher, 1), [None])
