import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fairgraft.baselines import design_matrix, fit_logistic
from fairgraft.dataio import (
    NA_TOKEN,
    Cohort,
    ColumnSpec,
    GroupSpec,
    Preprocessor,
    Standardizer,
    SynthConfig,
    bias_manifest,
    build_feature_views,
    encode_integer,
    encode_onehot,
    fit_vocabularies,
    fit_vocabulary,
    impute_missing,
    kfold_split,
    load_cohort,
    load_synth_config,
    majority_group,
    read_schema,
    synth_generate,
    write_cohort,
    write_schema,
)
from fairgraft.errors import ConfigError, DataError, SchemaError
from fairgraft.metrics import roc_auc

SCHEMA = [
    ColumnSpec("age", "numeric", "recipient"),
    ColumnSpec("blood_type", "categorical", "recipient"),
    ColumnSpec("donor_age", "numeric", "organ"),
    ColumnSpec("race", "categorical", "sensitive"),
    ColumnSpec("gender", "categorical", "sensitive"),
    ColumnSpec("graft_failed", "numeric", "label"),
]


def _write(tmp_path, text):
    p = tmp_path / "cohort.csv"
    p.write_text(text, encoding="utf-8")
    return p


def test_load_three_rows(tmp_path):
    path = _write(
        tmp_path,
        "age,blood_type,donor_age,race,gender,graft_failed\n"
        "54,A,40,I,male,0\n61,O,,II,female,1\n47,,33,I,female,0\n",
    )
    c = load_cohort(path, SCHEMA)
    assert c.n_rows == 3
    assert list(c.recipient_features) == ["age", "blood_type"]
    assert list(c.organ_features) == ["donor_age"]
    assert c.feature_kinds == ("numeric", "categorical", "numeric")
    assert math.isnan(c.organ_features["donor_age"][1])
    assert c.recipient_features["blood_type"][2] is None
    assert c.labels.tolist() == [0, 1, 0]


def test_load_rejects_bad_label(tmp_path):
    path = _write(tmp_path, "age,blood_type,donor_age,race,gender,graft_failed\n54,A,40,I,male,2\n61,O,3,II,female,1\n")
    with pytest.raises(DataError):
        load_cohort(path, SCHEMA)


def test_load_rejects_unknown_column(tmp_path):
    path = _write(tmp_path, "age,blood_type,donor_age,race,gender,graft_failed,extra\n54,A,40,I,male,0,1\n")
    with pytest.raises(SchemaError):
        load_cohort(path, SCHEMA)


def test_unparseable_numeric_is_missing(tmp_path):
    path = _write(tmp_path, "age,blood_type,donor_age,race,gender,graft_failed\nabc,A,40,I,male,0\n61,O,3,II,female,1\n")
    c = load_cohort(path, SCHEMA)
    assert math.isnan(c.recipient_features["age"][0])


def test_schema_round_trip(tmp_path):
    write_schema(SCHEMA, tmp_path / "s.txt")
    assert read_schema(tmp_path / "s.txt") == SCHEMA
    with pytest.raises(SchemaError):
        ColumnSpec("x", "text", "recipient")


def test_cohort_write_read_round_trip(tmp_path):
    c = synth_generate(SynthConfig(n_rows=40, missing_rate=0.1, score_signal=0.3, seed=4))
    schema = write_cohort(c, tmp_path / "c.csv")
    back = load_cohort(tmp_path / "c.csv", schema)
    for name, col in c.recipient_features.items():
        other = back.recipient_features[name]
        if col.dtype == object:
            assert list(col) == list(other)
        else:
            np.testing.assert_array_equal(col, other)
    np.testing.assert_array_equal(c.score, back.score)
    assert back.labels.tolist() == c.labels.tolist()


def test_cohort_invariants():
    with pytest.raises(DataError):
        Cohort({"a": np.zeros(2)}, {}, {"race": np.array(["x", "y"], dtype=object)}, np.array([0, 2]), ("numeric",))
    with pytest.raises(SchemaError):
        Cohort({"a": np.zeros(2)}, {}, {}, np.array([0, 1]), ())
    with pytest.raises(DataError):
        Cohort({}, {}, {"race": np.array(["x", "x"], dtype=object)}, np.array([0, 1]), ()).validate()


# ---- imputation and encoding

def test_impute_fills_and_is_idempotent():
    c = synth_generate(SynthConfig(n_rows=60, missing_rate=0.3, seed=2))
    once = impute_missing(c)
    twice = impute_missing(once)
    for (name, kind, a), (_, _, b) in zip(once.feature_columns(), twice.feature_columns()):
        if kind == "numeric":
            assert not np.isnan(a).any()
            np.testing.assert_array_equal(a, b)
        else:
            assert None not in list(a)
            assert list(a) == list(b)


def test_vocabulary_order_and_na():
    assert fit_vocabulary(["b", "a", None, "b"]) == ["b", "a", NA_TOKEN]
    assert fit_vocabulary(["x"]) == ["x", NA_TOKEN]


def test_encode_examples():
    assert encode_integer(["A", "C", "A"], ["A", "B", "C"]).tolist() == [0, 2, 0]
    assert encode_integer(["Z"], ["A", NA_TOKEN]).tolist() == [1]
    assert encode_integer([], ["A"]).tolist() == []
    with pytest.raises(ConfigError):
        encode_integer(["A"], [])
    with pytest.raises(DataError):
        encode_integer(["Z"], ["A", "B"])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.sampled_from(["a", "b", "c", "d", None]), min_size=1, max_size=40))
def test_encoding_round_trip_and_onehot_rows(column):
    vocab = fit_vocabulary(column)
    codes = encode_integer(column, vocab)
    assert [vocab[c] for c in codes] == [NA_TOKEN if v is None else v for v in column]
    onehot = encode_onehot(column, vocab)
    assert (onehot.sum(axis=1) == 1.0).all()


def test_feature_view_shapes():
    c = Cohort(
        {"x1": np.array([1.0, 2.0, 3.0]), "x2": np.array([0.5, 0.1, 0.2])},
        {"k": np.array(["u", "v", "u"], dtype=object)},
        {"race": np.array(["A", "B", "A"], dtype=object)},
        np.array([0, 1, 0]),
        ("numeric", "numeric", "categorical"),
    )
    v = build_feature_views(c, fit_vocabularies(c))
    assert v.dense.shape == (3, 3) and v.n_sparse == 1
    assert v.dense[:, 0].tolist() == [0.0, 1.0, 0.0]
    assert v.dense_names == ["k", "x1", "x2"]
    numeric_only = Cohort({"x": np.array([1.0, 2.0])}, {}, {"race": np.array(["A", "B"], dtype=object)},
                          np.array([0, 1]), ("numeric",))
    v2 = build_feature_views(numeric_only, {})
    assert v2.n_sparse == 0
    np.testing.assert_array_equal(v2.dense, [[1.0], [2.0]])


def test_feature_views_reject_mismatch_and_missing():
    c = synth_generate(SynthConfig(n_rows=20, missing_rate=0.2, seed=1))
    with pytest.raises(SchemaError):
        build_feature_views(impute_missing(c), {})
    with pytest.raises(DataError):
        build_feature_views(c, fit_vocabularies(impute_missing(c)))


def test_eighty_feature_schema_widths():
    c = synth_generate(SynthConfig(n_rows=50, n_numeric=60, n_categorical=19, seed=0))
    v = Preprocessor.fit(c).views(c)
    assert v.dense.shape[1] == 80  # 60 numeric, 19 categorical, the race copy
    assert v.onehot_dim == sum(len(voc) for voc in v.vocabularies)
    assert (v.sparse < np.array([len(voc) for voc in v.vocabularies])).all()


def test_standardizer_scales_numeric_block_only():
    c = synth_generate(SynthConfig(n_rows=200, seed=3))
    v = Preprocessor.fit(c).views(c)
    s = Standardizer.fit(v)
    out = s.transform(v.dense)
    np.testing.assert_array_equal(out[:, : v.n_sparse], v.dense[:, : v.n_sparse])
    np.testing.assert_allclose(out[:, v.numeric_slice].mean(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(out[:, v.numeric_slice].std(axis=0), 1.0, atol=1e-12)
    assert Standardizer.from_dict(s.to_dict()).to_dict() == s.to_dict()


def test_unseen_test_category_routes_to_na():
    c = synth_generate(SynthConfig(n_rows=100, seed=5))
    train = c.take(np.arange(50))
    pre = Preprocessor.fit(train)
    test = c.take(np.arange(50, 100))
    name = "r_cat0"
    test.recipient_features[name][0] = "never-seen"
    codes = pre.views(test).sparse[:, pre.views(test).sparse_names.index(name)]
    assert pre.vocabs[name][codes[0]] == NA_TOKEN


# ---- folds

def test_fold_sizes():
    assert sorted(np.bincount(kfold_split(10, 5, 0).assignments).tolist()) == [2] * 5
    assert sorted(np.bincount(kfold_split(11, 5, 0).assignments).tolist()) == [2, 2, 2, 2, 3]
    np.testing.assert_array_equal(kfold_split(37, 4, 9).assignments, kfold_split(37, 4, 9).assignments)
    with pytest.raises(ConfigError):
        kfold_split(3, 5, 0)
    with pytest.raises(ConfigError):
        kfold_split(10, 1, 0)


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 200), st.integers(2, 10), st.integers(0, 2**31))
def test_folds_partition(n, k, seed):
    if k > n:
        return
    plan = kfold_split(n, k, seed)
    sizes = np.bincount(plan.assignments, minlength=k)
    assert (sizes > 0).all() and np.abs(sizes - n / k).max() <= 1
    seen = np.concatenate([plan.split(f)[1] for f in range(k)])
    assert sorted(seen.tolist()) == list(range(n))


# ---- synthetic cohorts

def test_synth_is_bit_identical():
    cfg = SynthConfig(n_rows=300, missing_rate=0.05, label_noise=0.1, seed=8)
    a, b = synth_generate(cfg), synth_generate(cfg)
    for name in a.recipient_features:
        assert np.array_equal(a.recipient_features[name], b.recipient_features[name], equal_nan=a.recipient_features[name].dtype != object)
    np.testing.assert_array_equal(a.labels, b.labels)
    np.testing.assert_array_equal(a.score, b.score)


def test_synth_zero_shift_rates_close():
    c = synth_generate(SynthConfig(n_rows=20000, group_spec=(GroupSpec("A", 0.5, 0.0), GroupSpec("B", 0.5, 0.0)), seed=0))
    g = c.sensitive["race"]
    assert abs(c.labels[g == "A"].mean() - c.labels[g == "B"].mean()) < 0.05


def test_synth_shift_matches_sigmoid():
    cfg = SynthConfig(
        n_rows=20000, n_numeric=2, n_categorical=1, signal_weights=(0.0, 0.0, 0.0),
        group_spec=(GroupSpec("A", 0.5, 1.0), GroupSpec("B", 0.5, -1.0)), seed=1,
    )
    c = synth_generate(cfg)
    g = c.sensitive["race"]
    assert c.labels[g == "A"].mean() == pytest.approx(1 / (1 + math.exp(-1)), abs=0.02)
    assert c.labels[g == "B"].mean() == pytest.approx(1 / (1 + math.exp(1)), abs=0.02)
    manifest = bias_manifest(cfg, c)
    assert manifest["injected_shifts"] == {"A": 1.0, "B": -1.0}


def test_full_label_noise_is_unlearnable():
    c = synth_generate(SynthConfig(n_rows=4000, label_noise=0.5, seed=2))
    train, test = c.take(np.arange(3000)), c.take(np.arange(3000, 4000))
    pre = Preprocessor.fit(train)
    model = fit_logistic(design_matrix(pre.views(train), pre.standardizer), train.labels)
    auc = roc_auc(model.predict_proba(design_matrix(pre.views(test), pre.standardizer)), test.labels)
    assert 0.45 <= auc <= 0.55


@pytest.mark.parametrize(
    "kwargs",
    [
        {"group_spec": (GroupSpec("A", 0.5), GroupSpec("B", 0.6))},
        {"group_spec": (GroupSpec("A", 1.0),)},
        {"n_rows": 9},
        {"label_noise": 0.6},
        {"proxy_features": 99},
    ],
)
def test_synth_config_validation(kwargs):
    base = {"n_rows": 100}
    base.update(kwargs)
    with pytest.raises(ConfigError):
        SynthConfig(**base)


def test_synth_config_json(tmp_path):
    cfg = SynthConfig(n_rows=50, group_spec=(GroupSpec("A", 0.3, 1.0), GroupSpec("B", 0.7, 0.0)), seed=3)
    p = tmp_path / "s.json"
    import json

    p.write_text(json.dumps(cfg.to_dict()))
    assert load_synth_config(p) == cfg
    with pytest.raises(ConfigError):
        SynthConfig.from_dict({"n_rows": 50, "bogus": 1})


def test_proxy_features_shift_group_means():
    cfg = SynthConfig(n_rows=5000, n_numeric=4, sensitive_as_feature=False, proxy_features=1, proxy_strength=1.0,
                      group_spec=(GroupSpec("A", 0.5, 1.0), GroupSpec("B", 0.5, -1.0)), seed=0)
    c = synth_generate(cfg)
    g = c.sensitive["race"]
    col = c.organ_features["o_num1"]
    assert col[g == "A"].mean() - col[g == "B"].mean() == pytest.approx(2.0, abs=0.1)
    assert "race_rec" not in c.recipient_features


def test_majority_group_ties_to_smallest_label():
    assert majority_group(["B", "A", "B", "A", "C"]) == "A"
    assert majority_group(["C", "C", "A"]) == "C"
