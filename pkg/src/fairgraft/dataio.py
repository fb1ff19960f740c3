"""Cohort tables, CSV ingestion, imputation, categorical encoders, folds and
synthetic cohorts with injected group bias."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, DataError, SchemaError
from .seeding import stream

NA_TOKEN = "<NA>"
KINDS = ("numeric", "categorical")
ROLES = ("recipient", "organ", "sensitive", "label", "score")


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    kind: str
    role: str

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"column {self.name!r}: kind must be one of {KINDS}, got {self.kind!r}")
        if self.role not in ROLES:
            raise SchemaError(f"column {self.name!r}: role must be one of {ROLES}, got {self.role!r}")


def read_schema(path) -> list[ColumnSpec]:
    """Parse a line-oriented ``name,kind,role`` descriptor file.

    Blank lines and lines starting with ``#`` are ignored.
    """
    specs = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 3:
            raise SchemaError(f"{path}:{lineno}: expected 'name,kind,role', got {line!r}")
        specs.append(ColumnSpec(*parts))
    return specs


def write_schema(specs: Sequence[ColumnSpec], path) -> None:
    lines = [f"{s.name},{s.kind},{s.role}" for s in specs]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class Cohort:
    """Raw cohort: recipient/organ features, sensitive groups and labels.

    Numeric columns are float arrays with NaN marking a missing cell;
    categorical and sensitive columns are object arrays of ``str`` with
    ``None`` marking a missing cell. ``feature_kinds`` lists the kind of each
    recipient column followed by each organ column.
    """

    recipient_features: dict
    organ_features: dict
    sensitive: dict
    labels: np.ndarray
    feature_kinds: tuple
    score: np.ndarray | None = None

    def __post_init__(self):
        n = len(self.labels)
        if n == 0:
            raise DataError("cohort has no rows")
        for table in (self.recipient_features, self.organ_features, self.sensitive):
            for name, col in table.items():
                if len(col) != n:
                    raise DataError(f"column {name!r} has {len(col)} rows, labels have {n}")
        if self.score is not None and len(self.score) != n:
            raise DataError("score column length does not match labels")
        if not np.all((self.labels == 0) | (self.labels == 1)):
            raise DataError("labels must be exactly 0 or 1")
        if len(self.feature_kinds) != len(self.recipient_features) + len(self.organ_features):
            raise SchemaError("feature_kinds length must equal recipient + organ column count")

    @property
    def n_rows(self) -> int:
        return len(self.labels)

    @property
    def feature_names(self) -> list[str]:
        return list(self.recipient_features) + list(self.organ_features)

    def feature_columns(self) -> list[tuple[str, str, np.ndarray]]:
        cols = list(self.recipient_features.items()) + list(self.organ_features.items())
        return [(name, kind, col) for (name, col), kind in zip(cols, self.feature_kinds)]

    def validate(self) -> "Cohort":
        """Check the ingestion-time invariants that fold subsets may break."""
        for name, col in self.sensitive.items():
            present = {v for v in col if v is not None}
            if len(present) < 2:
                raise DataError(f"sensitive column {name!r} needs at least 2 distinct groups")
        return self

    def take(self, idx) -> "Cohort":
        idx = np.asarray(idx)
        return Cohort(
            {k: v[idx] for k, v in self.recipient_features.items()},
            {k: v[idx] for k, v in self.organ_features.items()},
            {k: v[idx] for k, v in self.sensitive.items()},
            self.labels[idx],
            self.feature_kinds,
            None if self.score is None else self.score[idx],
        )


def _parse_float(cell: str) -> float:
    try:
        value = float(cell)
    except ValueError:
        return math.nan
    return value if math.isfinite(value) else math.nan


def load_cohort(path, schema: Sequence[ColumnSpec]) -> Cohort:
    """Read a UTF-8 CSV whose header matches ``schema``.

    Empty cells are recorded as missing. Numeric cells that do not parse are
    also recorded as missing rather than rejected.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = list(reader)

    by_name = {s.name: s for s in schema}
    unknown = [h for h in header if h not in by_name]
    if unknown:
        raise SchemaError(f"{path}: columns not in schema: {unknown}")
    absent = [s.name for s in schema if s.name not in header]
    if absent:
        raise SchemaError(f"{path}: schema columns missing from header: {absent}")
    labels_spec = [s for s in schema if s.role == "label"]
    if len(labels_spec) != 1:
        raise SchemaError("schema must name exactly one label column")

    pos = {h: i for i, h in enumerate(header)}
    for lineno, row in enumerate(rows, 2):
        if len(row) != len(header):
            raise DataError(f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}")

    def raw(name):
        return [row[pos[name]] for row in rows]

    recipient, organ, sensitive, kinds = {}, {}, {}, []
    score = None
    for spec in schema:
        cells = raw(spec.name)
        if spec.role == "label":
            bad = sorted({c for c in cells if c.strip() not in ("0", "1")})
            if bad:
                raise DataError(f"label column {spec.name!r} has non-binary values {bad[:5]}")
            labels = np.array([int(c) for c in cells], dtype=np.int8)
            continue
        if spec.role == "score":
            score = np.array([_parse_float(c) for c in cells])
            continue
        if spec.role == "sensitive":
            sensitive[spec.name] = np.array([c if c != "" else None for c in cells], dtype=object)
            continue
        if spec.kind == "numeric":
            col = np.array([_parse_float(c) for c in cells])
        else:
            col = np.array([c if c != "" else None for c in cells], dtype=object)
        (recipient if spec.role == "recipient" else organ)[spec.name] = col

    # kinds follow recipient-then-organ order, not file order
    kind_of = {s.name: s.kind for s in schema}
    kinds = [kind_of[n] for n in list(recipient) + list(organ)]
    return Cohort(recipient, organ, sensitive, labels, tuple(kinds), score).validate()


def cohort_schema(cohort: Cohort, label_name: str = "graft_failed", score_name: str = "meld") -> list[ColumnSpec]:
    specs = []
    kinds = iter(cohort.feature_kinds)
    for name in cohort.recipient_features:
        specs.append(ColumnSpec(name, next(kinds), "recipient"))
    for name in cohort.organ_features:
        specs.append(ColumnSpec(name, next(kinds), "organ"))
    for name in cohort.sensitive:
        specs.append(ColumnSpec(name, "categorical", "sensitive"))
    if cohort.score is not None:
        specs.append(ColumnSpec(score_name, "numeric", "score"))
    specs.append(ColumnSpec(label_name, "categorical", "label"))
    return specs


def write_cohort(cohort: Cohort, path, schema: Sequence[ColumnSpec] | None = None) -> list[ColumnSpec]:
    """Write ``cohort`` as CSV; floats use ``repr`` so a reload is exact."""
    schema = list(schema) if schema is not None else cohort_schema(cohort)
    columns = []
    for spec in schema:
        if spec.role == "label":
            columns.append([str(int(v)) for v in cohort.labels])
        elif spec.role == "score":
            columns.append(["" if np.isnan(v) else repr(float(v)) for v in cohort.score])
        elif spec.role == "sensitive":
            columns.append(["" if v is None else str(v) for v in cohort.sensitive[spec.name]])
        else:
            table = cohort.recipient_features if spec.role == "recipient" else cohort.organ_features
            col = table[spec.name]
            if spec.kind == "numeric":
                columns.append(["" if np.isnan(v) else repr(float(v)) for v in col])
            else:
                columns.append(["" if v is None else str(v) for v in col])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([s.name for s in schema])
        writer.writerows(zip(*columns))
    return schema


def impute_missing(cohort: Cohort) -> Cohort:
    """Zero-fill missing numeric cells; missing categoricals become ``<NA>``."""

    def fill(table, kinds):
        out = {}
        for (name, col), kind in zip(table.items(), kinds):
            if kind == "numeric":
                out[name] = np.where(np.isnan(col), 0.0, col)
            else:
                out[name] = np.array([NA_TOKEN if v is None else v for v in col], dtype=object)
        return out

    m_r = len(cohort.recipient_features)
    return Cohort(
        fill(cohort.recipient_features, cohort.feature_kinds[:m_r]),
        fill(cohort.organ_features, cohort.feature_kinds[m_r:]),
        dict(cohort.sensitive),
        cohort.labels,
        cohort.feature_kinds,
        cohort.score,
    )


def fit_vocabulary(column: Iterable) -> list[str]:
    """Tokens in first-appearance order, with ``<NA>`` always last."""
    vocab = list(dict.fromkeys(NA_TOKEN if v is None else v for v in column))
    if NA_TOKEN in vocab:
        vocab.remove(NA_TOKEN)
    vocab.append(NA_TOKEN)
    return vocab


def fit_vocabularies(cohort: Cohort) -> dict[str, list[str]]:
    return {name: fit_vocabulary(col) for name, kind, col in cohort.feature_columns() if kind == "categorical"}


def encode_integer(column: Sequence, vocab: Sequence[str]) -> np.ndarray:
    if len(vocab) == 0:
        raise ConfigError("empty vocabulary")
    index = {tok: i for i, tok in enumerate(vocab)}
    fallback = index.get(NA_TOKEN)
    codes = np.empty(len(column), dtype=np.int64)
    for i, v in enumerate(column):
        code = index.get(NA_TOKEN if v is None else v, fallback)
        if code is None:
            raise DataError(f"value {v!r} not in vocabulary and no {NA_TOKEN} slot to fall back on")
        codes[i] = code
    return codes


def encode_onehot(column: Sequence, vocab: Sequence[str]) -> np.ndarray:
    codes = encode_integer(column, vocab)
    out = np.zeros((len(codes), len(vocab)))
    out[np.arange(len(codes)), codes] = 1.0
    return out


@dataclass(frozen=True)
class FeatureViews:
    """Model-ready views of a cohort.

    ``dense`` holds the integer-coded categoricals followed by the numeric
    columns; ``sparse`` holds the same codes for embedding lookup.
    """

    sparse: np.ndarray
    dense: np.ndarray
    vocabularies: list
    sparse_names: list
    numeric_names: list

    @property
    def onehot_dim(self) -> int:
        return sum(len(v) for v in self.vocabularies)

    @property
    def n_sparse(self) -> int:
        return self.sparse.shape[1]

    @property
    def dense_names(self) -> list[str]:
        return list(self.sparse_names) + list(self.numeric_names)

    @property
    def numeric_slice(self) -> slice:
        return slice(self.n_sparse, self.dense.shape[1])

    def onehot(self) -> np.ndarray:
        n = self.sparse.shape[0]
        out = np.zeros((n, self.onehot_dim))
        offset = 0
        for j, vocab in enumerate(self.vocabularies):
            out[np.arange(n), offset + self.sparse[:, j]] = 1.0
            offset += len(vocab)
        return out

    def take(self, idx) -> "FeatureViews":
        return FeatureViews(self.sparse[idx], self.dense[idx], self.vocabularies, self.sparse_names, self.numeric_names)


def build_feature_views(cohort: Cohort, vocabs: dict[str, list[str]]) -> FeatureViews:
    cat_names = [n for n, kind, _ in cohort.feature_columns() if kind == "categorical"]
    if set(cat_names) != set(vocabs):
        raise SchemaError(f"vocabularies cover {sorted(vocabs)}, categorical columns are {sorted(cat_names)}")
    n = cohort.n_rows
    codes, nums, num_names = [], [], []
    for name, kind, col in cohort.feature_columns():
        if kind == "categorical":
            codes.append(encode_integer(col, vocabs[name]))
        else:
            if np.isnan(col).any():
                raise DataError(f"numeric column {name!r} has missing cells; impute first")
            nums.append(np.asarray(col, dtype=float))
            num_names.append(name)
    sparse = np.column_stack(codes) if codes else np.zeros((n, 0), dtype=np.int64)
    numeric = np.column_stack(nums) if nums else np.zeros((n, 0))
    dense = np.hstack([sparse.astype(float), numeric])
    return FeatureViews(sparse, dense, [list(vocabs[c]) for c in cat_names], cat_names, num_names)


@dataclass
class Standardizer:
    """Per-column mean/std scaling of the numeric block of ``dense``.

    Integer-coded categoricals pass through unchanged. Fitted on a training
    split; zero-variance columns get unit scale.
    """

    mean: np.ndarray
    std: np.ndarray
    start: int
    enabled: bool = True

    @classmethod
    def fit(cls, views: FeatureViews, enabled: bool = True) -> "Standardizer":
        block = views.dense[:, views.numeric_slice]
        mean = block.mean(axis=0) if len(block) else np.zeros(block.shape[1])
        std = block.std(axis=0) if len(block) else np.ones(block.shape[1])
        std = np.where(std > 0, std, 1.0)
        return cls(mean, std, views.n_sparse, enabled)

    def transform(self, dense: np.ndarray) -> np.ndarray:
        if not self.enabled:
            return dense
        out = dense.copy()
        out[:, self.start:] = (out[:, self.start:] - self.mean) / self.std
        return out

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist(), "start": self.start, "enabled": self.enabled}

    @classmethod
    def from_dict(cls, d: dict) -> "Standardizer":
        return cls(np.array(d["mean"], dtype=float), np.array(d["std"], dtype=float), d["start"], d["enabled"])


@dataclass(frozen=True)
class FoldPlan:
    k: int
    assignments: np.ndarray
    seed: int

    def split(self, fold: int) -> tuple[np.ndarray, np.ndarray]:
        test = np.flatnonzero(self.assignments == fold)
        train = np.flatnonzero(self.assignments != fold)
        return train, test


def kfold_split(n: int, k: int, seed: int) -> FoldPlan:
    """Unstratified random partition of ``range(n)`` into ``k`` folds."""
    if k < 2:
        raise ConfigError(f"need k >= 2 folds, got {k}")
    if k > n:
        raise ConfigError(f"cannot split {n} rows into {k} folds")
    perm = stream(seed, "kfold").permutation(n)
    assignments = np.empty(n, dtype=np.int64)
    assignments[perm] = np.arange(n) % k
    return FoldPlan(k, assignments, seed)


@dataclass(frozen=True)
class GroupSpec:
    label: str
    proportion: float
    base_rate_shift: float = 0.0


@dataclass(frozen=True)
class SynthConfig:
    """Synthetic cohort recipe.

    The label log-odds are ``intercept + signal_weights . features +
    shift(group)``; labels are then flipped with probability ``label_noise``.
    ``signal_weights=None`` draws weights from the seed so the linear signal
    has standard deviation ``signal_scale``, spread over the first
    ``n_informative`` numeric features (all features when None). With ``sensitive_as_feature`` the
    group label is also recorded as a recipient categorical column, which is
    how group bias reaches a model. ``proxy_features`` trailing numeric columns
    are shifted by ``proxy_strength * shift(group)``, leaking group membership
    through otherwise uninformative features.
    """

    n_rows: int
    n_numeric: int = 8
    n_categorical: int = 4
    group_spec: tuple = (GroupSpec("A", 0.6, 0.0), GroupSpec("B", 0.4, 0.0))
    label_noise: float = 0.0
    signal_weights: tuple | None = None
    seed: int = 0
    sensitive_name: str = "race"
    sensitive_as_feature: bool = True
    categorical_cardinality: int = 5
    signal_scale: float = 1.5
    intercept: float = 0.0
    missing_rate: float = 0.0
    score_signal: float = 0.0
    n_informative: int | None = None
    proxy_features: int = 0
    proxy_strength: float = 0.0

    def __post_init__(self):
        object.__setattr__(
            self, "group_spec", tuple(g if isinstance(g, GroupSpec) else GroupSpec(*g) for g in self.group_spec)
        )
        if self.signal_weights is not None:
            object.__setattr__(self, "signal_weights", tuple(float(w) for w in self.signal_weights))
        self.check()

    def check(self) -> None:
        if self.n_rows < 10:
            raise ConfigError(f"n_rows must be >= 10, got {self.n_rows}")
        if self.n_numeric < 0 or self.n_categorical < 0:
            raise ConfigError("feature counts must be non-negative")
        if len(self.group_spec) < 2:
            raise ConfigError("group_spec needs at least 2 groups")
        props = [g.proportion for g in self.group_spec]
        if any(p <= 0 for p in props) or abs(sum(props) - 1.0) > 1e-9:
            raise ConfigError(f"group proportions must be positive and sum to 1, got {props}")
        if len({g.label for g in self.group_spec}) != len(self.group_spec):
            raise ConfigError("group labels must be distinct")
        if not 0.0 <= self.label_noise <= 0.5:
            raise ConfigError(f"label_noise must be in [0, 0.5], got {self.label_noise}")
        if self.signal_weights is not None and len(self.signal_weights) != self.n_numeric + self.n_categorical:
            raise ConfigError("signal_weights needs one weight per numeric and categorical feature")
        if self.categorical_cardinality < 2:
            raise ConfigError("categorical_cardinality must be >= 2")
        if not 0.0 <= self.missing_rate < 1.0:
            raise ConfigError("missing_rate must be in [0, 1)")
        if not -1.0 <= self.score_signal <= 1.0:
            raise ConfigError("score_signal must be in [-1, 1]")
        if self.n_informative is not None and not 0 <= self.n_informative <= self.n_numeric + self.n_categorical:
            raise ConfigError("n_informative must be between 0 and the feature count")
        if not 0 <= self.proxy_features <= self.n_numeric:
            raise ConfigError("proxy_features must be between 0 and n_numeric")

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["group_spec"] = [[g.label, g.proportion, g.base_rate_shift] for g in self.group_spec]
        d["signal_weights"] = None if self.signal_weights is None else list(self.signal_weights)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown SynthConfig fields: {sorted(unknown)}")
        if "group_spec" in d:
            specs = []
            for g in d["group_spec"]:
                if isinstance(g, dict):
                    specs.append(GroupSpec(str(g["label"]), float(g["proportion"]), float(g.get("base_rate_shift", 0.0))))
                else:
                    specs.append(GroupSpec(str(g[0]), float(g[1]), float(g[2]) if len(g) > 2 else 0.0))
            d["group_spec"] = tuple(specs)
        if d.get("signal_weights") is not None:
            d["signal_weights"] = tuple(d["signal_weights"])
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None


def load_synth_config(path) -> SynthConfig:
    try:
        return SynthConfig.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def synth_generate(config: SynthConfig) -> Cohort:
    """Draw a cohort following ``config``; identical seeds give identical data."""
    config.check()
    rng = stream(config.seed, "synth")
    n = config.n_rows
    n_feat = config.n_numeric + config.n_categorical

    groups = config.group_spec
    g_idx = rng.choice(len(groups), size=n, p=[g.proportion for g in groups])
    numeric = rng.standard_normal((n, config.n_numeric))
    shifts = np.array([g.base_rate_shift for g in groups])
    if config.proxy_features:
        numeric[:, config.n_numeric - config.proxy_features :] += config.proxy_strength * shifts[g_idx][:, None]
    card = config.categorical_cardinality
    cat_codes = rng.integers(0, card, size=(n, config.n_categorical))

    if config.signal_weights is None:
        k = n_feat if config.n_informative is None else config.n_informative
        weights = np.zeros(n_feat)
        weights[:k] = rng.standard_normal(k) * config.signal_scale / math.sqrt(max(k, 1))
    else:
        weights = np.asarray(config.signal_weights, dtype=float)
    # evenly spaced level effects with unit variance under a uniform draw
    levels = np.linspace(-1.0, 1.0, card) * math.sqrt(3.0 * (card - 1) / (card + 1))
    design = np.hstack([numeric, levels[cat_codes]])
    logit = config.intercept + design @ weights + shifts[g_idx]
    y = (rng.random(n) < _sigmoid(logit)).astype(np.int8)
    flip = rng.random(n) < config.label_noise
    y = np.where(flip, 1 - y, y).astype(np.int8)

    risk = design @ weights
    risk_std = risk.std() if n_feat and risk.std() > 0 else 1.0
    noise = rng.standard_normal(n)
    s = config.score_signal
    score = 20.0 + 5.0 * (s * (risk - risk.mean()) / risk_std + math.sqrt(1.0 - s * s) * noise)

    missing = rng.random((n, n_feat)) < config.missing_rate

    recipient, organ, kinds_r, kinds_o = {}, {}, [], []
    group_labels = np.array([groups[i].label for i in g_idx], dtype=object)
    if config.sensitive_as_feature:
        recipient[f"{config.sensitive_name}_rec"] = group_labels.copy()
        kinds_r.append("categorical")
    r_num = (config.n_numeric + 1) // 2
    r_cat = (config.n_categorical + 1) // 2
    for j in range(config.n_numeric):
        col = np.where(missing[:, j], np.nan, numeric[:, j])
        if j < r_num:
            recipient[f"r_num{j}"] = col
            kinds_r.append("numeric")
        else:
            organ[f"o_num{j - r_num}"] = col
            kinds_o.append("numeric")
    for j in range(config.n_categorical):
        miss = missing[:, config.n_numeric + j]
        col = np.array([None if m else f"k{c}" for c, m in zip(cat_codes[:, j], miss)], dtype=object)
        if j < r_cat:
            recipient[f"r_cat{j}"] = col
            kinds_r.append("categorical")
        else:
            organ[f"o_cat{j - r_cat}"] = col
            kinds_o.append("categorical")

    return Cohort(
        recipient, organ, {config.sensitive_name: group_labels}, y, tuple(kinds_r + kinds_o), score
    ).validate()


def bias_manifest(config: SynthConfig, cohort: Cohort) -> dict:
    """Injected shifts alongside the realized per-group label rates."""
    groups = cohort.sensitive[config.sensitive_name]
    realized = {}
    for g in config.group_spec:
        mask = groups == g.label
        realized[g.label] = {
            "count": int(mask.sum()),
            "positive_rate": float(cohort.labels[mask].mean()) if mask.any() else None,
        }
    return {
        "sensitive": config.sensitive_name,
        "injected_shifts": {g.label: g.base_rate_shift for g in config.group_spec},
        "proportions": {g.label: g.proportion for g in config.group_spec},
        "label_noise": config.label_noise,
        "realized": realized,
    }


@dataclass
class Preprocessor:
    """Vocabularies and numeric scaling fitted on one training split."""

    vocabs: dict
    standardizer: Standardizer

    @classmethod
    def fit(cls, cohort: Cohort, standardize: bool = True) -> "Preprocessor":
        cohort = impute_missing(cohort)
        vocabs = fit_vocabularies(cohort)
        views = build_feature_views(cohort, vocabs)
        return cls(vocabs, Standardizer.fit(views, enabled=standardize))

    def views(self, cohort: Cohort) -> FeatureViews:
        return build_feature_views(impute_missing(cohort), self.vocabs)

    def nn_dense(self, views: FeatureViews) -> np.ndarray:
        return self.standardizer.transform(views.dense)

    @property
    def vocab_sizes(self) -> list[int]:
        return [len(v) for v in self.vocabs.values()]

    def to_dict(self) -> dict:
        return {"vocabs": self.vocabs, "standardizer": self.standardizer.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "Preprocessor":
        return cls({k: list(v) for k, v in d["vocabs"].items()}, Standardizer.from_dict(d["standardizer"]))


def majority_group(groups) -> str:
    """Largest group; ties go to the lexicographically smallest label."""
    labels, counts = np.unique(np.asarray([g for g in groups if g is not None], dtype=str), return_counts=True)
    if len(labels) == 0:
        raise DataError("no group labels present")
    return str(labels[np.flatnonzero(counts == counts.max())[0]])
