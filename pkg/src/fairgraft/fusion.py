"""Categorical network, sigmoid fusion with the distilled dense path, and
the two-step fairness-regularized training pipeline."""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from . import nn
from .dataio import Cohort, FoldPlan, Preprocessor, kfold_split, majority_group
from .distill import DistillConfig, DistilledNet, EpochLog, _batches, fit_distilled
from .errors import ConfigError, ShapeError
from .metrics import FairnessReport, evaluate_folds, fairness_loss
from .seeding import child_seed, stream
from .trees import GbdtModel, GbdtParams, fit_gbdt

log = logging.getLogger(__name__)


class CatNN:
    """Embedding tables, factorization machine and a deep net over sparse codes.

    The per-column tables V_j are stacked row-wise into one table and
    addressed through column offsets; the FM second-order term reuses them.
    """

    def __init__(self, vocab_sizes, emb_dim: int = 8, deep_hidden=(64, 32), rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.vocab_sizes = [int(c) for c in vocab_sizes]
        self.emb_dim = emb_dim
        self.offsets = np.r_[0, np.cumsum(self.vocab_sizes)[:-1]].astype(np.int64)
        total = int(sum(self.vocab_sizes))
        self.table = nn.Parameter(rng.normal(0.0, 0.01, size=(total, emb_dim)), "catnn.table")
        self.first = nn.Parameter(rng.normal(0.0, 0.01, size=total), "catnn.first")
        self.bias = nn.Parameter(0.0, "catnn.bias")
        self.deep = None
        if self.vocab_sizes:
            spec = nn.MlpSpec.hidden((len(self.vocab_sizes) * emb_dim, *deep_hidden, 1))
            self.deep = nn.MLP(spec, rng, prefix="catnn.deep")

    @property
    def n_columns(self) -> int:
        return len(self.vocab_sizes)

    def table_for(self, j: int) -> np.ndarray:
        """V_j, the embedding table of sparse column j (a view)."""
        return self.table.value[self.offsets[j]: self.offsets[j] + self.vocab_sizes[j]]

    def parameters(self):
        params = [self.table, self.first, self.bias]
        return params + (self.deep.parameters() if self.deep is not None else [])

    def _rows(self, sparse) -> np.ndarray:
        sparse = np.atleast_2d(np.asarray(sparse, dtype=np.int64))
        if sparse.shape[1] != self.n_columns:
            raise ShapeError(f"expected {self.n_columns} sparse columns, got {sparse.shape[1]}")
        sizes = np.asarray(self.vocab_sizes)
        if sparse.size and ((sparse < 0).any() or (sparse >= sizes).any()):
            raise IndexError("sparse code outside its column's vocabulary")
        return sparse + self.offsets

    def _fm(self, rows, n):
        if self.n_columns == 0:
            return self.bias + nn.Tensor(np.zeros(n)), None
        emb = nn.embedding_lookup(self.table, rows)  # N x S x d
        first = nn.embedding_lookup(self.first, rows).sum(axis=1)
        summed = emb.sum(axis=1)
        second = ((summed * summed).sum(axis=1) - (emb * emb).sum(axis=2).sum(axis=1)) * 0.5
        return first + second + self.bias, emb

    def fm_forward(self, sparse) -> nn.Tensor:
        rows = self._rows(sparse)
        return self._fm(rows, len(rows))[0]

    def forward(self, sparse) -> nn.Tensor:
        rows = self._rows(sparse)
        fm, emb = self._fm(rows, len(rows))
        if self.deep is None:
            return fm
        deep = self.deep(emb.reshape(len(rows), -1)).reshape(len(rows))
        return fm + deep

    def predict(self, sparse) -> np.ndarray:
        return self.forward(sparse).value

    def to_dict(self) -> dict:
        return {
            "vocab_sizes": self.vocab_sizes,
            "emb_dim": self.emb_dim,
            "deep_widths": None if self.deep is None else list(self.deep.spec.widths),
            **nn.params_to_dict(self.parameters()),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CatNN":
        widths = d["deep_widths"] or [0, 64, 32, 1]
        model = cls(d["vocab_sizes"], d["emb_dim"], tuple(widths[1:-1]))
        nn.params_from_dict(d, model.parameters())
        return model


def fm_forward(catnn: CatNN, sparse_row) -> float:
    return float(catnn.fm_forward(sparse_row).value[0])


def catnn_forward(catnn: CatNN, sparse_row) -> float:
    return float(catnn.forward(sparse_row).value[0])


class FusionModel:
    """sigmoid(w1 * y_KD(dense) + w2 * y_CatNN(sparse))."""

    def __init__(self, catnn: CatNN, distilled: DistilledNet, w1: float = 1.0, w2: float = 1.0):
        self.catnn = catnn
        self.distilled = distilled
        self.w1 = nn.Parameter(w1, "fusion.w1")
        self.w2 = nn.Parameter(w2, "fusion.w2")

    def parameters(self, freeze_dense: bool = False):
        params = [self.w1, self.w2] + self.catnn.parameters()
        if not freeze_dense:
            params += self.distilled.parameters()
        return params

    def logits(self, dense, sparse) -> nn.Tensor:
        dense = np.atleast_2d(np.asarray(dense, dtype=float))
        sparse = np.atleast_2d(np.asarray(sparse))
        if len(dense) != len(sparse):
            raise ShapeError("dense and sparse inputs differ in row count")
        return self.distilled.forward(dense) * self.w1 + self.catnn.forward(sparse) * self.w2

    def forward(self, dense, sparse) -> nn.Tensor:
        return nn.sigmoid(self.logits(dense, sparse))

    def predict(self, dense, sparse) -> np.ndarray:
        dense = np.atleast_2d(np.asarray(dense, dtype=float))
        if len(dense) != len(np.atleast_2d(np.asarray(sparse))):
            raise ShapeError("dense and sparse inputs differ in row count")
        z = self.w1.value * self.distilled.y_kd(dense) + self.w2.value * self.catnn.predict(sparse)
        return nn.sigmoid(z)

    def to_dict(self) -> dict:
        return {
            "format": "fusion",
            "version": nn.FORMAT_VERSION,
            "w1": float(self.w1.value),
            "w2": float(self.w2.value),
            "catnn": self.catnn.to_dict(),
            "distilled": self.distilled.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FusionModel":
        return cls(CatNN.from_dict(d["catnn"]), DistilledNet.from_dict(d["distilled"]), d["w1"], d["w2"])


def fuse_predict(model: FusionModel, dense_row, sparse_row) -> float:
    return float(model.predict(dense_row, sparse_row)[0])


@dataclass(frozen=True)
class TrainConfig:
    alpha: float = 0.0
    alpha_kg: float = 0.0
    maj: str | None = None
    epochs: int = 10
    lr: float = 0.001
    batch_size: int = 256
    seed: int = 0
    sensitive: str = "race"
    weight_decay: float = 0.01
    n_groups: int = 5
    d_leaf: int = 20
    dense_hidden: tuple = (64, 32)
    emb_dim: int = 8
    deep_hidden: tuple = (64, 32)
    leaf_epochs: int = 10
    freeze_dense: bool = False
    standardize: bool = True
    squash_step1: bool = False

    def __post_init__(self):
        object.__setattr__(self, "dense_hidden", tuple(self.dense_hidden))
        object.__setattr__(self, "deep_hidden", tuple(self.deep_hidden))
        if self.alpha < 0 or self.alpha_kg < 0:
            raise ConfigError("alpha and alpha_kg must be >= 0")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1 or self.lr <= 0:
            raise ConfigError("batch_size and lr must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


def train_end_to_end(
    model: FusionModel,
    dense: np.ndarray,
    sparse: np.ndarray,
    labels: np.ndarray,
    groups,
    config: TrainConfig,
    maj=None,
) -> list[EpochLog]:
    """Minimize mean cross-entropy + alpha * fairness_loss(y_hat, maj) per
    batch with AdamW. Batches without majority rows skip the penalty."""
    labels = np.asarray(labels, dtype=float)
    maj = config.maj if maj is None else maj
    maj_all = None
    if config.alpha > 0:
        if maj is None:
            maj = majority_group(groups)
        maj_all = np.asarray(groups, dtype=object) == maj
        if not maj_all.any():
            raise ConfigError(f"majority group {maj!r} not present in training data")
    opt = nn.AdamW(model.parameters(config.freeze_dense), lr=config.lr, weight_decay=config.weight_decay)
    rng = stream(config.seed, "end-to-end", "batches")
    history = []
    for _ in range(config.epochs):
        ce_parts, fair_parts, totals, skipped = [], [], [], 0
        for idx in _batches(len(labels), config.batch_size, rng):
            p = model.forward(dense[idx], sparse[idx])
            loss = nn.cross_entropy(p, labels[idx])
            ce = float(loss.value)
            fair_val = 0.0
            if maj_all is not None:
                fair = fairness_loss(p, maj_all[idx])
                if fair is None:
                    skipped += 1
                    log.debug("batch without majority rows; fairness term skipped")
                else:
                    term = fair * config.alpha
                    fair_val = float(term.value)
                    loss = loss + term
            opt.zero_grad()
            loss.backward()
            opt.step()
            ce_parts.append(ce)
            fair_parts.append(fair_val)
            totals.append(float(loss.value))
        history.append(EpochLog(float(np.mean(ce_parts)), float(np.mean(fair_parts)), float(np.mean(totals)), skipped))
    return history


@dataclass
class FairModel:
    """A fitted two-step pipeline: preprocessing, teacher, fused network."""

    preprocessor: Preprocessor
    teacher: GbdtModel
    fusion: FusionModel
    config: TrainConfig
    maj: str | None
    history: dict = field(default_factory=dict)

    def predict_proba(self, cohort: Cohort) -> np.ndarray:
        views = self.preprocessor.views(cohort)
        return self.fusion.predict(self.preprocessor.nn_dense(views), views.sparse)

    def y_kd(self, cohort: Cohort) -> np.ndarray:
        views = self.preprocessor.views(cohort)
        return self.fusion.distilled.y_kd(self.preprocessor.nn_dense(views))

    def to_dict(self) -> dict:
        return {
            "format": "fair-model",
            "version": nn.FORMAT_VERSION,
            "config": self.config.to_dict(),
            "config_hash": self.config.digest(),
            "maj": self.maj,
            "preprocessor": self.preprocessor.to_dict(),
            "teacher": self.teacher.to_dict(),
            "fusion": self.fusion.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FairModel":
        return cls(
            Preprocessor.from_dict(d["preprocessor"]),
            GbdtModel.from_dict(d["teacher"]),
            FusionModel.from_dict(d["fusion"]),
            TrainConfig(**d["config"]),
            d["maj"],
        )


def fit_fair_model(
    train: Cohort,
    config: TrainConfig,
    gbdt_params: GbdtParams = GbdtParams(),
    teacher: GbdtModel | None = None,
) -> FairModel:
    """preprocess -> teacher GBDT -> group/embed/distill (alpha_kg) ->
    end-to-end fusion training (alpha)."""
    if config.sensitive not in train.sensitive:
        raise ConfigError(f"unknown sensitive attribute {config.sensitive!r}")
    groups = train.sensitive[config.sensitive]
    pre = Preprocessor.fit(train, standardize=config.standardize)
    views = pre.views(train)
    X_nn = pre.nn_dense(views)
    if teacher is None:
        teacher = fit_gbdt(views.dense, train.labels, gbdt_params)
    maj = config.maj if config.maj is not None else majority_group(groups)
    if config.alpha_kg > 0 or config.alpha > 0:
        if maj not in set(np.asarray(groups, dtype=object).tolist()):
            raise ConfigError(f"majority group {maj!r} not present in training data")
    dcfg = DistillConfig(
        epochs=config.epochs,
        lr=config.lr,
        batch_size=config.batch_size,
        d_leaf=config.d_leaf,
        hidden=config.dense_hidden,
        leaf_epochs=config.leaf_epochs,
        seed=child_seed(config.seed, "distill"),
        squash=config.squash_step1,
    )
    distilled = fit_distilled(
        teacher, views.dense, X_nn, config.n_groups, groups, config.alpha_kg, maj if config.alpha_kg > 0 else None, dcfg
    )
    catnn = CatNN(pre.vocab_sizes, config.emb_dim, config.deep_hidden, stream(config.seed, "catnn", "init"))
    fusion = FusionModel(catnn, distilled)
    step1 = [asdict(e) for e in distilled.history]
    step2 = train_end_to_end(fusion, X_nn, views.sparse, train.labels, groups, config, maj)
    return FairModel(pre, teacher, fusion, config, maj, {"step1": step1, "step2": [asdict(e) for e in step2]})


@dataclass
class TwoStepResult:
    models: list
    report: FairnessReport


def two_step_train(
    cohort: Cohort,
    config: TrainConfig,
    gbdt_params: GbdtParams = GbdtParams(),
    plan: FoldPlan | None = None,
    k: int = 5,
    teachers: dict | None = None,
    threshold: float = 0.5,
    report_attributes=None,
    jobs: int = 1,
) -> TwoStepResult:
    """Cross-validated two-step training.

    ``teachers`` maps fold index to a fitted GbdtModel and is filled in as
    folds are trained, so ablation runs can share one teacher per fold.
    """
    plan = plan if plan is not None else kfold_split(cohort.n_rows, k, config.seed)
    teachers = teachers if teachers is not None else {}
    models = {}

    def factory(train, fold):
        model = fit_fair_model(train, config, gbdt_params, teachers.get(fold))
        teachers.setdefault(fold, model.teacher)
        models[fold] = model
        return model.predict_proba

    attrs = report_attributes or [config.sensitive]
    report = evaluate_folds(factory, cohort, plan, attrs, threshold, jobs)
    return TwoStepResult([models[f] for f in range(plan.k)], report)
