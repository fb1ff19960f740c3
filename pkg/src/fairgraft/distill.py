"""Tree-to-network distillation with an optional fairness penalty.

Trees of the teacher are cut into contiguous groups. For each group a leaf
embedding compresses the multi-hot leaf membership of a row into a short
vector that still predicts the group's margin contribution; a dense network
is then trained to produce that vector from the raw features the group's
trees split on.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from . import nn
from .errors import ConfigError, ShapeError
from .metrics import fairness_loss
from .seeding import child_seed, stream
from .trees import GbdtModel, used_feature_indices


@dataclass
class TreeGroup:
    members: list
    used_features: list
    leaf_counts: list
    leaf_values: np.ndarray
    learning_rate: float

    @property
    def leaf_dim(self) -> int:
        return int(sum(self.leaf_counts))

    @property
    def offsets(self) -> np.ndarray:
        return np.r_[0, np.cumsum(self.leaf_counts)[:-1]].astype(np.int64)

    def leaf_columns(self, leaf_ids: np.ndarray) -> np.ndarray:
        """Active multi-hot columns (N x members) from full ensemble leaf ids."""
        return leaf_ids[:, self.members] + self.offsets

    def margins(self, leaf_ids: np.ndarray) -> np.ndarray:
        """The teacher's contribution eta * sum(q) from this group's trees."""
        return self.learning_rate * self.leaf_values[self.leaf_columns(leaf_ids)].sum(axis=1)

    def to_dict(self) -> dict:
        return {
            "members": list(self.members),
            "used_features": list(self.used_features),
            "leaf_counts": list(self.leaf_counts),
            "leaf_values": self.leaf_values.tolist(),
            "learning_rate": self.learning_rate,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TreeGroup":
        return cls(d["members"], d["used_features"], d["leaf_counts"], np.array(d["leaf_values"]), d["learning_rate"])


def group_trees(model: GbdtModel, n_groups: int) -> list[TreeGroup]:
    """Contiguous groups in boosting order; earlier groups take the remainder."""
    n_trees = len(model.trees)
    if not 1 <= n_groups <= n_trees:
        raise ConfigError(f"n_groups must be in [1, {n_trees}], got {n_groups}")
    base, extra = divmod(n_trees, n_groups)
    groups, start = [], 0
    for g in range(n_groups):
        size = base + (1 if g < extra else 0)
        members = list(range(start, start + size))
        trees = [model.trees[t] for t in members]
        groups.append(
            TreeGroup(
                members,
                used_feature_indices(trees),
                [t.leaf_count for t in trees],
                np.concatenate([t.leaf_values for t in trees]),
                model.learning_rate,
            )
        )
        start += size
    return groups


@dataclass
class DistillConfig:
    epochs: int = 10
    lr: float = 0.001
    batch_size: int = 256
    d_leaf: int = 20
    hidden: tuple = (64, 32)
    leaf_epochs: int = 10
    seed: int = 0
    squash: bool = False


class LeafEmbedding:
    """Multi-hot leaf vector -> d_leaf embedding -> group margin."""

    def __init__(self, leaf_dim: int, d_leaf: int, rng: np.random.Generator):
        if d_leaf >= leaf_dim:
            raise ConfigError(f"d_leaf={d_leaf} must be smaller than leaf_dim={leaf_dim}")
        if d_leaf < 1:
            raise ConfigError("d_leaf must be >= 1")
        self.projection = nn.Parameter(rng.normal(0.0, 0.01, size=(leaf_dim, d_leaf)), "leaf.projection")
        self.w_out = nn.Parameter(nn.glorot(rng, d_leaf, 1)[:, 0], "leaf.w_out")
        self.b_out = nn.Parameter(0.0, "leaf.b_out")

    @property
    def d_leaf(self) -> int:
        return self.projection.shape[1]

    def parameters(self):
        return [self.projection, self.w_out, self.b_out]

    def embed(self, columns: np.ndarray) -> np.ndarray:
        return self.projection.value[columns].sum(axis=1)

    def output(self, emb):
        """Map embeddings (array or tensor) to margin contributions."""
        if isinstance(emb, nn.Tensor):
            return emb @ self.w_out + self.b_out
        return emb @ self.w_out.value + self.b_out.value

    def predict(self, columns: np.ndarray) -> np.ndarray:
        return self.output(self.embed(columns))

    def normalize(self, columns: np.ndarray) -> None:
        """Center and rescale the embedding to unit mean variance over
        ``columns``, compensating in the output map so ``predict`` is
        unchanged. Gives the dense network unit-scale targets."""
        e = self.embed(columns)
        mu = e.mean(axis=0)
        scale = float(np.sqrt(e.var(axis=0).mean()))
        if not scale > 0:
            return
        members = columns.shape[1]
        w = self.w_out.value
        self.b_out.value[...] = self.b_out.value + w @ mu
        self.w_out.value[...] = w * scale
        # each row holds one leaf per member tree, so spread the shift evenly
        self.projection.value[...] = (self.projection.value - mu / members) / scale

    def to_dict(self) -> dict:
        return nn.params_to_dict(self.parameters())

    @classmethod
    def from_dict(cls, d: dict) -> "LeafEmbedding":
        leaf_dim, d_leaf = d["params"][0]["shape"]
        emb = cls(leaf_dim, d_leaf, np.random.default_rng(0))
        nn.params_from_dict(d, emb.parameters())
        return emb


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    perm = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield perm[start: start + batch_size]


def fit_leaf_embedding(
    group: TreeGroup,
    leaf_columns: np.ndarray,
    group_margins: np.ndarray,
    d_leaf: int = 20,
    epochs: int = 10,
    lr: float = 0.001,
    batch_size: int = 256,
    seed: int = 0,
) -> tuple[LeafEmbedding, list]:
    """Fit projection and output map so that w_out . (P^T onehot) + b_out
    regresses the group margins under MSE. Returns the embedding and per-epoch
    mean loss."""
    leaf_columns = np.asarray(leaf_columns, dtype=np.int64)
    if leaf_columns.ndim != 2 or len(leaf_columns) != len(group_margins):
        raise ShapeError("leaf_columns must be N x members and match group_margins")
    emb = LeafEmbedding(group.leaf_dim, d_leaf, stream(seed, "leaf-embedding", "init"))
    opt = nn.Adam(emb.parameters(), lr=lr)
    rng = stream(seed, "leaf-embedding", "batches")
    history = []
    for _ in range(epochs):
        losses = []
        for idx in _batches(len(group_margins), batch_size, rng):
            e = nn.embedding_lookup(emb.projection, leaf_columns[idx]).sum(axis=1)
            loss = nn.mse(emb.output(e), group_margins[idx])
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(float(loss.value))
        history.append(float(np.mean(losses)))
    emb.normalize(leaf_columns)
    return emb, history


class GroupNet:
    """NN_dense for one tree group plus the group's frozen leaf output map."""

    def __init__(self, group: TreeGroup, embedding: LeafEmbedding | None, hidden, seed: int, constant: float = 0.0):
        self.group = group
        self.features = np.asarray(group.used_features, dtype=np.int64)
        self.embedding = embedding
        self.constant = constant
        self.mlp = None
        if embedding is not None:
            spec = nn.MlpSpec.hidden((len(self.features), *hidden, embedding.d_leaf), seed=seed)
            self.mlp = nn.MLP(spec, stream(seed, "dense-net", "init"), prefix="dense")

    def parameters(self):
        if self.mlp is None:
            return []
        return self.mlp.parameters() + [self.embedding.w_out, self.embedding.b_out]

    def net_parameters(self):
        return [] if self.mlp is None else self.mlp.parameters()

    def forward(self, X: np.ndarray) -> nn.Tensor:
        if self.mlp is None:
            return nn.Tensor(np.full(len(X), self.constant))
        return self.embedding.output(self.mlp(X[:, self.features]))

    def predict(self, X: np.ndarray) -> np.ndarray:
        if self.mlp is None:
            return np.full(len(X), self.constant)
        return self.embedding.output(self.mlp.predict(X[:, self.features]))


class DistilledNet:
    """Sum of per-group contributions plus the teacher's base score."""

    def __init__(self, nets: list[GroupNet], base_score: float, teacher_hash: str = "", history=None):
        self.nets = nets
        self.base_score = base_score
        self.teacher_hash = teacher_hash
        self.history = history or []

    def parameters(self):
        return [p for net in self.nets for p in net.parameters()]

    def forward(self, X: np.ndarray) -> nn.Tensor:
        out = self.nets[0].forward(X)
        for net in self.nets[1:]:
            out = out + net.forward(X)
        return out + self.base_score

    def group_contributions(self, X: np.ndarray) -> np.ndarray:
        return np.column_stack([net.predict(X) for net in self.nets])

    def y_kd(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        n_in = max((int(net.features.max()) + 1 for net in self.nets if len(net.features)), default=0)
        if X.shape[1] < n_in:
            raise ShapeError(f"input has {X.shape[1]} features, groups use index {n_in - 1}")
        out = self.base_score + self.group_contributions(X).sum(axis=1)
        return float(out[0]) if single else out

    def to_dict(self) -> dict:
        nets = []
        for net in self.nets:
            nets.append(
                {
                    "group": net.group.to_dict(),
                    "constant": net.constant,
                    "embedding": None if net.embedding is None else net.embedding.to_dict(),
                    "mlp": None if net.mlp is None else nn.mlp_to_dict(net.mlp),
                }
            )
        return {
            "format": "distilled",
            "version": nn.FORMAT_VERSION,
            "teacher_hash": self.teacher_hash,
            "base_score": self.base_score,
            "nets": nets,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DistilledNet":
        nets = []
        for item in d["nets"]:
            group = TreeGroup.from_dict(item["group"])
            emb = None if item["embedding"] is None else LeafEmbedding.from_dict(item["embedding"])
            net = GroupNet(group, None, (), 0, item["constant"])
            if emb is not None:
                net.embedding = emb
                net.mlp = nn.mlp_from_dict(item["mlp"], prefix="dense")
            nets.append(net)
        return cls(nets, d["base_score"], d["teacher_hash"])


def teacher_hash(model: GbdtModel) -> str:
    return hashlib.sha256(json.dumps(model.to_dict(), sort_keys=True).encode()).hexdigest()


@dataclass
class EpochLog:
    mse: float
    fairness: float
    total: float
    skipped_batches: int = 0


def _train_nets(nets: list[GroupNet], X, targets, base, groups, alpha_kg, maj, config: DistillConfig):
    """Joint Adam over every group network.

    Each batch minimizes ``sum_g mse(NN_g, c_g) + alpha_kg * fairness(y_KD)``;
    with the penalty off this is the same as training the groups separately.
    """
    trained = [(net, c) for net, c in zip(nets, targets) if net.mlp is not None]
    params = [p for net, _ in trained for p in net.net_parameters()]
    opt = nn.Adam(params, lr=config.lr)
    rng = stream(config.seed, "distill", "batches")
    maj_all = None if maj is None else (np.asarray(groups, dtype=object) == maj)
    offset = base + sum(net.constant for net in nets if net.mlp is None)
    log = []
    for _ in range(config.epochs):
        mse_parts, fair_parts, totals, skipped = [], [], [], 0
        for idx in _batches(len(X), config.batch_size, rng):
            Xb = X[idx]
            loss, y = None, None
            for net, c in trained:
                out = net.mlp(Xb[:, net.features])
                term = nn.mse(out, c[idx])
                loss = term if loss is None else loss + term
                contrib = net.embedding.output(out)
                y = contrib if y is None else y + contrib
            mse_val = float(loss.value)
            fair_val = 0.0
            if alpha_kg > 0 and maj_all is not None:
                y_kd = y + offset
                if config.squash:
                    y_kd = nn.sigmoid(y_kd)
                fair = fairness_loss(y_kd, maj_all[idx])
                if fair is None:
                    skipped += 1
                else:
                    term = fair * alpha_kg
                    fair_val = float(term.value)
                    loss = loss + term
            opt.zero_grad()
            loss.backward()
            opt.step()
            mse_parts.append(mse_val)
            fair_parts.append(fair_val)
            totals.append(float(loss.value))
        log.append(EpochLog(float(np.mean(mse_parts)), float(np.mean(fair_parts)), float(np.mean(totals)), skipped))
    return log


def distill_dense_net(
    X_dense: np.ndarray,
    teacher: GbdtModel,
    groups: list[TreeGroup],
    embeddings: list,
    sensitive=None,
    alpha_kg: float = 0.0,
    maj=None,
    config: DistillConfig | None = None,
    leaf_ids: np.ndarray | None = None,
) -> DistilledNet:
    """Train one dense network per group against its leaf-embedding targets.

    Loss per batch is ``sum_g mse(NN_g(x[I_g]), c_g) + alpha_kg *
    fairness_loss(y_KD, maj)`` where ``y_KD`` sums every group's contribution
    through its (frozen) output map. ``maj=None`` or ``alpha_kg=0`` drops the
    penalty. Groups whose trees never split become constants.
    """
    config = config or DistillConfig()
    if alpha_kg < 0:
        raise ConfigError("alpha_kg must be >= 0")
    if alpha_kg > 0 and maj is not None:
        if sensitive is None:
            raise ConfigError("sensitive groups are required when alpha_kg > 0")
        if maj not in set(np.asarray(sensitive, dtype=object).tolist()):
            raise ConfigError(f"majority group {maj!r} not present in the sensitive column")
    X_dense = np.asarray(X_dense, dtype=float)
    if leaf_ids is None:
        raise ConfigError("leaf_ids of the training rows are required")

    nets, targets = [], []
    for g, (group, emb) in enumerate(zip(groups, embeddings)):
        if emb is None:
            const = float(group.margins(leaf_ids[:1])[0]) if len(leaf_ids) else 0.0
            nets.append(GroupNet(group, None, config.hidden, config.seed, constant=const))
            targets.append(None)
            continue
        nets.append(GroupNet(group, emb, config.hidden, nn_seed(config.seed, g)))
        targets.append(emb.embed(group.leaf_columns(leaf_ids)))
    history = []
    if any(net.mlp is not None for net in nets):
        history = _train_nets(nets, X_dense, targets, teacher.base_score, sensitive, alpha_kg, maj, config)
    return DistilledNet(nets, teacher.base_score, teacher_hash(teacher), history)


def nn_seed(seed: int, group_index: int) -> int:
    return child_seed(seed, "group", group_index)


def fit_distilled(
    teacher: GbdtModel,
    X_tree: np.ndarray,
    X_nn: np.ndarray,
    n_groups: int = 5,
    sensitive=None,
    alpha_kg: float = 0.0,
    maj=None,
    config: DistillConfig | None = None,
) -> DistilledNet:
    """Group, embed and distill in one call.

    ``X_tree`` is what the teacher was fit on; ``X_nn`` is the same rows as
    the networks should see them (e.g. standardized).
    """
    config = config or DistillConfig()
    leaf_ids = teacher.leaf_indices(X_tree)
    groups = group_trees(teacher, min(n_groups, len(teacher.trees)))
    embeddings = []
    for g, group in enumerate(groups):
        if group.leaf_dim <= len(group.members) or not group.used_features:
            embeddings.append(None)  # every member is a single leaf
            continue
        d_leaf = min(config.d_leaf, group.leaf_dim - 1)
        emb, _ = fit_leaf_embedding(
            group,
            group.leaf_columns(leaf_ids),
            group.margins(leaf_ids),
            d_leaf=d_leaf,
            epochs=config.leaf_epochs,
            lr=config.lr,
            batch_size=config.batch_size,
            seed=nn_seed(config.seed, g),
        )
        embeddings.append(emb)
    return distill_dense_net(X_nn, teacher, groups, embeddings, sensitive, alpha_kg, maj, config, leaf_ids)


def y_kd(net: DistilledNet, x) -> np.ndarray:
    return net.y_kd(x)
