"""Exact-greedy regression trees, logistic gradient boosting and a bagged
random forest.

Split search is level-wise: at each depth every open node is searched at
once. Rows are presorted per feature once per fit; a stable sort on node id
then yields, for every column, the rows grouped by node and ordered by value,
so left-side sums are plain cumulative sums.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError
from .seeding import stream

LAMBDA = 1.0
# splits must beat this gain; keeps float noise from splitting constant targets
MIN_GAIN = 1e-12
FORMAT_VERSION = 1


@dataclass
class Tree:
    """Binary tree stored as parallel node arrays.

    Internal nodes have ``feature >= 0``; leaves have ``feature == -1`` and a
    ``leaf_id`` numbered left to right.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    leaf_id: np.ndarray
    n_features: int

    @property
    def leaf_count(self) -> int:
        return int((self.feature < 0).sum())

    @property
    def used_features(self) -> set[int]:
        return {int(f) for f in self.feature if f >= 0}

    @property
    def leaf_values(self) -> np.ndarray:
        """Leaf values ordered by leaf id."""
        leaves = np.flatnonzero(self.feature < 0)
        out = np.empty(len(leaves))
        out[self.leaf_id[leaves]] = self.value[leaves]
        return out

    @property
    def depth(self) -> int:
        depth = np.zeros(len(self.feature), dtype=int)
        for node in range(len(self.feature)):
            if self.feature[node] >= 0:
                depth[self.left[node]] = depth[node] + 1
                depth[self.right[node]] = depth[node] + 1
        return int(depth.max())

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Node index reached by each row."""
        node = np.zeros(len(X), dtype=np.int64)
        while True:
            f = self.feature[node]
            idx = np.flatnonzero(f >= 0)
            if len(idx) == 0:
                return node
            at = node[idx]
            go_left = X[idx, f[idx]] <= self.threshold[at]
            node[idx] = np.where(go_left, self.left[at], self.right[at])

    def leaf_index(self, X: np.ndarray) -> np.ndarray:
        return self.leaf_id[self.apply(X)]

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "n_features": self.n_features,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        feature = np.array(d["feature"], dtype=np.int64)
        left = np.array(d["left"], dtype=np.int64)
        right = np.array(d["right"], dtype=np.int64)
        return cls(
            feature,
            np.array(d["threshold"], dtype=float),
            left,
            right,
            np.array(d["value"], dtype=float),
            _number_leaves(feature, left, right),
            int(d["n_features"]),
        )


def _number_leaves(feature, left, right) -> np.ndarray:
    leaf_id = np.full(len(feature), -1, dtype=np.int64)
    stack, next_id = [0], 0
    while stack:
        node = stack.pop()
        if feature[node] < 0:
            leaf_id[node] = next_id
            next_id += 1
        else:
            stack.append(right[node])
            stack.append(left[node])
    return leaf_id


def _presort(X: np.ndarray):
    """Per-feature row order and sorted values, feature-major (D x N)."""
    order = np.argsort(X.T, axis=1, kind="stable")
    return order, np.take_along_axis(X.T, order, axis=1)


def _grow(
    X,
    order,
    X_sorted,
    targets,
    hess,
    *,
    max_depth,
    min_leaf,
    lam,
    columns=None,
    rng=None,
    max_features=None,
) -> Tree:
    """Grow one tree on (targets, hessians); leaves get sum(t)/(sum(h)+lam).

    ``order``/``X_sorted`` come from ``_presort``. ``columns`` restricts the
    whole tree to a feature subset; ``max_features`` with ``rng`` draws a
    fresh subset at every node.
    """
    n, d = X.shape
    feature, threshold, left, right = [-1], [0.0], [-1], [-1]
    assign = np.zeros(n, dtype=np.int64)
    active = [0]
    col_ok = np.ones(d, dtype=bool)
    if columns is not None:
        col_ok[:] = False
        col_ok[np.asarray(columns, dtype=int)] = True
    pos = np.arange(n)

    for _ in range(max_depth):
        if not active or d == 0:
            break
        n_act = len(active)
        compact = np.full(len(feature), n_act, dtype=np.int64)
        compact[active] = np.arange(n_act)
        c = compact[assign]
        G = np.bincount(c, weights=targets, minlength=n_act + 1)[:n_act]
        H = np.bincount(c, weights=hess, minlength=n_act + 1)[:n_act]
        cnt = np.bincount(c, minlength=n_act + 1)

        # int16 keys let numpy use radix sort
        cs = c.astype(np.int16 if n_act < 32767 else np.int64)[order]
        perm = np.argsort(cs, axis=1, kind="stable")
        rows = np.take_along_axis(order, perm, axis=1)
        xv = np.take_along_axis(X_sorted, perm, axis=1)
        nid = np.sort(c)  # identical for every feature after the stable sort
        starts = np.r_[0, np.cumsum(cnt)[:-1]]

        # cumulative sums with a leading zero column: left sums are cum[p+1] - cum[start]
        cg = np.zeros((d, n + 1))
        ch = np.zeros((d, n + 1))
        np.cumsum(targets[rows], axis=1, out=cg[:, 1:])
        np.cumsum(hess[rows], axis=1, out=ch[:, 1:])
        seg_start = starts[nid]
        GL = cg[:, 1:] - cg[:, seg_start]
        HL = ch[:, 1:] - ch[:, seg_start]
        nL = pos - seg_start + 1

        inner = nid < n_act
        nid_c = np.minimum(nid, n_act - 1)
        GR = G[nid_c] - GL
        HR = H[nid_c] - HL
        nR = cnt[np.minimum(nid, n_act)] - nL

        valid = np.zeros((d, n), dtype=bool)
        if n > 1:
            same_node = (nid[:-1] == nid[1:]) & inner[:-1]
            valid[:, :-1] = same_node & (xv[:, :-1] < xv[:, 1:])
        valid &= (nL >= min_leaf) & (nR >= min_leaf)
        if max_features is not None and rng is not None:
            allowed = np.flatnonzero(col_ok)
            node_cols = np.zeros((d, n_act), dtype=bool)
            for a in range(n_act):
                pick = rng.choice(allowed, size=min(max_features, len(allowed)), replace=False)
                node_cols[pick, a] = True
            valid &= node_cols[:, nid_c]
        elif not col_ok.all():
            valid &= col_ok[:, None]

        parent = (G * G / (H + lam))[nid_c]
        with np.errstate(divide="ignore", invalid="ignore"):
            gain = GL * GL
            gain /= HL + lam
            GR *= GR
            GR /= HR + lam
            gain += GR
            gain -= parent
        gain[~valid] = -np.inf

        new_active = []
        split_feat = np.full(n_act, -1, dtype=np.int64)
        split_thr = np.zeros(n_act)
        for a in range(n_act):
            if cnt[a] == 0:
                continue
            seg = gain[:, starts[a]: starts[a] + cnt[a]]
            feat_best = seg.max(axis=1)
            best = feat_best.max()
            if not best > MIN_GAIN:
                continue
            # ties: lowest feature, then lowest threshold (first position)
            f = int(np.flatnonzero(feat_best == best)[0])
            p = starts[a] + int(np.flatnonzero(seg[f] == best)[0])
            lo, hi = xv[f, p], xv[f, p + 1]
            thr = lo + (hi - lo) / 2.0
            if not lo <= thr < hi:
                thr = lo
            node = active[a]
            feature[node], threshold[node] = f, float(thr)
            left[node] = len(feature)
            right[node] = len(feature) + 1
            feature += [-1, -1]
            threshold += [0.0, 0.0]
            left += [-1, -1]
            right += [-1, -1]
            new_active += [left[node], right[node]]
            split_feat[a], split_thr[a] = f, thr

        if not new_active:
            break
        moving = np.flatnonzero(c < n_act)
        moving = moving[split_feat[c[moving]] >= 0]
        ca = c[moving]
        go_left = X[moving, split_feat[ca]] <= split_thr[ca]
        act = np.asarray(active)
        assign[moving] = np.where(go_left, np.asarray(left)[act[ca]], np.asarray(right)[act[ca]])
        active = new_active

    n_nodes = len(feature)
    g_leaf = np.bincount(assign, weights=targets, minlength=n_nodes)
    h_leaf = np.bincount(assign, weights=hess, minlength=n_nodes)
    feature = np.asarray(feature, dtype=np.int64)
    with np.errstate(divide="ignore", invalid="ignore"):
        value = np.where(feature < 0, g_leaf / (h_leaf + lam), 0.0)
    left = np.asarray(left, dtype=np.int64)
    right = np.asarray(right, dtype=np.int64)
    return Tree(feature, np.asarray(threshold), left, right, value, _number_leaves(feature, left, right), d)


@dataclass(frozen=True)
class GbdtParams:
    n_trees: int = 100
    max_depth: int = 6
    min_samples_leaf: int = 20
    learning_rate: float = 0.1
    feature_fraction: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ConfigError(f"n_trees must be >= 1, got {self.n_trees}")
        if self.max_depth < 1:
            raise ConfigError(f"max_depth must be >= 1, got {self.max_depth}")
        if self.min_samples_leaf < 1:
            raise ConfigError("min_samples_leaf must be >= 1")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ConfigError(f"learning_rate must be in (0, 1], got {self.learning_rate}")
        if not 0.0 < self.feature_fraction <= 1.0:
            raise ConfigError("feature_fraction must be in (0, 1]")


def _as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ShapeError(f"expected a 2-D feature matrix, got shape {X.shape}")
    return X


def fit_tree(X, targets, hessians, params: GbdtParams) -> Tree:
    """Fit one second-order regression tree.

    ``targets`` are negative gradients, so a leaf holds
    ``sum(targets) / (sum(hessians) + 1)``.
    """
    X = _as_matrix(X)
    targets = np.asarray(targets, dtype=float)
    hessians = np.asarray(hessians, dtype=float)
    if len(targets) != len(X) or len(hessians) != len(X):
        raise ShapeError("targets and hessians must have one entry per row")
    order, X_sorted = _presort(X)
    return _grow(
        X, order, X_sorted, targets, hessians,
        max_depth=params.max_depth, min_leaf=params.min_samples_leaf, lam=LAMBDA,
    )


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def logistic_loss(margin, y) -> float:
    # log(1 + e^m) - y*m, stable for large |m|
    return float(np.mean(np.logaddexp(0.0, margin) - y * margin))


@dataclass
class GbdtModel:
    trees: list
    learning_rate: float
    base_score: float
    n_features: int
    params: GbdtParams | None = None
    train_loss: list = field(default_factory=list)

    def _check(self, X):
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        if X.shape[1] != self.n_features:
            raise ShapeError(f"model expects {self.n_features} features, got {X.shape[1]}")
        return X, single

    def predict_margin(self, X):
        X, single = self._check(X)
        margin = np.full(len(X), self.base_score)
        for tree in self.trees:
            margin += self.learning_rate * tree.predict(X)
        return float(margin[0]) if single else margin

    def predict_proba(self, X):
        return _sigmoid(self.predict_margin(X))

    def leaf_indices(self, X) -> np.ndarray:
        X, single = self._check(X)
        ids = np.column_stack([t.leaf_index(X) for t in self.trees])
        return ids[0] if single else ids

    def to_dict(self) -> dict:
        return {
            "format": "gbdt",
            "version": FORMAT_VERSION,
            "learning_rate": self.learning_rate,
            "base_score": self.base_score,
            "n_features": self.n_features,
            "params": None if self.params is None else asdict(self.params),
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GbdtModel":
        if d.get("format") != "gbdt" or d.get("version") != FORMAT_VERSION:
            raise ConfigError("not a version-1 gbdt model document")
        params = GbdtParams(**d["params"]) if d.get("params") else None
        return cls([Tree.from_dict(t) for t in d["trees"]], d["learning_rate"], d["base_score"], d["n_features"], params)

    def dumps(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def loads(cls, text: str) -> "GbdtModel":
        return cls.from_dict(json.loads(text))


def predict_margin(model: GbdtModel, x):
    return model.predict_margin(x)


def predict_proba(model, x):
    return model.predict_proba(x)


def leaf_indices(model: GbdtModel, x) -> np.ndarray:
    return model.leaf_indices(x)


def used_feature_indices(trees) -> list[int]:
    used = set()
    for t in trees:
        used |= t.used_features
    return sorted(used)


def _check_binary(y):
    y = np.asarray(y)
    if not np.all((y == 0) | (y == 1)):
        raise ConfigError("labels must be 0/1")
    if y.min() == y.max():
        raise ConfigError("labels contain a single class")
    return y.astype(float)


def fit_gbdt(X, y, params: GbdtParams = GbdtParams()) -> GbdtModel:
    """Boost regression trees on logistic-loss gradients g = p - y, h = p(1 - p)."""
    X = _as_matrix(X)
    y = _check_binary(y)
    if len(y) != len(X):
        raise ShapeError("X and y differ in length")
    rng = stream(params.seed, "gbdt")
    p_bar = y.mean()
    base = math.log(p_bar / (1.0 - p_bar))
    margin = np.full(len(y), base)
    order, X_sorted = _presort(X)
    d = X.shape[1]
    n_cols = max(1, int(round(params.feature_fraction * d)))
    trees, losses = [], [logistic_loss(margin, y)]
    for _ in range(params.n_trees):
        p = _sigmoid(margin)
        g = p - y
        h = p * (1.0 - p)
        columns = None if n_cols >= d else np.sort(rng.choice(d, size=n_cols, replace=False))
        tree = _grow(
            X, order, X_sorted, -g, h,
            max_depth=params.max_depth, min_leaf=params.min_samples_leaf, lam=LAMBDA, columns=columns,
        )
        margin = margin + params.learning_rate * tree.predict(X)
        trees.append(tree)
        losses.append(logistic_loss(margin, y))
    return GbdtModel(trees, params.learning_rate, base, d, params, losses)


@dataclass(frozen=True)
class RfParams:
    n_trees: int = 100
    max_depth: int = 8
    min_samples_leaf: int = 5
    max_features: int | None = None
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1 or self.max_depth < 1 or self.min_samples_leaf < 1:
            raise ConfigError("n_trees, max_depth and min_samples_leaf must be >= 1")


@dataclass
class RfModel:
    """Bagged classification trees; each leaf stores its positive fraction."""

    trees: list
    n_features: int
    params: RfParams

    def predict_proba(self, X):
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        if X.shape[1] != self.n_features:
            raise ShapeError(f"model expects {self.n_features} features, got {X.shape[1]}")
        p = np.mean([t.predict(X) for t in self.trees], axis=0)
        return float(p[0]) if single else p

    def to_dict(self) -> dict:
        return {
            "format": "rf",
            "version": FORMAT_VERSION,
            "n_features": self.n_features,
            "params": asdict(self.params),
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RfModel":
        return cls([Tree.from_dict(t) for t in d["trees"]], d["n_features"], RfParams(**d["params"]))


def fit_random_forest(X, y, params: RfParams = RfParams()) -> RfModel:
    """Bootstrap rows, draw sqrt(D) candidate features per split."""
    X = _as_matrix(X)
    y = _check_binary(y)
    n, d = X.shape
    max_features = params.max_features or max(1, int(math.sqrt(d)))
    trees = []
    for t in range(params.n_trees):
        rng = stream(params.seed, "rf", t)
        idx = rng.integers(0, n, size=n) if params.bootstrap else np.arange(n)
        Xb, yb = X[idx], y[idx]
        order, X_sorted = _presort(Xb)
        trees.append(
            _grow(
                Xb, order, X_sorted, yb, np.ones(n),
                max_depth=params.max_depth, min_leaf=params.min_samples_leaf, lam=0.0,
                rng=rng, max_features=max_features,
            )
        )
    return RfModel(trees, d, params)
