"""Evaluation and audit quantities: ROC AUC, demographic parity and
equalized odds differences, the batch fairness penalty, cohort rates,
Pearson correlation and the k-fold evaluation harness."""
from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DataError, UndefinedMetricError


class DegenerateGroupWarning(UserWarning):
    """A group lacked positives or negatives and was left out of a rate."""


def _rank_average(x: np.ndarray) -> np.ndarray:
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    # tie blocks share the mean of their 1-based ranks
    starts = np.flatnonzero(np.r_[True, xs[1:] != xs[:-1]])
    ends = np.r_[starts[1:], len(xs)]
    avg = (starts + ends + 1) / 2.0
    ranks = np.empty(len(x))
    ranks[order] = np.repeat(avg, ends - starts)
    return ranks


def roc_auc(scores, labels) -> float:
    """Probability that a random positive outscores a random negative.

    Ties count one half (Mann-Whitney form).
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("ROC AUC needs both classes")
    ranks = _rank_average(scores)
    u = ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def binarize(scores, threshold: float = 0.5) -> np.ndarray:
    return (np.asarray(scores, dtype=float) >= threshold).astype(np.int8)


def _group_ids(groups):
    groups = np.asarray(groups, dtype=object)
    uniq = list(dict.fromkeys(groups.tolist()))
    return groups, uniq


def group_positive_rates(preds, groups) -> dict:
    preds = np.asarray(preds)
    groups, uniq = _group_ids(groups)
    return {g: float(preds[groups == g].mean()) for g in uniq}


def dpd(preds, groups) -> float:
    """max minus min over groups of P(pred = 1 | group)."""
    preds = np.asarray(preds)
    groups, uniq = _group_ids(groups)
    if len(preds) != len(groups):
        raise DataError("preds and groups differ in length")
    if len(uniq) < 2:
        raise UndefinedMetricError("DPD needs at least 2 groups")
    rates = [preds[groups == g].mean() for g in uniq]
    return float(max(rates) - min(rates))


def _rate_spread(preds, labels, groups, uniq, label_value, name):
    rates = []
    for g in uniq:
        mask = (groups == g) & (labels == label_value)
        if not mask.any():
            warnings.warn(f"group {g!r} has no label={label_value} rows; excluded from {name}", DegenerateGroupWarning,
                          stacklevel=3)
            continue
        rates.append(preds[mask].mean())
    if len(rates) < 2:
        return None
    return float(max(rates) - min(rates))


def eod(preds, labels, groups) -> float:
    """Larger of the across-group spreads of TPR and FPR."""
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    groups, uniq = _group_ids(groups)
    if not len(preds) == len(labels) == len(groups):
        raise DataError("preds, labels and groups differ in length")
    tpr = _rate_spread(preds, labels, groups, uniq, 1, "TPR")
    fpr = _rate_spread(preds, labels, groups, uniq, 0, "FPR")
    spreads = [s for s in (tpr, fpr) if s is not None]
    if not spreads:
        raise UndefinedMetricError("EOD needs 2 groups with positives or 2 groups with negatives")
    return max(spreads)


def fairness_loss(scores, maj_mask):
    """Squared gap between the batch mean and the majority-group mean.

    Works on plain arrays and on autodiff tensors. Returns ``None`` when the
    batch has no majority-group rows so the caller can skip the term.
    """
    maj_mask = np.asarray(maj_mask, dtype=bool)
    n_maj = int(maj_mask.sum())
    if n_maj == 0:
        return None
    n = len(maj_mask)
    # mean(s) - mean(s[maj]) written as one weighted sum so tensors need no masking op
    weights = np.full(n, 1.0 / n)
    weights[maj_mask] -= 1.0 / n_maj
    gap = (scores * weights).sum()
    return gap * gap


@dataclass(frozen=True)
class CohortRates:
    subgroup: str
    n_w: int
    n_r: int
    n_f: int
    orr: float
    gfr: float | None


def cohort_rates(subgroup: str, n_w: int, n_r: int, n_f: int) -> CohortRates:
    """Organ receiving rate n_r/n_w and graft failure rate n_f/n_r."""
    if min(n_w, n_r, n_f) < 0:
        raise DataError(f"{subgroup}: counts must be non-negative")
    if n_f > n_r:
        raise DataError(f"{subgroup}: n_f={n_f} exceeds n_r={n_r}")
    if n_r > n_w:
        raise DataError(f"{subgroup}: n_r={n_r} exceeds n_w={n_w}")
    orr = n_r / n_w if n_w else 0.0
    gfr = n_f / n_r if n_r else None
    return CohortRates(subgroup, n_w, n_r, n_f, orr, gfr)


def pearson(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise DataError("pearson needs two 1-D sequences of equal length")
    if len(x) < 2:
        raise UndefinedMetricError("pearson needs at least 2 points")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedMetricError("pearson is undefined for a constant input")
    r = float(dx @ dy) / np.sqrt(sxx * syy)
    return float(np.clip(r, -1.0, 1.0))


@dataclass
class AttributeMetrics:
    """Per-fold AUC/DPD/EOD for one sensitive attribute."""

    roc_auc: list = field(default_factory=list)
    dpd: list = field(default_factory=list)
    eod: list = field(default_factory=list)
    group_rates: list = field(default_factory=list)

    def summary(self) -> dict:
        out = {}
        for name in ("roc_auc", "dpd", "eod"):
            vals = np.array([v for v in getattr(self, name) if v is not None], dtype=float)
            out[name] = {
                "mean": float(vals.mean()) if len(vals) else None,
                # population std over folds
                "std": float(vals.std()) if len(vals) else None,
                "folds": [None if v is None else float(v) for v in getattr(self, name)],
            }
        out["group_positive_rates"] = _mean_group_rates(self.group_rates)
        return out


def _mean_group_rates(per_fold: list[dict]) -> dict:
    keys = list(dict.fromkeys(k for d in per_fold for k in d))
    return {str(k): float(np.mean([d[k] for d in per_fold if k in d])) for k in keys}


@dataclass
class FairnessReport:
    attributes: dict
    threshold: float = 0.5
    k: int = 0

    def mean(self, attribute: str, metric: str) -> float:
        return self.to_dict()["attributes"][attribute][metric]["mean"]

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "threshold": self.threshold,
            "attributes": {name: m.summary() for name, m in self.attributes.items()},
        }


def score_predictions(scores, labels, groups, threshold: float = 0.5) -> dict:
    preds = binarize(scores, threshold)
    try:
        auc = roc_auc(scores, labels)
    except UndefinedMetricError:
        auc = None
    try:
        e = eod(preds, labels, groups)
    except UndefinedMetricError:
        e = None
    return {
        "roc_auc": auc,
        "dpd": dpd(preds, groups),
        "eod": e,
        "group_rates": group_positive_rates(preds, groups),
    }


Predictor = Callable[[object], np.ndarray]


def evaluate_folds(
    model_factory: Callable[[object, int], Predictor],
    cohort,
    plan,
    sensitive: str | Sequence[str],
    threshold: float = 0.5,
    jobs: int = 1,
) -> FairnessReport:
    """Cross-validate ``model_factory`` over ``plan``.

    ``model_factory(train_cohort, fold)`` must return a callable mapping a
    cohort to scores in [0, 1]. Each fold trains on the other k-1 folds and is
    scored on its own rows; metrics are reported per sensitive attribute.
    """
    names = [sensitive] if isinstance(sensitive, str) else list(sensitive)

    def run(fold):
        train_idx, test_idx = plan.split(fold)
        predict = model_factory(cohort.take(train_idx), fold)
        test = cohort.take(test_idx)
        scores = np.asarray(predict(test), dtype=float)
        return {name: score_predictions(scores, test.labels, test.sensitive[name], threshold) for name in names}

    folds = range(plan.k)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run, folds))
    else:
        results = [run(f) for f in folds]

    attributes = {name: AttributeMetrics() for name in names}
    for res in results:
        for name in names:
            m = attributes[name]
            m.roc_auc.append(res[name]["roc_auc"])
            m.dpd.append(res[name]["dpd"])
            m.eod.append(res[name]["eod"])
            m.group_rates.append(res[name]["group_rates"])
    return FairnessReport(attributes, threshold, plan.k)
