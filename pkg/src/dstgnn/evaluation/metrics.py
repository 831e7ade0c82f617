"""Classification metrics at subject and sample level."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

METRIC_NAMES = ("accuracy", "precision", "recall", "f1", "roc_auc")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @classmethod
    def from_predictions(cls, y_true: Sequence[int], y_pred: Sequence[int]) -> "ConfusionCounts":
        t = np.asarray(y_true, dtype=int)
        p = np.asarray(y_pred, dtype=int)
        return cls(int(np.sum((t == 1) & (p == 1))), int(np.sum((t == 0) & (p == 1))),
                   int(np.sum((t == 0) & (p == 0))), int(np.sum((t == 1) & (p == 0))))


@dataclass(frozen=True)
class MetricSet:
    accuracy: float
    precision: float
    recall: float
    f1: float
    roc_auc: float
    zero_division: tuple[str, ...] = field(default_factory=tuple)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["zero_division"] = list(self.zero_division)
        return d

    def values(self) -> dict[str, float]:
        return {k: getattr(self, k) for k in METRIC_NAMES}


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def aggregate_subject(window_logits: Sequence[float]) -> tuple[float, int]:
    """Mean sigmoid probability; label 1 (Addicted) iff strictly above 0.5."""
    logits = np.asarray(window_logits, dtype=np.float64)
    if logits.size == 0:
        raise ValueError("need at least one logit")
    prob = float(np.mean(sigmoid(logits)))
    return prob, int(prob > 0.5)


def roc_auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Rank-statistic AUC (ties count one half); 0.5 when a class is absent."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=int)
    pos, neg = s[y == 1], s[y == 0]
    if pos.size == 0 or neg.size == 0:
        return 0.5
    greater = (pos[:, None] > neg[None, :]).sum()
    ties = (pos[:, None] == neg[None, :]).sum()
    return float((greater + 0.5 * ties) / (pos.size * neg.size))


def compute_metrics(cc: ConfusionCounts, scores: Iterable[tuple[float, int]] = ()) -> MetricSet:
    scores = list(scores)
    if scores and len(scores) != cc.total:
        raise ValueError(f"{len(scores)} scores for {cc.total} counted predictions")
    flags = []
    n = cc.total
    acc = (cc.tp + cc.tn) / n if n else 0.0
    if cc.tp + cc.fp == 0:
        prec = 0.0
        flags.append("precision")
    else:
        prec = cc.tp / (cc.tp + cc.fp)
    if cc.tp + cc.fn == 0:
        rec = 0.0
        flags.append("recall")
    else:
        rec = cc.tp / (cc.tp + cc.fn)
    if prec + rec == 0:
        f1 = 0.0
        flags.append("f1")
    else:
        f1 = 2 * prec * rec / (prec + rec)
    if scores:
        auc = roc_auc([s for s, _ in scores], [y for _, y in scores])
    else:
        auc = float("nan")
    return MetricSet(acc, prec, rec, f1, auc, tuple(flags))


def metrics_from_probs(probs: Sequence[float], labels: Sequence[int]) -> MetricSet:
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=int)
    cc = ConfusionCounts.from_predictions(labels, (probs > 0.5).astype(int))
    return compute_metrics(cc, zip(probs.tolist(), labels.tolist()))


def mean_sd(values: Sequence[float]) -> tuple[float, float]:
    """Mean and population standard deviation."""
    v = np.asarray(values, dtype=np.float64)
    return float(v.mean()), float(v.std())


def aggregate_metric_sets(sets: Sequence[MetricSet]) -> dict[str, dict[str, float]]:
    out = {}
    for name in METRIC_NAMES:
        m, s = mean_sd([getattr(ms, name) for ms in sets])
        out[name] = {"mean": m, "sd": s}
    return out
