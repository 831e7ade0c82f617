"""Classical window-level baselines: L2 logistic regression and an MLP.

Each window becomes one flat vector of its 171 node features followed by
the 171 whole-recording channel correlations. Both models are trained by
full-batch gradient descent with momentum on a class-balanced logistic
loss, evaluated on the same LOSO folds, and aggregated per subject with
the same mean-probability rule as the graph model.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..config import RunConfig
from ..dataset_io import subject_index
from ..features import apply_scaler, fit_feature_scaler
from .folds import loso_folds
from .metrics import aggregate_metric_sets, aggregate_subject
from .training import FoldResult, RunReport, summarize_seed

log = logging.getLogger(__name__)

KINDS = ("logreg", "mlp")
MLP_HIDDEN = (256, 128, 64)
MOMENTUM = 0.9


def window_vectors(prepared) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stack (X, y, subject) rows, one per window, from prepared recordings."""
    xs, ys, subj = [], [], []
    for p in prepared:
        t = p.features.shape[0]
        node = p.features.reshape(t, -1)
        corr = p.correlation[np.triu_indices(p.correlation.shape[0], 1)]
        xs.append(np.hstack([node, np.broadcast_to(corr, (t, corr.size))]))
        ys.append(np.full(t, p.label))
        subj.extend([p.subject_id] * t)
    return np.vstack(xs), np.concatenate(ys), np.asarray(subj)


def _elu(x):
    return np.where(x > 0, x, np.exp(np.minimum(x, 0.0)) - 1.0)


def _elu_grad(x):
    return np.where(x > 0, 1.0, np.exp(np.minimum(x, 0.0)))


@dataclass
class DenseClassifier:
    """Stack of affine layers with ELU between them and one output logit."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @classmethod
    def create(cls, kind: str, n_in: int, seed: int) -> "DenseClassifier":
        if kind not in KINDS:
            raise ValueError(f"unknown baseline {kind!r}; expected one of {KINDS}")
        sizes = [n_in] + (list(MLP_HIDDEN) if kind == "mlp" else []) + [1]
        rng = np.random.default_rng(seed)
        ws, bs = [], []
        for a, b in zip(sizes[:-1], sizes[1:]):
            if kind == "logreg":
                ws.append(np.zeros((a, b)))
            else:
                lim = np.sqrt(6.0 / (a + b))
                ws.append(rng.uniform(-lim, lim, size=(a, b)))
            bs.append(np.zeros(b))
        return cls(ws, bs)

    @property
    def hidden_sizes(self) -> tuple[int, ...]:
        return tuple(w.shape[1] for w in self.weights[:-1])

    def parameter_count(self) -> int:
        return int(sum(w.size + b.size for w, b in zip(self.weights, self.biases)))

    def _forward(self, x):
        pre, acts = [], [x]
        h = x
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            pre.append(z)
            h = z if i == len(self.weights) - 1 else _elu(z)
            acts.append(h)
        return h[:, 0], pre, acts

    def logits(self, x: np.ndarray) -> np.ndarray:
        return self._forward(x)[0]

    def _grad_sums(self, x, delta):
        """Unscaled parameter gradients for output-gradient ``delta``."""
        _, pre, acts = self._forward(x)
        gw, gb = [None] * len(self.weights), [None] * len(self.weights)
        d = delta[:, None]
        for i in range(len(self.weights) - 1, -1, -1):
            gw[i] = acts[i].T @ d
            gb[i] = d.sum(axis=0)
            if i:
                d = (d @ self.weights[i].T) * _elu_grad(pre[i - 1])
        return gw, gb

    def gradients(self, x: np.ndarray, y: np.ndarray, l2: float):
        """Gradient of 0.5·mean-BCE(positives) + 0.5·mean-BCE(negatives) + L2.

        Sums are formed per class before dividing by the class size, so a
        model whose logits are all exactly zero gets an exactly-zero
        gradient on balanced-but-uneven data (the tie stays a tie).
        """
        p = 1.0 / (1.0 + np.exp(-self.logits(x)))
        gw = [np.zeros_like(w) for w in self.weights]
        gb = [np.zeros_like(b) for b in self.biases]
        for cls in (0, 1):
            sel = y == cls
            n = int(sel.sum())
            if n == 0:
                continue
            cw, cb = self._grad_sums(x[sel], p[sel] - cls)
            for i in range(len(gw)):
                gw[i] += cw[i] * 0.5 / n
                gb[i] += cb[i] * 0.5 / n
        for i in range(len(gw)):
            gw[i] += l2 * self.weights[i]
        return gw, gb

    def fit(self, x: np.ndarray, y: np.ndarray, epochs: int, lr: float, l2: float) -> list[float]:
        vw = [np.zeros_like(w) for w in self.weights]
        vb = [np.zeros_like(b) for b in self.biases]
        hist = []
        for _ in range(epochs):
            gw, gb = self.gradients(x, y, l2)
            for i in range(len(gw)):
                vw[i] = MOMENTUM * vw[i] - lr * gw[i]
                vb[i] = MOMENTUM * vb[i] - lr * gb[i]
                self.weights[i] = self.weights[i] + vw[i]
                self.biases[i] = self.biases[i] + vb[i]
            hist.append(balanced_bce(self.logits(x), y))
        return hist


def balanced_bce(logits: np.ndarray, y: np.ndarray) -> float:
    per = np.maximum(logits, 0) - logits * y + np.log1p(np.exp(-np.abs(logits)))
    return float(np.mean([per[y == c].mean() for c in (0, 1) if np.any(y == c)]))


def run_baseline(prepared, cfg: RunConfig, kind: str,
                 seeds: Sequence[int] | None = None) -> RunReport:
    """LOSO over the same folds as the graph model, for every seed.

    Without early stopping, the validation pair is simply part of the
    training set; the scaler is fit on the training windows of each fold.
    """
    seeds = list(seeds if seeds is not None else cfg["eval.seeds"])
    X, y, subj = window_vectors(prepared)
    subjects = sorted(set(subj.tolist()), key=subject_index)
    labels = {s: int(y[subj == s][0]) for s in subjects}
    reports = []
    for seed in seeds:
        results = []
        for fold in loso_folds(subjects, labels, seed):
            train = np.isin(subj, fold.train_subjects)
            test = subj == fold.test_subject
            stats = fit_feature_scaler(X[train])
            xtr, xte = apply_scaler(X[train], stats), apply_scaler(X[test], stats)
            model = DenseClassifier.create(kind, X.shape[1],
                                           seed * 1000 + subject_index(fold.test_subject))
            hist = model.fit(xtr, y[train], cfg["baseline.epochs"], cfg["baseline.lr"],
                             cfg["baseline.l2"])
            logits = model.logits(xte)
            prob, pred = aggregate_subject(logits)
            results.append(FoldResult(
                seed, fold.test_subject, labels[fold.test_subject], logits.tolist(), prob, pred,
                len(hist), len(hist), float("nan"), train_loss=hist,
                scaler_subjects=fold.train_subjects, train_batch_subjects=fold.train_subjects,
            ))
            log.info("%s seed %d fold %s: p=%.3f", kind, seed, fold.test_subject, prob)
        reports.append(summarize_seed(seed, results, None))
    n_params = DenseClassifier.create(kind, X.shape[1], 0).parameter_count()
    return RunReport(
        f"baseline_{kind}", cfg.snapshot(), reports,
        aggregate_metric_sets([r.subject_metrics for r in reports]),
        aggregate_metric_sets([r.sample_metrics for r in reports]),
        n_params,
    )
