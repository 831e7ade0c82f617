"""LOSO training of the graph network: one fold, a full experiment, ablations."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..config import RunConfig
from ..connectivity import DynamicGraphSequence
from ..errors import NaNGradient
from ..features import ScalerStats, apply_scaler, fit_feature_scaler
from ..nn import autodiff as ad
from ..nn.model import DstGnn
from ..nn.optim import AdamW, cosine_lr
from ..dataset_io import subject_index
from .folds import FoldSpec, loso_folds
from .metrics import (
    ConfusionCounts, MetricSet, aggregate_metric_sets, aggregate_subject, compute_metrics,
    metrics_from_probs, sigmoid,
)

log = logging.getLogger(__name__)


def stack_batch(seqs: Sequence[DynamicGraphSequence]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    feats = np.stack([s.features for s in seqs])
    adj = np.stack([s.adjacency for s in seqs])
    y = np.array([s.label for s in seqs], dtype=np.float64)
    return feats, adj, y


def scale_sequences(seqs: Sequence[DynamicGraphSequence], stats: ScalerStats | None
                    ) -> list[DynamicGraphSequence]:
    if stats is None:
        return list(seqs)
    return [s.with_features(apply_scaler(s.features, stats)) for s in seqs]


def _fold_seed(seed: int, subject: str) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, subject_index(subject)])


@dataclass
class FoldResult:
    seed: int
    test_subject: str
    true_label: int
    sample_logits: list[float]
    probability: float
    predicted: int
    epochs_run: int
    best_epoch: int
    best_val_loss: float
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    scaler_subjects: tuple[str, ...] = ()
    train_batch_subjects: tuple[str, ...] = ()
    val_subjects: tuple[str, ...] = ()
    error: str | None = None
    model: DstGnn | None = field(default=None, repr=False)

    def to_row(self) -> dict:
        return {
            "seed": self.seed, "test_subject": self.test_subject, "true_label": self.true_label,
            "probability": self.probability, "predicted": self.predicted,
            "correct": int(self.predicted == self.true_label), "epochs_run": self.epochs_run,
            "best_epoch": self.best_epoch, "best_val_loss": self.best_val_loss,
            "error": self.error or "",
        }


def _loss_of(model: DstGnn, seqs: Sequence[DynamicGraphSequence]) -> float:
    feats, adj, y = stack_batch(seqs)
    with ad.no_grad():
        logits = model(feats, adj)
        return float(ad.bce_with_logits(logits, y).data)


def fit_model(train: Sequence[DynamicGraphSequence], val: Sequence[DynamicGraphSequence],
              cfg: RunConfig, seed_seq: np.random.SeedSequence,
              in_dim: int | None = None) -> tuple[DstGnn, dict]:
    """AdamW + cosine schedule with early stopping on ``val`` loss.

    Returns the model restored to its best-validation parameters and a
    history dict.
    """
    init_seed, data_seed = seed_seq.spawn(2)
    mcfg = cfg.model(in_dim or train[0].features.shape[-1])
    model = DstGnn(mcfg, seed=int(init_seed.generate_state(1)[0]))
    rng = np.random.default_rng(data_seed)
    opt = AdamW(lr=cfg["optim.lr"], betas=tuple(cfg["optim.betas"]), eps=cfg["optim.eps"],
                weight_decay=cfg["optim.weight_decay"])
    epochs, patience, bs = cfg["optim.epochs"], cfg["optim.patience"], cfg["optim.batch_size"]
    feats, adj, y = stack_batch(train)
    best = (np.inf, 0, model.state_arrays())
    wait = 0
    hist = {"train_loss": [], "val_loss": []}
    epoch = 0
    for epoch in range(1, epochs + 1):
        lr = cosine_lr(epoch - 1, epochs, cfg["optim.lr"])
        order = rng.permutation(len(train))
        losses = []
        for s in range(0, len(order), bs):
            idx = order[s:s + bs]
            for p in model.params.values():
                p.zero_grad()
            logits = model(feats[idx], adj[idx], train=True, rng=rng)
            loss = ad.bce_with_logits(logits, y[idx])
            loss.backward()
            opt.step(model.params, lr=lr)
            losses.append(float(loss.data) * len(idx))
        hist["train_loss"].append(sum(losses) / len(order))
        vl = _loss_of(model, val) if val else hist["train_loss"][-1]
        if not np.isfinite(vl):
            raise NaNGradient(f"validation loss became {vl} at epoch {epoch}")
        hist["val_loss"].append(vl)
        if vl < best[0]:
            best = (vl, epoch, model.state_arrays())
            wait = 0
        else:
            wait += 1
            if wait >= max(patience, 1):
                break
    model.load_arrays(best[2])
    hist.update(best_val_loss=float(best[0]), best_epoch=best[1], epochs_run=epoch)
    return model, hist


def train_fold(fold: FoldSpec, sequences: Sequence[DynamicGraphSequence], cfg: RunConfig,
               seed: int, keep_model: bool = False) -> FoldResult:
    """Fit on ``fold.fit_subjects``, early-stop on ``fold.val_subjects``, test on the rest."""
    fit = [s for s in sequences if s.subject_id in fold.fit_subjects]
    val = [s for s in sequences if s.subject_id in fold.val_subjects]
    test = [s for s in sequences if s.subject_id == fold.test_subject]
    if not test:
        raise ValueError(f"no sequences for test subject {fold.test_subject}")
    stats = fit_feature_scaler(np.stack([s.features for s in fit])) if cfg["features.scale"] else None
    fit_s, val_s, test_s = (scale_sequences(x, stats) for x in (fit, val, test))
    true_label = test[0].label
    try:
        model, hist = fit_model(fit_s, val_s, cfg, _fold_seed(seed, fold.test_subject))
    except NaNGradient as exc:
        log.error("fold %s seed %d aborted: %s", fold.test_subject, seed, exc)
        return FoldResult(seed, fold.test_subject, true_label, [], float("nan"), -1, 0, 0,
                          float("nan"), error=f"NaNGradient: {exc}")
    feats, adj, _ = stack_batch(test_s)
    logits = model.predict_logits(feats, adj)
    prob, pred = aggregate_subject(logits)
    return FoldResult(
        seed, fold.test_subject, true_label, logits.tolist(), prob, pred,
        hist["epochs_run"], hist["best_epoch"], hist["best_val_loss"],
        hist["train_loss"], hist["val_loss"],
        scaler_subjects=tuple(sorted({s.subject_id for s in fit}, key=subject_index)),
        train_batch_subjects=tuple(sorted({s.subject_id for s in fit}, key=subject_index)),
        val_subjects=tuple(sorted({s.subject_id for s in val}, key=subject_index)),
        model=model if keep_model else None,
    )


def check_no_leakage(fold: FoldSpec, result: FoldResult) -> None:
    t = fold.test_subject
    assert t not in result.scaler_subjects, f"{t} leaked into scaler fitting"
    assert t not in result.train_batch_subjects, f"{t} leaked into training batches"
    assert t not in result.val_subjects, f"{t} leaked into early-stopping validation"
    assert not set(result.val_subjects) & set(result.train_batch_subjects), \
        "validation subjects also drive gradients"


@dataclass
class SeedReport:
    seed: int
    folds: list[FoldResult]
    subject_metrics: MetricSet
    sample_metrics: MetricSet
    confusion: ConfusionCounts

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "subject_metrics": self.subject_metrics.as_dict(),
            "sample_metrics": self.sample_metrics.as_dict(),
            "confusion": vars(self.confusion),
            "folds": [f.to_row() | {"sample_logits": f.sample_logits,
                                    "train_loss": f.train_loss, "val_loss": f.val_loss,
                                    "val_subjects": list(f.val_subjects)}
                      for f in self.folds],
        }


def summarize_seed(seed: int, folds: list[FoldResult], sequences) -> SeedReport:
    ok = [f for f in folds if f.error is None]
    cc = ConfusionCounts.from_predictions([f.true_label for f in ok], [f.predicted for f in ok])
    subj = compute_metrics(cc, [(f.probability, f.true_label) for f in ok])
    probs, labels = [], []
    for f in ok:
        probs.extend(sigmoid(f.sample_logits).tolist())
        labels.extend([f.true_label] * len(f.sample_logits))
    sample = metrics_from_probs(probs, labels)
    return SeedReport(seed, folds, subj, sample, cc)


@dataclass
class RunReport:
    tag: str
    config: dict
    seeds: list[SeedReport]
    aggregate: dict
    sample_aggregate: dict
    parameter_count: int

    def to_dict(self) -> dict:
        return {
            "tag": self.tag,
            "config": self.config,
            "parameter_count": self.parameter_count,
            "aggregate": self.aggregate,
            "sample_level_aggregate": self.sample_aggregate,
            "seeds": [s.to_dict() for s in self.seeds],
        }

    def metric_rows(self) -> list[dict]:
        return [f.to_row() | {"tag": self.tag} for s in self.seeds for f in s.folds]


def run_experiment(sequences: Sequence[DynamicGraphSequence], cfg: RunConfig,
                   seeds: Sequence[int] | None = None, tag: str | None = None) -> RunReport:
    """Full LOSO for every seed; mean ± population SD across seeds."""
    seeds = list(seeds if seeds is not None else cfg["eval.seeds"])
    subjects = sorted({s.subject_id for s in sequences}, key=subject_index)
    labels = {s.subject_id: s.label for s in sequences}
    reports = []
    for seed in seeds:
        folds = loso_folds(subjects, labels, seed)
        results = []
        for fold in folds:
            t0 = time.perf_counter()
            res = train_fold(fold, sequences, cfg, seed)
            if res.error is None:
                check_no_leakage(fold, res)
            results.append(res)
            log.info("seed %d fold %s: p=%.3f label=%d epochs=%d (%.1fs)", seed,
                     fold.test_subject, res.probability, res.true_label, res.epochs_run,
                     time.perf_counter() - t0)
        reports.append(summarize_seed(seed, results, sequences))
    model = DstGnn(cfg.model(sequences[0].features.shape[-1]))
    return RunReport(
        tag or cfg["model.variant"], cfg.snapshot(), reports,
        aggregate_metric_sets([r.subject_metrics for r in reports]),
        aggregate_metric_sets([r.sample_metrics for r in reports]),
        model.parameter_count(),
    )


def ablation_config(cfg: RunConfig, variant: str) -> RunConfig:
    return cfg.updated({"model.variant": variant})


def ablation(sequences_for, cfg: RunConfig, variant: str,
             seeds: Sequence[int] | None = None) -> RunReport:
    """Run the experiment with one architectural component swapped out.

    ``sequences_for`` maps a config to its graph sequences, so the
    fully-connected variant can rebuild topologies.
    """
    vcfg = ablation_config(cfg, variant)
    return run_experiment(sequences_for(vcfg), vcfg, seeds, tag=variant)


@dataclass
class FinalModel:
    model: DstGnn
    scaler: ScalerStats | None
    val_subjects: tuple[str, ...]
    history: dict

    def scale(self, seqs: Sequence[DynamicGraphSequence]) -> list[DynamicGraphSequence]:
        return scale_sequences(seqs, self.scaler)


def train_final_model(sequences: Sequence[DynamicGraphSequence], cfg: RunConfig,
                      seed: int) -> FinalModel:
    """Fit one model on every subject (for checkpoints and attributions).

    Early stopping uses a seed-drawn validation pair, one subject per
    class, chosen by the same rule as the LOSO folds.
    """
    subjects = sorted({s.subject_id for s in sequences}, key=subject_index)
    labels = {s.subject_id: s.label for s in sequences}
    rng = np.random.default_rng(seed)
    val = tuple(sorted((pool[int(rng.integers(len(pool)))]
                        for pool in ([s for s in subjects if labels[s] == c] for c in (1, 0))),
                       key=subject_index))
    fit = [s for s in sequences if s.subject_id not in val]
    hold = [s for s in sequences if s.subject_id in val]
    stats = fit_feature_scaler(np.stack([s.features for s in fit])) if cfg["features.scale"] else None
    model, hist = fit_model(scale_sequences(fit, stats), scale_sequences(hold, stats), cfg,
                            np.random.SeedSequence([seed, 0]))
    return FinalModel(model, stats, val, hist)
