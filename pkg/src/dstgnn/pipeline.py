"""Dataset -> per-recording features, connectivity and graph sequences."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .config import RunConfig
from .connectivity import (
    DynamicGraphSequence, finalize_matrix, analytic_phase, phase_differences, pli_from_diff,
    threshold_graph, wpli_from_diff,
)
from .dataset_io import Dataset, Recording
from .features import extract_node_features
from .preprocess import WindowPlan, bandpass, notch, plan_windows, windowize, zscore

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PreparedRecording:
    subject_id: str
    task: str
    label: int
    plan: WindowPlan
    features: np.ndarray      # [T, 19, 9] unscaled
    pli: np.ndarray           # [T, 19, 19]
    wpli: np.ndarray          # [T, 19, 19]
    correlation: np.ndarray   # [19, 19] Pearson over the whole preprocessed recording

    def matrices(self, metric: str) -> np.ndarray:
        return self.pli if metric == "pli" else self.wpli


def prepare_recording(rec: Recording, label: int, cfg: RunConfig) -> PreparedRecording:
    pc = cfg.preprocess()
    x = bandpass(rec, pc.bandpass)
    x = notch(x, pc.notch_center_hz, pc.notch_q)
    x, _ = zscore(x)
    plan = plan_windows(x.n_samples, x.sample_rate_hz, pc.window_count, pc.window_length_s)
    w = windowize(x, plan)
    feats = extract_node_features(w, cfg.welch(x.sample_rate_hz))
    plis, wplis = [], []
    for win in w.windows:
        d = phase_differences(analytic_phase(win))
        plis.append(finalize_matrix(pli_from_diff(d)))
        wplis.append(finalize_matrix(wpli_from_diff(d)))
    with np.errstate(invalid="ignore", divide="ignore"):
        corr = np.corrcoef(x.data.T)
    corr = np.nan_to_num(corr)
    np.fill_diagonal(corr, 0.0)
    return PreparedRecording(rec.subject_id, rec.task.value, label, plan, feats,
                             np.stack(plis), np.stack(wplis), corr)


def prepare_dataset(ds: Dataset, cfg: RunConfig) -> list[PreparedRecording]:
    """Prepare every (subject, task) of the configured tasks, subject-major."""
    out = []
    tasks = [t for t in cfg["data.tasks"] if any(t == x.value for x in ds.tasks)]
    for sid in ds.subjects:
        label = ds.label_of(sid).as_int
        for task in tasks:
            out.append(prepare_recording(ds.get(sid, task), label, cfg))
    log.info("prepared %d recordings", len(out))
    return out


def to_sequence(p: PreparedRecording, cfg: RunConfig) -> DynamicGraphSequence:
    metric = cfg["connectivity.metric"]
    mats = p.matrices(metric)
    adj = np.stack([threshold_graph(m, cfg["connectivity.threshold_percentile"],
                                    cfg["connectivity.absolute_threshold"]).adjacency
                    for m in mats])
    seq = DynamicGraphSequence(adj, mats, p.features, p.subject_id, p.task, p.label)
    if cfg["model.variant"] == "fully_connected":
        seq = seq.fully_connected()
    return seq


def build_sequences(prepared: list[PreparedRecording], cfg: RunConfig) -> list[DynamicGraphSequence]:
    return [to_sequence(p, cfg) for p in prepared]
