"""Attributions for a trained graph model.

* Integrated Gradients over the node-feature tensor of one sequence, with a
  zero-feature baseline on the sequence's own topology.
* Edge importance from the gradient of the logit with respect to a
  multiplicative mask on the attention coefficients.
* Channel / feature aggregations and a ranked edge list.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataset_io import CHANNELS
from .features import FEATURE_NAMES
from .nn import autodiff as ad
from .nn.model import DstGnn

HJORTH_NAMES = ("HjorthActivity", "HjorthMobility", "HjorthComplexity", "MeanAmplitude")


@dataclass(frozen=True)
class AttributionMap:
    values: np.ndarray     # [T, N, F] signed attributions
    baseline: np.ndarray   # [T, N, F]
    steps: int
    logit: float           # F(x)
    baseline_logit: float  # F(baseline)

    @property
    def completeness_error(self) -> float:
        """|sum(IG) − (F(x) − F(b))| / |F(x) − F(b)|."""
        gap = self.logit - self.baseline_logit
        return float(abs(self.values.sum() - gap) / abs(gap)) if gap else float("nan")


def _gradient_batch(model: DstGnn, feats: np.ndarray, adj: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample ∂logit/∂features for a batch (samples are independent in eval mode)."""
    x = ad.Tensor(feats, requires_grad=True)
    for p in model.params.values():
        p.zero_grad()
    logits = model(x, adj)
    logits.sum().backward()
    return x.grad, logits.data


def integrated_gradients(model: DstGnn, features: np.ndarray, adjacency: np.ndarray,
                         baseline: np.ndarray | None = None, steps: int = 128,
                         batch_size: int = 32) -> AttributionMap:
    """Midpoint-rule Integrated Gradients for one ``[T, N, F]`` sequence.

    The path points b + ((k − ½)/steps)(x − b), k = 1..steps, are pushed
    through the model in batches and their gradients averaged.
    """
    x = np.asarray(features, dtype=np.float64)
    b = np.zeros_like(x) if baseline is None else np.asarray(baseline, dtype=np.float64)
    if b.shape != x.shape:
        raise ValueError(f"baseline shape {b.shape} differs from sample shape {x.shape}")
    if steps < 1:
        raise ValueError("steps must be >= 1")
    adj = np.asarray(adjacency, dtype=bool)
    alphas = (np.arange(1, steps + 1) - 0.5) / steps
    total = np.zeros_like(x)
    for s in range(0, steps, batch_size):
        a = alphas[s:s + batch_size]
        path = b[None] + a[:, None, None, None] * (x - b)[None]
        g, _ = _gradient_batch(model, path, np.broadcast_to(adj, (len(a),) + adj.shape))
        total += g.sum(axis=0)
    ends = model.predict_logits(np.stack([x, b]), np.stack([adj, adj]))
    return AttributionMap((x - b) * total / steps, b, steps, float(ends[0]), float(ends[1]))


def edge_importance(model: DstGnn, samples: Sequence[tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
    """Mean |∂logit/∂m_ij| over samples and windows, symmetrised, max-normalised.

    ``samples`` is a sequence of (features [T, N, F], adjacency [T, N, N]).
    The mask multiplies the attention coefficients of every GAT layer and
    is evaluated at m = 1. Edges absent from every topology score 0.
    """
    acc = None
    count = 0
    for feats, adj in samples:
        adj = np.asarray(adj, dtype=bool)
        mask = ad.parameter(np.ones((1,) + adj.shape))
        for p in model.params.values():
            p.zero_grad()
        logit = model(np.asarray(feats)[None], adj[None], edge_mask=mask)
        logit.sum().backward()
        g = np.abs(mask.grad[0])                       # [T, N, N]
        if model.cfg.variant != "fully_connected":
            g = np.where(adj, g, 0.0)                  # only edges of the input topology
        acc = g.sum(axis=0) if acc is None else acc + g.sum(axis=0)
        count += g.shape[0]
    if acc is None:
        raise ValueError("no samples")
    m = acc / count
    m = 0.5 * (m + m.T)
    np.fill_diagonal(m, 0.0)
    top = m.max()
    return m / top if top > 0 else m


def _normalised_share(v: np.ndarray) -> np.ndarray:
    s = v.sum()
    return v / s if s > 0 else v


def channel_importance(values: np.ndarray) -> np.ndarray:
    """Mean |attribution| per channel over every other axis, summing to 1.

    ``values`` is ``[..., N, F]`` (one map or a stack of maps).
    """
    a = np.abs(np.asarray(values, dtype=np.float64))
    return _normalised_share(a.reshape(-1, a.shape[-2], a.shape[-1]).mean(axis=(0, 2)))


def feature_importance(values: np.ndarray) -> np.ndarray:
    """Mean |attribution| per feature over every other axis, summing to 1."""
    a = np.abs(np.asarray(values, dtype=np.float64))
    return _normalised_share(a.reshape(-1, a.shape[-1]).mean(axis=0))


def feature_group_shares(fi: np.ndarray, names: Sequence[str] = FEATURE_NAMES) -> dict[str, float]:
    """Share of the Beta band and of the four Hjorth-group features."""
    idx = {n: i for i, n in enumerate(names)}
    return {"Beta": float(fi[idx["Beta"]]),
            "Hjorth": float(sum(fi[idx[n]] for n in HJORTH_NAMES))}


def top_connections(e: np.ndarray, k: int, names: Sequence[str] = CHANNELS
                    ) -> list[tuple[str, str, float]]:
    """``k`` strongest undirected edges; equal scores are ordered by their labels."""
    n = e.shape[0]
    if not 0 <= k <= n * (n - 1) // 2:
        raise ValueError(f"k must be in [0, {n * (n - 1) // 2}], got {k}")
    rows = []
    for i in range(n):
        for j in range(i + 1, n):
            a, b = sorted((names[i], names[j]))
            rows.append((a, b, float(e[i, j])))
    rows.sort(key=lambda r: (-r[2], r[0], r[1]))
    return rows[:k]


# -- writers -----------------------------------------------------------------

def _writer(path: Path):
    fh = open(path, "w", newline="")
    return fh, csv.writer(fh, lineterminator="\n")


def write_attributions_csv(values: np.ndarray, path: Path, names: Sequence[str] = CHANNELS,
                           features: Sequence[str] = FEATURE_NAMES) -> None:
    fh, w = _writer(path)
    with fh:
        w.writerow(["window", "channel", "feature", "value"])
        for t in range(values.shape[0]):
            for c in range(values.shape[1]):
                for f in range(values.shape[2]):
                    w.writerow([t, names[c], features[f], repr(float(values[t, c, f]))])


def write_importance_csv(v: np.ndarray, labels: Sequence[str], key: str, path: Path) -> None:
    fh, w = _writer(path)
    with fh:
        w.writerow([key, "importance"])
        for name, val in zip(labels, v):
            w.writerow([name, repr(float(val))])


def write_edge_importance_csv(e: np.ndarray, path: Path, names: Sequence[str] = CHANNELS) -> None:
    fh, w = _writer(path)
    with fh:
        w.writerow([""] + list(names))
        for name, row in zip(names, e):
            w.writerow([name] + [repr(float(v)) for v in row])


def write_top_edges_csv(rows: list[tuple[str, str, float]], path: Path) -> None:
    fh, w = _writer(path)
    with fh:
        w.writerow(["rank", "src", "dst", "importance"])
        for r, (a, b, v) in enumerate(rows, 1):
            w.writerow([r, a, b, repr(v)])
