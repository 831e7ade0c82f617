"""Phase-based connectivity (PLI / wPLI) and thresholded graph sequences."""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataset_io import CHANNELS
from .errors import DegenerateGraph, LengthMismatch, ZeroDenominator
from .preprocess import WindowedRecording

N_NODES = len(CHANNELS)


def analytic_signal(x: np.ndarray, axis: int = 0) -> np.ndarray:
    """Analytic signal via the frequency-domain Hilbert transform."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[axis]
    spec = np.fft.fft(x, axis=axis)
    h = np.zeros(n)
    if n % 2 == 0:
        h[0] = h[n // 2] = 1.0
        h[1:n // 2] = 2.0
    else:
        h[0] = 1.0
        h[1:(n + 1) // 2] = 2.0
    shape = [1] * x.ndim
    shape[axis] = n
    return np.fft.ifft(spec * h.reshape(shape), axis=axis)


def analytic_phase(window: np.ndarray) -> np.ndarray:
    """Instantaneous phase in (-pi, pi] for a [samples × channels] window."""
    window = np.asarray(window, dtype=np.float64)
    if window.shape[0] < 16:
        raise ValueError(f"window needs >= 16 samples, got {window.shape[0]}")
    return np.angle(analytic_signal(window, axis=0))


def wrap_phase(d: np.ndarray) -> np.ndarray:
    """Wrap to (-pi, pi]."""
    w = np.angle(np.exp(1j * d))
    return np.where(w == -np.pi, np.pi, w)


def phase_differences(phases: np.ndarray) -> np.ndarray:
    """[samples × channels] -> wrapped pairwise differences [samples × ch × ch]."""
    p = np.asarray(phases, dtype=np.float64)
    return wrap_phase(p[:, :, None] - p[:, None, :])


def pli_from_diff(dphi: np.ndarray) -> np.ndarray:
    """|mean(sign(dphi))| over the first axis."""
    return np.abs(np.mean(np.sign(dphi), axis=0))


def wpli_from_diff(dphi: np.ndarray) -> np.ndarray:
    """|mean(|dphi| sign(dphi))| / mean(|dphi|) over the first axis.

    Entries whose denominator vanishes are set to 0 with a warning.
    """
    num = np.abs(np.mean(np.abs(dphi) * np.sign(dphi), axis=0))
    den = np.mean(np.abs(dphi), axis=0)
    zero = den <= 0
    out = np.divide(num, den, out=np.zeros_like(num), where=~zero)
    if np.ndim(out) >= 2:
        off = zero & ~np.eye(out.shape[-1], dtype=bool)
    else:
        off = zero
    if np.any(off):
        warnings.warn(f"wPLI denominator is zero for {int(np.sum(off))} entries",
                      ZeroDenominator)
    return out


def finalize_matrix(m: np.ndarray) -> np.ndarray:
    m = 0.5 * (m + m.T)
    np.fill_diagonal(m, 0.0)
    return np.clip(m, 0.0, 1.0)


def pli(phases: np.ndarray) -> np.ndarray:
    if phases.shape[0] < 2:
        raise ValueError("PLI needs at least 2 samples")
    return finalize_matrix(pli_from_diff(phase_differences(phases)))


def wpli(phases: np.ndarray) -> np.ndarray:
    if phases.shape[0] < 2:
        raise ValueError("wPLI needs at least 2 samples")
    return finalize_matrix(wpli_from_diff(phase_differences(phases)))


METRICS = {"pli": pli, "wpli": wpli}


def connectivity_matrix(window: np.ndarray, metric: str = "pli") -> np.ndarray:
    return METRICS[metric.lower()](analytic_phase(window))


@dataclass(frozen=True)
class GraphTopology:
    """Undirected graph on ``n_nodes`` nodes stored as a boolean adjacency."""

    adjacency: np.ndarray  # [N, N] bool, symmetric, zero diagonal
    weights: np.ndarray    # [N, N] connectivity values
    threshold_value: float

    @property
    def edges(self) -> list[tuple[int, int]]:
        i, j = np.nonzero(np.triu(self.adjacency, 1))
        return list(zip(i.tolist(), j.tolist()))

    @property
    def n_edges(self) -> int:
        return int(np.triu(self.adjacency, 1).sum())


def threshold_graph(c: np.ndarray, percentile: float = 50.0,
                    absolute: float | None = None) -> GraphTopology:
    """Keep edges strictly above the given percentile of the upper triangle.

    ``absolute`` overrides the percentile with a fixed cut. Percentile 0
    uses a cut of 0 so every positive-weight edge survives.
    """
    c = np.asarray(c, dtype=np.float64)
    n = c.shape[0]
    iu = np.triu_indices(n, 1)
    vals = c[iu]
    if absolute is not None:
        thr = float(absolute)
    else:
        if not 0 <= percentile < 100:
            raise ValueError(f"percentile must be in [0, 100), got {percentile}")
        thr = 0.0 if percentile == 0 else float(np.percentile(vals, percentile))
    keep = np.zeros((n, n), dtype=bool)
    keep[iu] = vals > thr
    keep = keep | keep.T
    if not keep.any():
        warnings.warn("thresholded graph has no edges", DegenerateGraph)
    return GraphTopology(keep, c, thr)


def complete_topology(n: int = N_NODES) -> GraphTopology:
    adj = ~np.eye(n, dtype=bool)
    return GraphTopology(adj, adj.astype(float), 0.0)


@dataclass(frozen=True)
class DynamicGraphSequence:
    """Time-ordered graphs with node features for one (subject, task) recording."""

    adjacency: np.ndarray   # [T, N, N] bool
    weights: np.ndarray     # [T, N, N]
    features: np.ndarray    # [T, N, F]
    subject_id: str = ""
    task: str = ""
    label: int = -1

    def __len__(self) -> int:
        return self.adjacency.shape[0]

    def with_features(self, features: np.ndarray) -> "DynamicGraphSequence":
        return DynamicGraphSequence(self.adjacency, self.weights, features,
                                    self.subject_id, self.task, self.label)

    def fully_connected(self) -> "DynamicGraphSequence":
        t, n, _ = self.adjacency.shape
        adj = np.broadcast_to(~np.eye(n, dtype=bool), (t, n, n)).copy()
        return DynamicGraphSequence(adj, self.weights, self.features,
                                    self.subject_id, self.task, self.label)

    def topology(self, t: int) -> GraphTopology:
        return GraphTopology(self.adjacency[t], self.weights[t], float("nan"))


def window_connectivity(rec: WindowedRecording, metric: str = "pli") -> np.ndarray:
    """[windows × 19 × 19] connectivity matrices."""
    return np.stack([connectivity_matrix(w, metric) for w in rec.windows])


def build_graph_sequence(rec: WindowedRecording, feats: np.ndarray, metric: str = "pli",
                         percentile: float = 50.0, absolute: float | None = None,
                         label: int = -1, matrices: np.ndarray | None = None
                         ) -> DynamicGraphSequence:
    feats = np.asarray(feats)
    if len(feats) != len(rec):
        raise LengthMismatch(f"{len(feats)} feature matrices for {len(rec)} windows")
    if matrices is None:
        matrices = window_connectivity(rec, metric)
    topo = [threshold_graph(m, percentile, absolute) for m in matrices]
    return DynamicGraphSequence(
        np.stack([g.adjacency for g in topo]), np.asarray(matrices), feats,
        rec.subject_id, rec.task.value, label)


def upper_triangle(m: np.ndarray) -> np.ndarray:
    return m[np.triu_indices(m.shape[-1], 1)]


def pearson_r(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, float) - np.mean(a)
    b = np.asarray(b, float) - np.mean(b)
    den = np.sqrt(np.sum(a * a) * np.sum(b * b))
    if den == 0:
        return 1.0 if np.allclose(a, b) else 0.0
    return float(np.sum(a * b) / den)


def compare_matrices(p: np.ndarray, w: np.ndarray) -> tuple[float, float]:
    """(Pearson r of upper triangles, mean(w) / mean(p))."""
    up, uw = upper_triangle(p), upper_triangle(w)
    mp = up.mean()
    ratio = float(uw.mean() / mp) if mp > 0 else float("nan")
    return pearson_r(up, uw), ratio


def pli_wpli_comparison(per_recording: dict[tuple[str, str], tuple[np.ndarray, np.ndarray]]
                        ) -> dict:
    """Summarise PLI vs wPLI agreement.

    ``per_recording`` maps (subject, task) to (mean PLI, mean wPLI) matrices.
    """
    by_task: dict[str, list[tuple[float, float]]] = {}
    rows = []
    for (sid, task), (p, w) in sorted(per_recording.items()):
        r, ratio = compare_matrices(p, w)
        by_task.setdefault(task, []).append((r, ratio))
        rows.append({"subject_id": sid, "task": task, "pearson_r": r, "mean_ratio": ratio})
    per_condition = {
        t: {"pearson_r": float(np.mean([v[0] for v in vals])),
            "mean_ratio": float(np.mean([v[1] for v in vals]))}
        for t, vals in by_task.items()
    }
    return {
        "per_recording": rows,
        "per_condition": per_condition,
        "mean_pearson_r": float(np.mean([r["pearson_r"] for r in rows])) if rows else float("nan"),
        "mean_ratio": float(np.mean([r["mean_ratio"] for r in rows])) if rows else float("nan"),
    }


def write_matrix_csv(m: np.ndarray, path: Path, names: Sequence[str] = CHANNELS) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([""] + list(names))
        for name, row in zip(names, m):
            w.writerow([name] + [repr(float(v)) for v in row])


def write_edge_list_csv(g: GraphTopology, path: Path, names: Sequence[str] = CHANNELS) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["src", "dst", "weight"])
        for i, j in g.edges:
            w.writerow([names[i], names[j], repr(float(g.weights[i, j]))])
