"""Node features: Welch band powers and Hjorth descriptors per channel and window."""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateFeature, SegmentTooLong
from .preprocess import WindowedRecording


@dataclass(frozen=True)
class BandDef:
    name: str
    low_hz: float
    high_hz: float


BANDS: tuple[BandDef, ...] = (
    BandDef("Delta", 0.5, 4.0),
    BandDef("Theta", 4.0, 8.0),
    BandDef("Alpha", 8.0, 13.0),
    BandDef("Beta", 13.0, 30.0),
    BandDef("Gamma", 30.0, 45.0),
)

FEATURE_NAMES: tuple[str, ...] = tuple(b.name for b in BANDS) + (
    "HjorthActivity", "HjorthMobility", "HjorthComplexity", "MeanAmplitude",
)
N_FEATURES = len(FEATURE_NAMES)


@dataclass(frozen=True)
class WelchSpec:
    segment_len_samples: int = 250
    overlap_fraction: float = 0.5
    window_fn: str = "hann"

    def __post_init__(self):
        if not 0 <= self.overlap_fraction < 1:
            raise ValueError(f"overlap must be in [0, 1), got {self.overlap_fraction}")
        if self.window_fn != "hann":
            raise ValueError(f"unsupported window {self.window_fn!r}")

    @classmethod
    def from_seconds(cls, segment_s: float, overlap: float, rate: float) -> "WelchSpec":
        return cls(int(round(segment_s * rate)), overlap)


def _hann(n: int) -> np.ndarray:
    # periodic Hann, the usual choice for spectral averaging
    return 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(n) / n)


def welch_psd(x: np.ndarray, rate: float, spec: WelchSpec | None = None
              ) -> tuple[np.ndarray, np.ndarray]:
    """One-sided Welch PSD along the last axis.

    Segments are mean-detrended and Hann-windowed; periodograms are
    averaged. Units are input²/Hz.
    """
    spec = spec or WelchSpec()
    x = np.asarray(x, dtype=np.float64)
    nseg = spec.segment_len_samples
    n = x.shape[-1]
    if nseg > n:
        raise SegmentTooLong(f"segment of {nseg} samples exceeds signal of {n}")
    step = nseg - int(np.floor(nseg * spec.overlap_fraction))
    step = max(step, 1)
    starts = np.arange(0, n - nseg + 1, step)
    idx = starts[:, None] + np.arange(nseg)[None, :]
    segs = x[..., idx]  # [..., n_segments, nseg]
    segs = segs - segs.mean(axis=-1, keepdims=True)
    win = _hann(nseg)
    spec_ = np.fft.rfft(segs * win, axis=-1)
    psd = (np.abs(spec_) ** 2) / (rate * np.sum(win ** 2))
    if nseg % 2 == 0:
        psd[..., 1:-1] *= 2
    else:
        psd[..., 1:] *= 2
    freqs = np.fft.rfftfreq(nseg, d=1.0 / rate)
    return freqs, psd.mean(axis=-2)


def band_powers(freqs: np.ndarray, psd: np.ndarray,
                bands: Sequence[BandDef] = BANDS) -> np.ndarray:
    """Trapezoidal integral of ``psd`` over each band (last axis is frequency)."""
    out = []
    for b in bands:
        sel = (freqs >= b.low_hz) & (freqs <= b.high_hz)
        if sel.sum() < 2:
            out.append(np.zeros(psd.shape[:-1]))
            continue
        out.append(np.trapezoid(psd[..., sel], freqs[sel], axis=-1))
    return np.stack(out, axis=-1)


def hjorth(x: np.ndarray) -> np.ndarray:
    """(activity, mobility, complexity, mean |x|) along the last axis.

    Derivatives are first differences. A zero-variance signal or derivative
    yields 0 for the ratios that would divide by it.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] < 3:
        raise ValueError("hjorth needs at least 3 samples")
    dx = np.diff(x, axis=-1)
    ddx = np.diff(dx, axis=-1)
    var_x = x.var(axis=-1)
    var_dx = dx.var(axis=-1)
    var_ddx = ddx.var(axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        mob = np.where(var_x > 0, np.sqrt(var_dx / var_x), 0.0)
        mob_dx = np.where(var_dx > 0, np.sqrt(var_ddx / var_dx), 0.0)
        comp = np.where(mob > 0, mob_dx / mob, 0.0)
    mean_amp = np.abs(x).mean(axis=-1)
    return np.stack([var_x, mob, comp, mean_amp], axis=-1)


def node_features(window: np.ndarray, rate: float, spec: WelchSpec | None = None) -> np.ndarray:
    """[window_len × channels] -> [channels × 9]."""
    xt = np.asarray(window, dtype=np.float64).T
    freqs, psd = welch_psd(xt, rate, spec)
    return np.concatenate([band_powers(freqs, psd), hjorth(xt)], axis=-1)


def extract_node_features(w: WindowedRecording, spec: WelchSpec | None = None) -> np.ndarray:
    """One [19 × 9] matrix per window, stacked as [windows × 19 × 9]."""
    if len(w) == 0:
        raise ValueError("no windows")
    xt = np.swapaxes(w.windows, 1, 2)  # [windows, channels, samples]
    freqs, psd = welch_psd(xt, w.sample_rate_hz, spec)
    return np.concatenate([band_powers(freqs, psd), hjorth(xt)], axis=-1)


@dataclass(frozen=True)
class ScalerStats:
    mean: np.ndarray
    scale: np.ndarray
    degenerate: np.ndarray


def fit_feature_scaler(train_features: np.ndarray) -> ScalerStats:
    """Per-feature-column mean/std over every leading axis of ``train_features``."""
    f = np.asarray(train_features, dtype=np.float64)
    flat = f.reshape(-1, f.shape[-1])
    mean = flat.mean(axis=0)
    sd = flat.std(axis=0)
    degenerate = sd < 1e-12
    if np.any(degenerate):
        cols = np.flatnonzero(degenerate).tolist()
        shown = ", ".join(map(str, cols[:10])) + (", ..." if len(cols) > 10 else "")
        warnings.warn(f"{len(cols)} constant feature column(s): {shown}", DegenerateFeature)
    return ScalerStats(mean, np.where(degenerate, 1.0, sd), degenerate)


def apply_scaler(features: np.ndarray, stats: ScalerStats) -> np.ndarray:
    z = (np.asarray(features, dtype=np.float64) - stats.mean) / stats.scale
    return np.where(stats.degenerate, 0.0, z)


def scaler_to_dict(stats: ScalerStats | None) -> dict | None:
    if stats is None:
        return None
    return {"mean": stats.mean.tolist(), "scale": stats.scale.tolist(),
            "degenerate": stats.degenerate.tolist()}


def scaler_from_dict(d: dict | None) -> ScalerStats | None:
    if d is None:
        return None
    return ScalerStats(np.asarray(d["mean"], float), np.asarray(d["scale"], float),
                       np.asarray(d["degenerate"], bool))
