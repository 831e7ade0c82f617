"""Signal chain: Butterworth bandpass, notch, per-channel z-score, windowing."""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import signal

from .dataset_io import Recording, TaskId
from .errors import DegenerateChannel, InvalidSpec, PlanMismatch, UnstableFilter, WindowTooLong

DEGENERATE_SIGMA = 1e-12


class FilterKind(str, Enum):
    BANDPASS = "BandpassButterworth"
    NOTCH = "Notch"


@dataclass(frozen=True)
class FilterSpec:
    kind: FilterKind = FilterKind.BANDPASS
    order: int = 4
    low_hz: float = 0.5
    high_hz: float = 45.0
    center_hz: float = 50.0
    q_factor: float = 30.0

    def validate(self, sample_rate: float) -> None:
        nyq = sample_rate / 2
        if self.kind is FilterKind.BANDPASS:
            if self.order < 1:
                raise InvalidSpec(f"filter order must be >= 1, got {self.order}")
            if not 0 < self.low_hz < self.high_hz < nyq:
                raise InvalidSpec(
                    f"need 0 < low ({self.low_hz}) < high ({self.high_hz}) < Nyquist ({nyq})")
        else:
            if not 0 < self.center_hz < nyq:
                raise InvalidSpec(f"notch centre {self.center_hz} Hz outside (0, {nyq})")
            if self.q_factor <= 0:
                raise InvalidSpec("notch Q must be positive")


def design_sos(spec: FilterSpec, sample_rate: float) -> np.ndarray:
    """Second-order sections for ``spec`` (single pass)."""
    spec.validate(sample_rate)
    if spec.kind is FilterKind.BANDPASS:
        sos = signal.butter(spec.order, [spec.low_hz, spec.high_hz], btype="bandpass",
                            fs=sample_rate, output="sos")
    else:
        b, a = signal.iirnotch(spec.center_hz, spec.q_factor, fs=sample_rate)
        sos = signal.tf2sos(b, a)
    poles = np.concatenate([np.roots(s[3:]) for s in sos])
    if np.any(np.abs(poles) >= 1.0):
        raise UnstableFilter(f"pole magnitude {np.abs(poles).max():.6f} >= 1")
    return sos


def _zero_phase(rec: Recording, sos: np.ndarray) -> Recording:
    out = signal.sosfiltfilt(sos, rec.data, axis=0)
    return rec.with_data(out)


def bandpass(rec: Recording, spec: FilterSpec | None = None) -> Recording:
    spec = spec or FilterSpec()
    if spec.kind is not FilterKind.BANDPASS:
        raise InvalidSpec("bandpass() needs a bandpass FilterSpec")
    return _zero_phase(rec, design_sos(spec, rec.sample_rate_hz))


def notch(rec: Recording, center_hz: float = 50.0, q: float = 30.0) -> Recording:
    spec = FilterSpec(kind=FilterKind.NOTCH, center_hz=center_hz, q_factor=q)
    return _zero_phase(rec, design_sos(spec, rec.sample_rate_hz))


@dataclass(frozen=True)
class ZScoreStats:
    mu: np.ndarray
    sigma: np.ndarray

    def invert(self, z: np.ndarray) -> np.ndarray:
        return z * self.sigma + self.mu


def zscore(rec: Recording) -> tuple[Recording, ZScoreStats]:
    """Per-channel ``(x - mean) / std`` with population std.

    Channels whose std falls below 1e-12 become zeros and raise a
    :class:`DegenerateChannel` warning.
    """
    x = rec.data
    mu = x.mean(axis=0)
    sigma = x.std(axis=0)
    flat = sigma < DEGENERATE_SIGMA
    if np.any(flat):
        names = [rec.channel_names[i] for i in np.flatnonzero(flat)]
        warnings.warn(f"{rec.subject_id}/{rec.task.value}: constant channel(s) {names}",
                      DegenerateChannel)
    safe = np.where(flat, 1.0, sigma)
    z = np.where(flat, 0.0, (x - mu) / safe)
    return rec.with_data(z), ZScoreStats(mu, sigma)


@dataclass(frozen=True)
class WindowPlan:
    window_len_samples: int
    stride_samples: int
    count: int

    def fits(self, n_samples: int) -> bool:
        return (self.count >= 1 and self.window_len_samples >= 1
                and (self.count - 1) * self.stride_samples + self.window_len_samples <= n_samples)


def plan_windows(n_samples: int, sample_rate: float, target_count: int = 30,
                 window_len_s: float = 2.0) -> WindowPlan:
    """Evenly spread ``target_count`` windows of ``window_len_s`` over the recording."""
    if target_count < 1:
        raise WindowTooLong(f"window count must be >= 1, got {target_count}")
    win = int(round(window_len_s * sample_rate))
    if win < 1 or win > n_samples:
        raise WindowTooLong(f"window of {win} samples does not fit {n_samples} samples")
    if target_count == 1:
        return WindowPlan(win, win, 1)
    stride = (n_samples - win) // (target_count - 1)
    if stride < 1:
        raise WindowTooLong(
            f"{target_count} windows of {win} samples cannot advance within {n_samples} samples")
    return WindowPlan(win, stride, target_count)


@dataclass(frozen=True)
class WindowedRecording:
    windows: np.ndarray  # [count, window_len, channels]
    plan: WindowPlan
    subject_id: str
    task: TaskId
    sample_rate_hz: float

    def __len__(self) -> int:
        return self.windows.shape[0]


def windowize(rec: Recording, plan: WindowPlan) -> WindowedRecording:
    if not plan.fits(rec.n_samples):
        raise PlanMismatch(f"plan {plan} needs more than {rec.n_samples} samples")
    starts = np.arange(plan.count) * plan.stride_samples
    idx = starts[:, None] + np.arange(plan.window_len_samples)[None, :]
    windows = rec.data[idx]
    return WindowedRecording(windows, plan, rec.subject_id, rec.task, rec.sample_rate_hz)


@dataclass(frozen=True)
class PreprocessConfig:
    bandpass: FilterSpec = FilterSpec()
    notch_center_hz: float = 50.0
    notch_q: float = 30.0
    window_count: int = 30
    window_length_s: float = 2.0


def preprocess_recording(rec: Recording, cfg: PreprocessConfig | None = None) -> WindowedRecording:
    """bandpass -> notch -> z-score -> windowize."""
    cfg = cfg or PreprocessConfig()
    x = bandpass(rec, cfg.bandpass)
    x = notch(x, cfg.notch_center_hz, cfg.notch_q)
    x, _ = zscore(x)
    plan = plan_windows(x.n_samples, x.sample_rate_hz, cfg.window_count, cfg.window_length_s)
    return windowize(x, plan)


def magnitude_db(spec: FilterSpec, freqs_hz, sample_rate: float) -> np.ndarray:
    """Single-pass magnitude response in dB at ``freqs_hz``."""
    sos = design_sos(spec, sample_rate)
    _, h = signal.sosfreqz(sos, worN=np.atleast_1d(np.asarray(freqs_hz, float)), fs=sample_rate)
    return 20 * np.log10(np.maximum(np.abs(h), 1e-300))


def gap_fraction(plan: WindowPlan) -> float:
    """Fraction of each stride not covered by a window (0 for contiguous plans)."""
    if plan.count == 1:
        return 0.0
    return max(0, plan.stride_samples - plan.window_len_samples) / plan.stride_samples


__all__ = [
    "FilterKind", "FilterSpec", "ZScoreStats", "WindowPlan", "WindowedRecording",
    "PreprocessConfig", "bandpass", "notch", "zscore", "plan_windows", "windowize",
    "preprocess_recording", "design_sos", "magnitude_db", "gap_fraction",
]
