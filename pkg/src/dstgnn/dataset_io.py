"""Loading the published folder layout and generating synthetic recordings.

The on-disk layout is ``<root>/S<k>/<TASK>.csv`` with 19 numeric columns,
one row per sample at 250 Hz, plus an optional ``labels.csv``
(``subject_id,label``).
"""
from __future__ import annotations

import csv
import logging
import re
import warnings
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    ChannelOrderWarning,
    FrequencyOutOfRange,
    LabelMismatch,
    MissingFile,
    NonNumericCell,
    ShapeMismatch,
)

log = logging.getLogger(__name__)

SAMPLE_RATE_HZ = 250.0

CHANNELS: tuple[str, ...] = (
    "Fp1", "Fp2", "F7", "F3", "Fz", "F4", "F8", "T7", "C3", "Cz",
    "C4", "T8", "P7", "P3", "Pz", "P4", "P8", "O1", "O2",
)
N_CHANNELS = len(CHANNELS)


class TaskId(str, Enum):
    EC = "EC"
    EO = "EO"
    H = "H"
    C = "C"
    S = "S"
    F = "F"
    M = "M"
    ET = "ET"
    R = "R"

    @property
    def duration_s(self) -> float:
        return 120.0 if self is TaskId.ET else 60.0

    def expected_samples(self, sample_rate: float = SAMPLE_RATE_HZ) -> int:
        return int(round(self.duration_s * sample_rate))


ALL_TASKS: tuple[TaskId, ...] = tuple(TaskId)


class Label(str, Enum):
    ADDICTED = "Addicted"
    NOT_ADDICTED = "NotAddicted"

    @classmethod
    def parse(cls, text: str) -> "Label":
        key = re.sub(r"[\s_\-]", "", text).lower()
        if key == "addicted":
            return cls.ADDICTED
        if key == "notaddicted":
            return cls.NOT_ADDICTED
        raise LabelMismatch(f"unrecognised label {text!r}")

    @property
    def as_int(self) -> int:
        return 1 if self is Label.ADDICTED else 0


@dataclass(frozen=True)
class SubjectLabel:
    subject_id: str
    label: Label
    gender: str | None = None


# Participant table of the published dataset (gender is metadata only).
PUBLISHED_SUBJECTS: tuple[SubjectLabel, ...] = tuple(
    SubjectLabel(f"S{i}", Label.ADDICTED if lab == "A" else Label.NOT_ADDICTED, g)
    for i, g, lab in [
        (1, "Male", "A"), (2, "Female", "N"), (3, "Female", "N"), (4, "Male", "N"),
        (5, "Male", "A"), (6, "Male", "A"), (7, "Male", "N"), (8, "Male", "N"),
        (9, "Female", "A"), (10, "Female", "A"), (11, "Female", "A"),
        (12, "Male", "N"), (13, "Male", "N"), (14, "Male", "A"),
    ]
)


@dataclass(frozen=True, eq=False)
class Recording:
    subject_id: str
    task: TaskId
    data: np.ndarray
    sample_rate_hz: float = SAMPLE_RATE_HZ
    channel_names: tuple[str, ...] = CHANNELS

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise ShapeMismatch("recording rank", 2, data.ndim)
        if data.shape[1] != len(self.channel_names):
            raise ShapeMismatch("channel count", len(self.channel_names), data.shape[1])
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "task", TaskId(self.task))

    @property
    def n_samples(self) -> int:
        return self.data.shape[0]

    def with_data(self, data: np.ndarray) -> "Recording":
        return Recording(self.subject_id, self.task, data, self.sample_rate_hz,
                         self.channel_names)


def subject_index(subject_id: str) -> int:
    m = re.fullmatch(r"S(\d+)", subject_id)
    if not m:
        raise LabelMismatch(f"bad subject id {subject_id!r}")
    return int(m.group(1))


@dataclass(frozen=True)
class Dataset:
    recordings: Mapping[tuple[str, TaskId], Recording]
    labels: tuple[SubjectLabel, ...]
    tasks: tuple[TaskId, ...] = ALL_TASKS

    def __post_init__(self):
        ids = [s.subject_id for s in self.labels]
        if len(set(ids)) != len(ids):
            raise LabelMismatch("duplicate subject in labels")
        for sid in ids:
            for task in self.tasks:
                if (sid, task) not in self.recordings:
                    raise MissingFile(sid, task.value)
        for sid, _ in self.recordings:
            if sid not in ids:
                raise LabelMismatch(f"recording for unlabeled subject {sid}")

    @property
    def subjects(self) -> list[str]:
        return sorted((s.subject_id for s in self.labels), key=subject_index)

    def label_of(self, subject_id: str) -> Label:
        for s in self.labels:
            if s.subject_id == subject_id:
                return s.label
        raise KeyError(subject_id)

    def get(self, subject_id: str, task: TaskId | str) -> Recording:
        return self.recordings[(subject_id, TaskId(task))]


# ---------------------------------------------------------------------------
# CSV I/O


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def read_recording_csv(path: Path, subject_id: str, task: TaskId,
                       expected_rows: int | None = None) -> Recording:
    """Parse one task CSV; a non-numeric first row is treated as a header."""
    path = Path(path)
    with open(path, newline="") as fh:
        first = next(csv.reader(fh), None)
    if first is None:
        raise ShapeMismatch(f"{path} row count", expected_rows or ">0", 0)
    has_header = not all(_is_number(c) for c in first if c.strip() != "")
    if len(first) != N_CHANNELS:
        raise ShapeMismatch(f"{path} column count", N_CHANNELS, len(first))
    if has_header:
        names = [c.strip() for c in first]
        if names != list(CHANNELS):
            warnings.warn(f"{path}: header {names} differs from the 10-20 order; "
                          "columns are taken positionally", ChannelOrderWarning)
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1 if has_header else 0,
                          dtype=np.float64, ndmin=2)
    except ValueError:
        _locate_bad_cell(path, has_header)
        raise
    if data.shape[1] != N_CHANNELS:
        raise ShapeMismatch(f"{path} column count", N_CHANNELS, data.shape[1])
    if expected_rows is not None and data.shape[0] != expected_rows:
        raise ShapeMismatch(f"{path} row count", expected_rows, data.shape[0])
    if not np.all(np.isfinite(data)):
        r, c = np.argwhere(~np.isfinite(data))[0]
        raise NonNumericCell(path, int(r) + int(has_header), int(c), str(data[r, c]))
    return Recording(subject_id, task, data)


def _locate_bad_cell(path: Path, has_header: bool) -> None:
    with open(path, newline="") as fh:
        for r, row in enumerate(csv.reader(fh)):
            if r == 0 and has_header:
                continue
            if len(row) != N_CHANNELS:
                raise ShapeMismatch(f"{path} column count at row {r}", N_CHANNELS, len(row))
            for c, cell in enumerate(row):
                if not _is_number(cell):
                    raise NonNumericCell(path, r, c, cell)


def write_recording_csv(rec: Recording, path: Path, header: bool = True) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, rec.data, delimiter=",", fmt="%.17g",
               header=",".join(rec.channel_names) if header else "", comments="")


def read_labels_csv(path: Path) -> list[SubjectLabel]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            sid = row["subject_id"].strip()
            subject_index(sid)
            gender = (row.get("gender") or "").strip() or None
            out.append(SubjectLabel(sid, Label.parse(row["label"]), gender))
    return out


def write_labels_csv(labels: Iterable[SubjectLabel], path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subject_id", "label", "gender"])
        for s in labels:
            w.writerow([s.subject_id,
                        "Addicted" if s.label is Label.ADDICTED else "Not Addicted",
                        s.gender or ""])


def load_dataset(root: Path | str, tasks: Sequence[TaskId | str] | None = None,
                 strict_rows: bool = True) -> Dataset:
    """Load ``<root>/S<k>/<TASK>.csv`` for every labeled subject.

    Labels come from ``<root>/labels.csv`` when present, otherwise from the
    published participant table. With ``strict_rows`` each file must hold
    exactly ``duration * 250`` rows.
    """
    root = Path(root)
    task_ids = tuple(TaskId(t) for t in (tasks or ALL_TASKS))
    labels_path = root / "labels.csv"
    if labels_path.exists():
        labels = read_labels_csv(labels_path)
    else:
        labels = list(PUBLISHED_SUBJECTS)
    folders = {p.name for p in root.iterdir() if p.is_dir() and re.fullmatch(r"S\d+", p.name)}
    for s in labels:
        if s.subject_id not in folders:
            raise LabelMismatch(f"labels list {s.subject_id} but {root} has no such folder")
    recordings = {}
    for s in labels:
        for task in task_ids:
            path = root / s.subject_id / f"{task.value}.csv"
            if not path.exists():
                raise MissingFile(s.subject_id, task.value, path)
            expected = task.expected_samples() if strict_rows else None
            recordings[(s.subject_id, task)] = read_recording_csv(path, s.subject_id, task, expected)
    labels.sort(key=lambda s: subject_index(s.subject_id))
    ds = Dataset(recordings, tuple(labels), task_ids)
    log.info("loaded %d recordings for %d subjects", len(recordings), len(labels))
    return ds


def write_dataset(ds: Dataset, root: Path | str) -> None:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    for (sid, task), rec in ds.recordings.items():
        write_recording_csv(rec, root / sid / f"{task.value}.csv")
    write_labels_csv(ds.labels, root / "labels.csv")


def subject_table(ds: Dataset) -> list[tuple[str, str | None, Label]]:
    rows = [(s.subject_id, s.gender, s.label) for s in ds.labels]
    return sorted(rows, key=lambda r: subject_index(r[0]))


# ---------------------------------------------------------------------------
# Synthetic recordings


@dataclass(frozen=True)
class SynthComponent:
    """A sinusoid present on every channel; ``amp``/``phase`` broadcast to 19."""

    freq_hz: float
    amp: float | Sequence[float] = 1.0
    phase: float | Sequence[float] = 0.0


@dataclass(frozen=True)
class SynthSpec:
    components: Sequence[SynthComponent] = field(default_factory=tuple)
    noise_sd: float = 0.0
    duration_s: float = 60.0
    seed: int = 0
    sample_rate_hz: float = SAMPLE_RATE_HZ
    subject_id: str = "S1"
    task: TaskId = TaskId.EC


def synth_recording(spec: SynthSpec) -> Recording:
    fs = spec.sample_rate_hz
    for comp in spec.components:
        if not 0 < comp.freq_hz < fs / 2:
            raise FrequencyOutOfRange(
                f"{comp.freq_hz} Hz outside (0, {fs / 2}) for rate {fs} Hz")
    n = int(round(spec.duration_s * fs))
    t = np.arange(n) / fs
    data = np.zeros((n, N_CHANNELS))
    for comp in spec.components:
        amp = np.broadcast_to(np.asarray(comp.amp, dtype=float), (N_CHANNELS,))
        phase = np.broadcast_to(np.asarray(comp.phase, dtype=float), (N_CHANNELS,))
        data += amp * np.sin(2 * np.pi * comp.freq_hz * t[:, None] + phase)
    if spec.noise_sd > 0:
        rng = np.random.default_rng(spec.seed)
        data += rng.normal(0.0, spec.noise_sd, size=data.shape)
    return Recording(spec.subject_id, spec.task, data, fs)


PLANTED_BETA_CHANNELS = ("Fz", "Cz")
PLANTED_COUPLING = ("Cz", "T7")


def planted_dataset(n_subjects: int = 14, tasks: Sequence[TaskId | str] = (TaskId.ET,),
                    seed: int = 0, duration_s: float | None = None,
                    beta_gain: float = 3.0) -> Dataset:
    """Synthetic cohort where the Addicted class carries a known signature.

    Addicted subjects get elevated 20 Hz (Beta) power on Fz and Cz and a
    phase-locked 10 Hz coupling from Cz into T7. Every subject shares a
    background of random-phase alpha plus white noise. Subjects alternate
    class so any prefix is balanced.
    """
    rng = np.random.default_rng(seed)
    fs = SAMPLE_RATE_HZ
    labels = []
    recordings = {}
    task_ids = tuple(TaskId(t) for t in tasks)
    idx = {c: i for i, c in enumerate(CHANNELS)}
    for k in range(1, n_subjects + 1):
        sid = f"S{k}"
        label = Label.ADDICTED if k % 2 == 1 else Label.NOT_ADDICTED
        labels.append(SubjectLabel(sid, label))
        for task in task_ids:
            dur = duration_s if duration_s is not None else task.duration_s
            n = int(round(dur * fs))
            t = np.arange(n) / fs
            data = rng.normal(0.0, 1.0, size=(n, N_CHANNELS))
            alpha_amp = rng.uniform(1.0, 2.0, size=N_CHANNELS)
            alpha_phase = rng.uniform(0, 2 * np.pi, size=N_CHANNELS)
            # slow random phase drift keeps unrelated channels unsynchronised
            drift = np.cumsum(rng.normal(0, 0.05, size=(n, N_CHANNELS)), axis=0)
            data += alpha_amp * np.sin(2 * np.pi * 10.0 * t[:, None] + alpha_phase + drift)
            beta_amp = np.full(N_CHANNELS, 0.3)
            if label is Label.ADDICTED:
                for ch in PLANTED_BETA_CHANNELS:
                    beta_amp[idx[ch]] = beta_gain
                src, dst = idx[PLANTED_COUPLING[0]], idx[PLANTED_COUPLING[1]]
                lagged = np.sin(2 * np.pi * 10.0 * t + alpha_phase[src] + drift[:, src] - np.pi / 3)
                data[:, dst] += 1.5 * alpha_amp[src] * lagged
            data += beta_amp * np.sin(2 * np.pi * 20.0 * t[:, None]
                                      + rng.uniform(0, 2 * np.pi, size=N_CHANNELS))
            recordings[(sid, task)] = Recording(sid, task, data, fs)
    return Dataset(recordings, tuple(labels), task_ids)
