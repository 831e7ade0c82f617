"""Group-level analyses: wPLI group differences and band-power tests per condition."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats as sps

from ..dataset_io import CHANNELS
from ..errors import ClassMissing
from ..features import BANDS
from ..reference import BAND_POWER_P

TESTS = ("mannwhitney", "welch")


def two_sample_p(a: Sequence[float], b: Sequence[float], test: str = "mannwhitney") -> float:
    """Two-sided p-value; identical samples give 1."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    if test not in TESTS:
        raise ValueError(f"unknown test {test!r}; expected one of {TESTS}")
    if np.array_equal(np.sort(a), np.sort(b)):
        return 1.0
    if test == "mannwhitney":
        return float(sps.mannwhitneyu(a, b, alternative="two-sided").pvalue)
    if np.std(a) == 0 and np.std(b) == 0:
        return 0.0
    return float(sps.ttest_ind(a, b, equal_var=False).pvalue)


@dataclass
class GroupStats:
    test: str
    wpli_mean: dict[str, dict[str, np.ndarray]] = field(default_factory=dict)  # task -> group -> 19×19
    wpli_diff: dict[str, np.ndarray] = field(default_factory=dict)             # Addicted − NotAddicted
    band_power: list[dict] = field(default_factory=list)                       # one row per task × band

    def to_dict(self) -> dict:
        return {
            "test": self.test,
            "wpli_diff": {t: m.tolist() for t, m in self.wpli_diff.items()},
            "band_power": self.band_power,
        }

    def write(self, out_dir: Path) -> list[Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        written = []
        for task, m in self.wpli_diff.items():
            path = out_dir / f"wpli_diff_{task}.csv"
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow([""] + list(CHANNELS))
                for name, row in zip(CHANNELS, m):
                    w.writerow([name] + [repr(float(v)) for v in row])
            written.append(path)
        path = out_dir / "band_power_tests.csv"
        cols = ["task", "band", "mean_addicted", "mean_not_addicted", "p_value", "reference_p"]
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, cols, lineterminator="\n")
            w.writeheader()
            for row in self.band_power:
                w.writerow({k: ("" if row[k] is None else row[k]) for k in cols})
        written.append(path)
        return written


def group_stats(prepared, test: str = "mannwhitney") -> GroupStats:
    """Per condition: group-mean wPLI and its difference; band-power tests.

    ``prepared`` holds per-recording features and wPLI matrices (see
    :func:`dstgnn.pipeline.prepare_dataset`). A subject's band power is
    the mean over windows and channels of that band's integrated PSD.
    """
    labels = {p.subject_id: p.label for p in prepared}
    if set(labels.values()) != {0, 1}:
        raise ClassMissing("group statistics need both classes")
    out = GroupStats(test)
    tasks = sorted({p.task for p in prepared})
    for task in tasks:
        recs = [p for p in prepared if p.task == task]
        by_group = {g: [p for p in recs if p.label == g] for g in (1, 0)}
        if not by_group[0] or not by_group[1]:
            continue
        means = {name: np.mean([p.wpli.mean(axis=0) for p in by_group[g]], axis=0)
                 for name, g in (("Addicted", 1), ("NotAddicted", 0))}
        out.wpli_mean[task] = means
        out.wpli_diff[task] = means["Addicted"] - means["NotAddicted"]
        for b, band in enumerate(BANDS):
            add = [float(p.features[..., b].mean()) for p in by_group[1]]
            ctl = [float(p.features[..., b].mean()) for p in by_group[0]]
            out.band_power.append({
                "task": task, "band": band.name,
                "mean_addicted": float(np.mean(add)), "mean_not_addicted": float(np.mean(ctl)),
                "p_value": two_sample_p(add, ctl, test),
                "reference_p": BAND_POWER_P.get((task, band.name)),
            })
    return out
