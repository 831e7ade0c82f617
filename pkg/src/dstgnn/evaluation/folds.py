"""Leave-one-subject-out folds with a seeded early-stopping validation pair."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from ..errors import ClassMissing


@dataclass(frozen=True)
class FoldSpec:
    test_subject: str
    train_subjects: tuple[str, ...]
    val_subjects: tuple[str, ...]

    @property
    def fit_subjects(self) -> tuple[str, ...]:
        """Subjects whose windows drive gradients and scaler fitting."""
        return tuple(s for s in self.train_subjects if s not in self.val_subjects)


def loso_folds(subjects: Sequence[str], labels: Mapping[str, int], seed: int) -> list[FoldSpec]:
    """One fold per subject; the validation pair holds one subject per class."""
    subjects = list(subjects)
    if len(subjects) < 4:
        raise ClassMissing(f"LOSO needs at least 4 subjects, got {len(subjects)}")
    classes = {labels[s] for s in subjects}
    if classes != {0, 1}:
        raise ClassMissing(f"both classes are required, found {sorted(classes)}")
    rng = np.random.default_rng(seed)
    folds = []
    for test in subjects:
        train = tuple(s for s in subjects if s != test)
        val = []
        for cls in (1, 0):
            pool = [s for s in train if labels[s] == cls]
            if not pool:
                raise ClassMissing(f"fold {test}: no training subject of class {cls}")
            val.append(pool[int(rng.integers(len(pool)))])
        folds.append(FoldSpec(test, train, tuple(val)))
    return folds
