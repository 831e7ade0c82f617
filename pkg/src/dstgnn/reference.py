"""Published values of the original study, kept for side-by-side reporting.

Nothing in the package asserts against these; they depend on the real
recordings and on stochastic training.
"""
from __future__ import annotations

# subject-level LOSO metrics of the graph model per seed (percent)
MODEL_BY_SEED = {
    42: {"accuracy": 57.14, "precision": 54.55, "recall": 85.71, "f1": 66.67, "roc_auc": 59.18},
    123: {"accuracy": 78.57, "precision": 77.78, "recall": 100.00, "f1": 87.50, "roc_auc": 89.80},
    456: {"accuracy": 57.14, "precision": 50.00, "recall": 71.43, "f1": 58.82, "roc_auc": 44.90},
}
MODEL_MEAN_SD = {
    "accuracy": (64.29, 15.43), "precision": (60.77, 12.17), "recall": (85.71, 11.66),
    "f1": (71.00, 12.10), "roc_auc": (64.63, 18.73),
}

BASELINES = {
    "logreg": {"accuracy": 62.14, "precision": 50.00, "recall": 29.29, "f1": 34.73, "roc_auc": 50.00},
    "mlp": {"accuracy": 51.90, "precision": 50.00, "recall": 26.19, "f1": 32.46, "roc_auc": 50.00},
}

ABLATIONS = {
    "full": {"accuracy": 64.29, "f1": 71.00},
    "spatial_only": {"accuracy": 42.86, "f1": 50.00},
    "fully_connected": {"accuracy": 14.29, "f1": 14.29},
}

# (task, band) -> two-sided p-value for the group difference in band power
BAND_POWER_P = {
    ("M", "Alpha"): 0.0002,
    ("M", "Theta"): 0.0014,
    ("F", "Alpha"): 0.0029,
    ("F", "Gamma"): 0.0192,
    ("C", "Alpha"): 0.0044,
}

PLI_WPLI = {"mean_pearson_r": 0.623, "mean_ratio": 2.5}

FEATURE_SHARES = {"Beta": 0.589, "Hjorth": 0.312}

TOP_EDGES = (
    "Fz-Fp2", "P8-Fz", "C4-Fz", "Cz-Fz", "Fz-Fp1", "Fz-F7", "C4-T7", "Fz-T7", "C4-Pz",
    "C4-O1", "P8-F4", "Cz-Fp2", "Fz-C3", "C4-P3", "P8-Cz",
)

# flag (not fail) when no seed reaches this subject-level recall
MIN_RECALL_FLAG = 0.70
