"""Run configuration: flat dotted keys, typed defaults, YAML files.

Defaults for the optimiser and model are the best-trial hyperparameters
of the reference study. Nested YAML mappings are flattened, so
``optim: {lr: 0.001}`` and ``optim.lr: 0.001`` are equivalent.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import yaml

from .errors import ConfigTypeError, UnknownKey

_NUM = (int, float)

# key -> (default, type, allowed values or None, nullable)
SCHEMA: dict[str, tuple[Any, Any, tuple | None, bool]] = {
    "data.root": (None, str, None, True),
    "data.tasks": (["ET"], "tasks", None, False),
    "data.strict_rows": (True, bool, None, False),
    "preprocess.bandpass.low_hz": (0.5, float, None, False),
    "preprocess.bandpass.high_hz": (45.0, float, None, False),
    "preprocess.bandpass.order": (4, int, None, False),
    "preprocess.notch.center_hz": (50.0, float, None, False),
    "preprocess.notch.q": (30.0, float, None, False),
    "preprocess.window.count": (30, int, None, False),
    "preprocess.window.length_s": (2.0, float, None, False),
    "features.welch.segment_s": (1.0, float, None, False),
    "features.welch.overlap": (0.5, float, None, False),
    "features.scale": (True, bool, None, False),
    "connectivity.metric": ("pli", str, ("pli", "wpli"), False),
    "connectivity.threshold_percentile": (50.0, float, None, False),
    "connectivity.absolute_threshold": (None, float, None, True),
    "model.gat_heads": (2, int, None, False),
    "model.gat_hidden": (64, int, None, False),
    "model.gru_layers": (2, int, None, False),
    "model.gru_hidden": (128, int, None, False),
    "model.mlp_hidden": (64, int, None, False),
    "model.dropout_backbone": (0.182, float, None, False),
    "model.dropout_head": (0.5, float, None, False),
    "model.variant": ("full", str, ("full", "spatial_only", "fully_connected"), False),
    "optim.lr": (0.000668, float, None, False),
    "optim.weight_decay": (3.53e-5, float, None, False),
    "optim.betas": ([0.9, 0.999], "pair", None, False),
    "optim.eps": (1e-8, float, None, False),
    "optim.epochs": (100, int, None, False),
    "optim.patience": (15, int, None, False),
    "optim.batch_size": (4, int, None, False),
    "eval.seeds": ([42, 123, 456], "ints", None, False),
    "eval.stats_test": ("mannwhitney", str, ("mannwhitney", "welch"), False),
    "baseline.epochs": (200, int, None, False),
    "baseline.lr": (0.01, float, None, False),
    "baseline.l2": (0.01, float, None, False),
    "explain.ig_steps": (128, int, None, False),
    "explain.top_k": (15, int, None, False),
    "explain.checkpoint": (None, str, None, True),
    "synth.n_subjects": (14, int, None, False),
    "synth.seed": (0, int, None, False),
    "synth.duration_s": (None, float, None, True),
    "synth.beta_gain": (3.0, float, None, False),
    "output.dir": ("runs/default", str, None, False),
}

TASK_CODES = ("EC", "EO", "H", "C", "S", "F", "M", "ET", "R")


def _coerce(key: str, value: Any) -> Any:
    default, typ, choices, nullable = SCHEMA[key]
    if value is None:
        if nullable:
            return None
        raise ConfigTypeError(f"{key}: null is not allowed")

    def bad(expected: str):
        return ConfigTypeError(f"{key}: expected {expected}, got {type(value).__name__} {value!r}")

    if typ is bool:
        if not isinstance(value, bool):
            raise bad("bool")
        out = value
    elif typ is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise bad("int")
        out = value
    elif typ is float:
        if isinstance(value, bool) or not isinstance(value, _NUM):
            raise bad("number")
        out = float(value)
    elif typ is str:
        if not isinstance(value, str):
            raise bad("string")
        out = value
    elif typ == "tasks":
        items = [value] if isinstance(value, str) else value
        if not isinstance(items, list) or not items or any(t not in TASK_CODES for t in items):
            raise bad(f"task code or list of task codes from {TASK_CODES}")
        out = list(items)
    elif typ == "pair":
        if (not isinstance(value, list) or len(value) != 2
                or any(isinstance(v, bool) or not isinstance(v, _NUM) for v in value)):
            raise bad("list of two numbers")
        out = [float(v) for v in value]
    elif typ == "ints":
        if (not isinstance(value, list) or not value
                or any(isinstance(v, bool) or not isinstance(v, int) for v in value)):
            raise bad("non-empty list of ints")
        out = list(value)
    else:  # pragma: no cover
        raise AssertionError(typ)
    if choices is not None and out not in choices:
        raise ConfigTypeError(f"{key}: {out!r} not one of {choices}")
    return out


def flatten(mapping: Mapping[str, Any], prefix: str = "") -> dict[str, Any]:
    out: dict[str, Any] = {}
    for k, v in mapping.items():
        key = f"{prefix}{k}"
        if isinstance(v, Mapping) and key not in SCHEMA:
            out.update(flatten(v, key + "."))
        else:
            out[key] = v
    return out


@dataclass(frozen=True)
class RunConfig:
    values: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        merged = {k: spec[0] for k, spec in SCHEMA.items()}
        for k, v in self.values.items():
            if k not in SCHEMA:
                raise UnknownKey(f"unknown config key {k!r}")
            merged[k] = _coerce(k, v)
        object.__setattr__(self, "values", merged)

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    def override(self, **changes) -> "RunConfig":
        """New config with ``changes`` (keys given with ``__`` for dots)."""
        vals = dict(self.values)
        vals.update({k.replace("__", "."): v for k, v in changes.items()})
        return RunConfig(vals)

    def updated(self, changes: Mapping[str, Any]) -> "RunConfig":
        vals = dict(self.values)
        vals.update(changes)
        return RunConfig(vals)

    def snapshot(self) -> dict[str, Any]:
        return dict(sorted(self.values.items()))

    def digest(self) -> str:
        blob = json.dumps(self.snapshot(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def diff(self, other: "RunConfig") -> dict[str, tuple[Any, Any]]:
        return {k: (self.values[k], other.values[k]) for k in SCHEMA
                if self.values[k] != other.values[k]}

    # -- typed views for each module --------------------------------------

    def preprocess(self):
        from .preprocess import FilterSpec, PreprocessConfig
        return PreprocessConfig(
            bandpass=FilterSpec(order=self["preprocess.bandpass.order"],
                                low_hz=self["preprocess.bandpass.low_hz"],
                                high_hz=self["preprocess.bandpass.high_hz"]),
            notch_center_hz=self["preprocess.notch.center_hz"],
            notch_q=self["preprocess.notch.q"],
            window_count=self["preprocess.window.count"],
            window_length_s=self["preprocess.window.length_s"],
        )

    def welch(self, rate: float = 250.0):
        from .features import WelchSpec
        return WelchSpec.from_seconds(self["features.welch.segment_s"],
                                      self["features.welch.overlap"], rate)

    def model(self, in_dim: int = 9):
        from .nn.model import ModelConfig
        return ModelConfig(
            in_dim=in_dim,
            gat_heads=self["model.gat_heads"],
            gat_hidden=self["model.gat_hidden"],
            gru_layers=self["model.gru_layers"],
            gru_hidden=self["model.gru_hidden"],
            mlp_hidden=self["model.mlp_hidden"],
            dropout_backbone=self["model.dropout_backbone"],
            dropout_head=self["model.dropout_head"],
            variant=self["model.variant"],
        )


def parse_config(path: str | Path | None = None,
                 overrides: Mapping[str, Any] | None = None) -> RunConfig:
    """Read a YAML config (may be empty) and apply ``overrides`` on top."""
    raw: dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"config file not found: {path}")
        loaded = yaml.safe_load(path.read_text())
        if loaded is not None:
            if not isinstance(loaded, Mapping):
                raise ConfigTypeError(f"{path}: top level must be a mapping")
            raw = flatten(loaded)
    if overrides:
        raw.update(flatten(overrides))
    return RunConfig(raw)


def parse_override(text: str) -> tuple[str, Any]:
    """``key=value`` with the value parsed as YAML (so ``5`` is an int)."""
    if "=" not in text:
        raise ConfigTypeError(f"override {text!r} must look like key=value")
    key, val = text.split("=", 1)
    return key.strip(), yaml.safe_load(val)
