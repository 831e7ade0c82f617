"""JSON checkpoints: a config header plus named row-major float64 arrays."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .model import DstGnn, ModelConfig

FORMAT = "dstgnn-checkpoint/1"


def save_checkpoint(model: DstGnn, path: Path | str, extra: dict | None = None) -> None:
    doc = {
        "format": FORMAT,
        "config": model.cfg.to_dict(),
        "extra": extra or {},
        "parameters": {
            name: {"shape": list(t.data.shape), "data": t.data.ravel(order="C").tolist()}
            for name, t in model.params.items()
        },
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(doc))
    tmp.replace(path)


def load_checkpoint(path: Path | str) -> tuple[DstGnn, dict]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    doc = json.loads(path.read_text())
    if doc.get("format") != FORMAT:
        raise ValueError(f"{path}: not a {FORMAT} file")
    model = DstGnn(ModelConfig(**doc["config"]))
    arrays = {k: np.asarray(v["data"], dtype=np.float64).reshape(v["shape"])
              for k, v in doc["parameters"].items()}
    if set(arrays) != set(model.params):
        raise ValueError(f"{path}: parameter names do not match the config")
    model.load_arrays(arrays)
    return model, doc.get("extra", {})
