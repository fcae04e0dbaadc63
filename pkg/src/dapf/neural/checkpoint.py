"""Versioned JSON checkpoints; float64 weights round-trip exactly."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..dataset import NormalizationSpec
from ..errors import DataError
from .lstm import LstmConfig, LstmLayer, LstmModel

CHECKPOINT_VERSION = 1


def _pack(a: np.ndarray) -> dict:
    a = np.asarray(a)
    return {"shape": list(a.shape), "data": [float(v) for v in a.ravel(order="C")]}


def _unpack(d: dict, dtype) -> np.ndarray:
    return np.array(d["data"], dtype=np.float64).reshape(d["shape"]).astype(dtype)


def model_to_dict(model: LstmModel) -> dict:
    return {
        "version": CHECKPOINT_VERSION,
        "config": model.config.to_dict(),
        "norm": None if model.norm is None else model.norm.to_dict(),
        "layers": [{"Wx": _pack(l.Wx), "Wh": _pack(l.Wh), "b": _pack(l.b)} for l in model.layers],
        "head": {"W": _pack(model.head_W), "b": _pack(model.head_b)},
    }


def model_from_dict(d: dict) -> LstmModel:
    if d.get("version") != CHECKPOINT_VERSION:
        raise DataError(f"unsupported checkpoint version {d.get('version')!r}")
    config = LstmConfig.from_dict(d["config"])
    dtype = np.dtype(config.dtype)
    layers = [LstmLayer(_unpack(l["Wx"], dtype), _unpack(l["Wh"], dtype), _unpack(l["b"], dtype))
              for l in d["layers"]]
    norm = None if d["norm"] is None else NormalizationSpec.from_dict(d["norm"])
    return LstmModel(layers, _unpack(d["head"]["W"], dtype), _unpack(d["head"]["b"], dtype),
                     config, norm)


def save_model(model: LstmModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model)))


def load_model(path: str | Path) -> LstmModel:
    return model_from_dict(json.loads(Path(path).read_text()))
