"""Plain-text ``key = value`` pipeline configuration.

Lines starting with ``#`` are comments. Unknown keys are rejected so typos
do not silently fall back to defaults.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
from dataclasses import dataclass, fields
from pathlib import Path

from ..errors import SchemaError
from ..neural import LstmConfig


@dataclass(frozen=True)
class PipelineConfig:
    # paths (relative paths resolve against the config file's directory)
    frame: str = "frame.csv"
    output_dir: str = "out"
    prices: str = ""
    power: str = ""
    nuclear: str = ""
    fuels: str = ""
    forecast: str = ""  # default: <output_dir>/forecast.csv
    # ingest
    pl_solar_cutover: str = "2020-04-10"
    pl_solar_neighbors: str = "solar_de_lu,solar_cz"
    # folds
    train_hours: int = 17000
    val_fraction: float = 0.1
    min_test_hours: int = 120
    max_folds: int = 0  # 0 = all folds
    # model
    seq_len: int = 96
    depth: int = 2
    width: int = 32
    dropout: float = 0.2
    learning_rate: float = 1e-3
    patience: int = 200
    max_epochs: int = 2000
    batch_size: int = 64
    sigma_floor: float = 0.01
    dtype: str = "float64"
    # run
    seed: int = 0
    jobs: int = 1
    # superstatistics
    tau: int = 96
    n_slow: int = 5
    include_residual: bool = True
    # synthetic data
    synth_kind: str = "forecastable"
    synth_hours: int = 20000
    synth_blocks: int = 1000
    synth_k: float = 1.5
    synth_theta: float = 1.0
    synth_sources_dir: str = ""

    base_dir: str = dataclasses.field(default=".", compare=False)

    @classmethod
    def from_file(cls, path: str | Path, **overrides) -> "PipelineConfig":
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"no such config file: {path}")
        parser = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
        parser.optionxform = str
        parser.read_string("[config]\n" + path.read_text())
        return cls.from_mapping(dict(parser["config"]), base_dir=str(path.parent), **overrides)

    @classmethod
    def from_mapping(cls, values: dict, base_dir: str = ".", **overrides) -> "PipelineConfig":
        types = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            if key not in types or key == "base_dir":
                raise SchemaError(f"unknown config key '{key}'")
            kwargs[key] = _coerce(key, raw, types[key])
        kwargs.update({k: v for k, v in overrides.items() if v is not None})
        return cls(base_dir=base_dir, **kwargs)

    def path(self, key: str) -> Path | None:
        value = getattr(self, key)
        if not value:
            return None
        p = Path(value)
        return p if p.is_absolute() else Path(self.base_dir) / p

    @property
    def out(self) -> Path:
        return self.path("output_dir")

    def lstm(self) -> LstmConfig:
        return LstmConfig(depth=self.depth, width=self.width, dropout=self.dropout,
                          learning_rate=self.learning_rate, patience=self.patience,
                          max_epochs=self.max_epochs, batch_size=self.batch_size,
                          sigma_floor=self.sigma_floor, seq_len=self.seq_len, dtype=self.dtype)

    def canonical(self) -> str:
        return "\n".join(f"{f.name} = {getattr(self, f.name)}" for f in fields(self)
                         if f.name != "base_dir")

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]


def _coerce(key: str, raw: str, typ):
    raw = raw.strip()
    try:
        if typ in (bool, "bool"):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if typ in (int, "int"):
            return int(raw)
        if typ in (float, "float"):
            return float(raw)
    except ValueError as exc:
        raise SchemaError(f"config key '{key}': cannot parse {raw!r}") from exc
    return raw
