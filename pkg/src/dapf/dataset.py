"""Hourly data ingestion, feature engineering, normalization, windowing and
rolling weekly fold planning.

All frames are indexed by UTC hours. Missing hours are carried as rows with
``valid == False``; nothing is ever dropped silently.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
import pandas as pd

from .errors import DataError, DegenerateInputError, InsufficientDataError, SchemaError

logger = logging.getLogger(__name__)

HOUR = pd.Timedelta(hours=1)

SEQ_LEN = 96
TRAIN_HOURS = 17000
WEEK_HOURS = 168
MIN_TEST_HOURS = 120
VAL_FRACTION = 0.1

TIMESTAMP_COLUMN = "timestamp"
TARGET_COLUMN = "price_da_eur_mwh"

NEIGHBOR_ZONES = ("at", "be", "ch", "cz", "dk1", "dk2", "fr", "nl", "no2", "pl")

# Feature set of the model, with units encoded in the column names.
FEATURE_COLUMNS: tuple[str, ...] = (
    "load_de_lu_mw",
    "solar_de_lu_mw",
    "wind_de_lu_mw",
    *(f"res_load_{z}_mw" for z in NEIGHBOR_ZONES),
    "nuc_avail_de_lu_mw",
    "nuc_avail_fr_mw",
    "gas_eur_mwh",
    "oil_usd_bbl",
    "coal_usd_t",
    "co2_eur_t",
)

FUEL_COLUMNS = ("gas_eur_mwh", "oil_usd_bbl", "coal_usd_t", "co2_eur_t")


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TimeSeriesFrame:
    """Hourly feature matrix plus day-ahead price target.

    ``features`` and ``target`` may hold NaN only where ``valid`` is False.
    """

    timestamps: pd.DatetimeIndex
    features: np.ndarray
    target: np.ndarray
    valid: np.ndarray
    columns: tuple[str, ...] = FEATURE_COLUMNS

    def __post_init__(self):
        ts = pd.DatetimeIndex(self.timestamps)
        if ts.tz is None:
            ts = ts.tz_localize("UTC")
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "features", np.asarray(self.features, dtype=float))
        object.__setattr__(self, "target", np.asarray(self.target, dtype=float))
        object.__setattr__(self, "valid", np.asarray(self.valid, dtype=bool))

        n = len(ts)
        if self.features.shape != (n, len(self.columns)):
            raise DataError(
                f"features shape {self.features.shape} does not match "
                f"({n}, {len(self.columns)})"
            )
        if self.target.shape != (n,) or self.valid.shape != (n,):
            raise DataError("target and valid must have one entry per timestamp")
        _check_hourly(ts)
        ok = np.isfinite(self.features).all(axis=1) & np.isfinite(self.target)
        if np.any(self.valid & ~ok):
            raise DataError("valid rows must not contain undefined values")

    def __len__(self) -> int:
        return len(self.timestamps)

    @property
    def n_valid(self) -> int:
        return int(self.valid.sum())

    def column(self, name: str) -> np.ndarray:
        if name == TARGET_COLUMN:
            return self.target
        return self.features[:, self.columns.index(name)]

    def to_dataframe(self) -> pd.DataFrame:
        df = pd.DataFrame(self.features, columns=list(self.columns))
        df.insert(0, TIMESTAMP_COLUMN, self.timestamps.strftime("%Y-%m-%dT%H:%M:%SZ"))
        df[TARGET_COLUMN] = self.target
        return df

    def equals(self, other: "TimeSeriesFrame", atol: float = 0.0) -> bool:
        if self.columns != other.columns or len(self) != len(other):
            return False
        if not self.timestamps.equals(other.timestamps):
            return False
        if not np.array_equal(self.valid, other.valid):
            return False
        v = self.valid
        return bool(
            np.allclose(self.features[v], other.features[v], rtol=0, atol=atol)
            and np.allclose(self.target[v], other.target[v], rtol=0, atol=atol)
        )


@dataclass(frozen=True)
class SampleWindow:
    inputs: np.ndarray  # [SEQ_LEN x F], normalized
    target: float  # normalized price
    target_time: pd.Timestamp


@dataclass(frozen=True)
class NormalizationSpec:
    """Per-column scale factors; every factor is positive and finite."""

    columns: tuple[str, ...]
    feature_scale: np.ndarray
    target_scale: float

    def __post_init__(self):
        scale = np.asarray(self.feature_scale, dtype=float)
        object.__setattr__(self, "feature_scale", scale)
        object.__setattr__(self, "columns", tuple(self.columns))
        if scale.shape != (len(self.columns),):
            raise DataError("one scale factor per feature column required")
        allv = np.append(scale, self.target_scale)
        if not (np.all(np.isfinite(allv)) and np.all(allv > 0)):
            raise DataError("scale factors must be strictly positive and finite")

    def normalize_features(self, x: np.ndarray) -> np.ndarray:
        return x / self.feature_scale

    def denormalize_features(self, x: np.ndarray) -> np.ndarray:
        return x * self.feature_scale

    def normalize_target(self, y):
        return np.asarray(y) / self.target_scale

    def denormalize_target(self, y):
        return np.asarray(y) * self.target_scale

    def to_dict(self) -> dict:
        return {
            "columns": list(self.columns),
            "feature_scale": [float(v) for v in self.feature_scale],
            "target_scale": float(self.target_scale),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NormalizationSpec":
        return cls(tuple(d["columns"]), np.array(d["feature_scale"], dtype=float),
                   float(d["target_scale"]))


@dataclass(frozen=True)
class Fold:
    train: range
    val: range
    test: range


@dataclass(frozen=True)
class FoldPlan:
    folds: list[Fold]
    # (test-week range, number of valid hours) for weeks dropped by the 120 h rule
    skipped_weeks: list[tuple[range, int]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.folds)

    def __iter__(self) -> Iterator[Fold]:
        return iter(self.folds)

    def __getitem__(self, i: int) -> Fold:
        return self.folds[i]


class WindowSet(Sequence):
    """Lazily materialized collection of :class:`SampleWindow`.

    Windows share one normalized feature matrix; ``inputs(idx)`` gathers a
    batch of shape ``[len(idx), seq_len, F]`` on demand.
    """

    def __init__(self, features_norm: np.ndarray, target_index: np.ndarray,
                 targets: np.ndarray, times: pd.DatetimeIndex, seq_len: int = SEQ_LEN):
        self.features_norm = features_norm
        self.target_index = np.asarray(target_index, dtype=np.int64)
        self.targets = np.asarray(targets, dtype=float)
        self.times = times
        self.seq_len = seq_len
        self._offsets = np.arange(-seq_len + 1, 1)

    def __len__(self) -> int:
        return len(self.target_index)

    def __getitem__(self, i):
        if isinstance(i, slice):
            idx = np.arange(len(self))[i]
            return WindowSet(self.features_norm, self.target_index[idx], self.targets[idx],
                             self.times[idx], self.seq_len)
        t = self.target_index[i]
        return SampleWindow(self.features_norm[t - self.seq_len + 1: t + 1],
                            float(self.targets[i]), self.times[i])

    def inputs(self, idx=None) -> np.ndarray:
        ti = self.target_index if idx is None else self.target_index[idx]
        return self.features_norm[ti[:, None] + self._offsets]

    @property
    def n_features(self) -> int:
        return self.features_norm.shape[1]


# ---------------------------------------------------------------------------
# Ingestion
# ---------------------------------------------------------------------------


def _check_hourly(ts: pd.DatetimeIndex) -> None:
    if len(ts) < 2:
        return
    step = np.diff(ts.asi8)
    if np.any(step <= 0):
        raise DataError("non-monotone timestamps")
    if np.any(step != HOUR.value):
        bad = int(np.flatnonzero(step != HOUR.value)[0])
        raise DataError(f"gap in timestamps after {ts[bad]} (missing hours must be rows)")


def parse_timestamps(values) -> pd.DatetimeIndex:
    try:
        return pd.DatetimeIndex(pd.to_datetime(values, utc=True, format="ISO8601"))
    except (ValueError, TypeError) as exc:
        raise DataError(f"unparsable timestamp: {exc}") from exc


def read_table(path: str | Path) -> pd.DataFrame:
    """Read a CSV, skipping ``#`` header comments; all cells kept as strings."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    return pd.read_csv(path, comment="#", dtype=str, keep_default_na=False)


def to_float(df: pd.DataFrame) -> pd.DataFrame:
    """String cells to float64, exactly (``pd.to_numeric`` may be off by an
    ulp); empty or unparsable cells become NaN."""
    out = {}
    for c in df.columns:
        col = df[c]
        try:
            out[c] = np.asarray(col.replace("", "nan").to_numpy(dtype=str), dtype=float)
        except ValueError:
            parsed = pd.to_numeric(col, errors="coerce").to_numpy(dtype=float)
            ok = np.isfinite(parsed)
            parsed[ok] = np.asarray(col.to_numpy(dtype=str)[ok], dtype=float)
            out[c] = parsed
    return pd.DataFrame(out, index=df.index)


def load_csv(path: str | Path, schema: Sequence[str] | None = FEATURE_COLUMNS,
             fill_gaps: bool = False) -> TimeSeriesFrame:
    """Load a canonical hourly CSV into a :class:`TimeSeriesFrame`.

    Parameters
    ----------
    path
        CSV with a ``timestamp`` column, the feature columns and
        ``price_da_eur_mwh``. Empty cells are missing values.
    schema
        Expected feature columns, in order. ``None`` accepts whatever feature
        columns the file has.
    fill_gaps
        Insert invalid rows for missing hours instead of raising.

    Rows with any missing or unparsable cell are kept with ``valid=False``.
    """
    df = read_table(path)
    if TIMESTAMP_COLUMN not in df.columns or TARGET_COLUMN not in df.columns:
        raise SchemaError(f"{path}: header must contain '{TIMESTAMP_COLUMN}' and '{TARGET_COLUMN}'")
    feature_cols = [c for c in df.columns if c not in (TIMESTAMP_COLUMN, TARGET_COLUMN)]
    if schema is not None:
        missing = [c for c in schema if c not in feature_cols]
        extra = [c for c in feature_cols if c not in schema]
        if missing or extra:
            raise SchemaError(f"{path}: header does not match schema "
                              f"(missing={missing}, unexpected={extra})")
        feature_cols = list(schema)

    ts = parse_timestamps(df[TIMESTAMP_COLUMN])
    values = to_float(df[feature_cols + [TARGET_COLUMN]]).to_numpy(dtype=float)
    valid = np.isfinite(values).all(axis=1)

    if len(ts) > 1 and np.any(np.diff(ts.asi8) <= 0):
        raise DataError("non-monotone timestamps")
    if fill_gaps and len(ts) > 1:
        full = pd.date_range(ts[0], ts[-1], freq="h")
        if len(full) != len(ts):
            pos = full.get_indexer(ts)
            if np.any(pos < 0):
                raise DataError("timestamps not aligned to whole hours")
            filled = np.full((len(full), values.shape[1]), np.nan)
            filled[pos] = values
            fvalid = np.zeros(len(full), dtype=bool)
            fvalid[pos] = valid
            logger.info("inserted %d missing hours as invalid rows", len(full) - len(ts))
            ts, values, valid = full, filled, fvalid

    return TimeSeriesFrame(ts, values[:, :-1], values[:, -1], valid, tuple(feature_cols))


def save_csv(frame: TimeSeriesFrame, path: str | Path, header: str | None = None) -> None:
    """Write a frame in the canonical CSV layout.

    Validity is carried by empty cells only, so an invalid row whose cells
    are all finite gets an empty target cell.
    """
    df = frame.to_dataframe()
    df.loc[~frame.valid, TARGET_COLUMN] = np.nan
    with open(path, "w", newline="") as fh:
        if header:
            for line in header.splitlines():
                fh.write(f"# {line}\n")
        df.to_csv(fh, index=False, float_format="%.17g", na_rep="")


# ---------------------------------------------------------------------------
# Feature engineering
# ---------------------------------------------------------------------------


def compute_residual_load(load, solar, wind) -> np.ndarray:
    """Load minus variable renewable generation; negative values are allowed."""
    load, solar, wind = (np.asarray(a, dtype=float) for a in (load, solar, wind))
    if not (load.shape == solar.shape == wind.shape):
        raise DataError("length mismatch between load, solar and wind series")
    return load - solar - wind


def shift_fuel_prices(daily_open, index: pd.DatetimeIndex | None = None) -> pd.Series:
    """Turn daily opening prices into an hourly series known a day in advance.

    The opening price of trading day ``d`` becomes the fixed price for all 24
    hours of day ``d + 1``. Days without a new shifted price (weekends,
    holidays) carry the most recent one forward. Hours before the first
    shifted price are NaN.

    Parameters
    ----------
    daily_open
        ``pd.Series`` indexed by date, or an iterable of ``(date, price)``.
    index
        Hourly UTC index to produce; defaults to the span from the first
        shifted day to the end of the last shifted day.
    """
    if isinstance(daily_open, pd.Series):
        s = daily_open.dropna()
    else:
        pairs = list(daily_open)
        s = pd.Series([p for _, p in pairs], index=[d for d, _ in pairs], dtype=float)
    if len(s) == 0:
        raise DataError("no opening prices given")
    days = pd.DatetimeIndex(pd.to_datetime(s.index, utc=True)).normalize()
    if days.has_duplicates:
        raise DataError("more than one opening price per trading day")
    shifted = pd.Series(s.to_numpy(dtype=float), index=days + pd.Timedelta(days=1)).sort_index()

    if index is None:
        index = pd.date_range(shifted.index[0], shifted.index[-1] + pd.Timedelta(hours=23),
                              freq="h", tz="UTC")
    index = pd.DatetimeIndex(index)
    if index.tz is None:
        index = index.tz_localize("UTC")
    # day-level lookup, then forward fill across days without a new value
    pos = shifted.index.searchsorted(index.normalize(), side="right") - 1
    out = np.where(pos >= 0, shifted.to_numpy()[np.clip(pos, 0, None)], np.nan)
    return pd.Series(out, index=index, name=getattr(daily_open, "name", None))


def compute_nuclear_availability(installed, planned_unavailable) -> np.ndarray:
    installed = np.asarray(installed, dtype=float)
    unavailable = np.asarray(planned_unavailable, dtype=float)
    if installed.shape != unavailable.shape:
        raise DataError("length mismatch between installed and unavailable capacity")
    if np.any(installed < 0) or np.any(unavailable < 0):
        raise DataError("capacities must be nonnegative")
    return installed - unavailable


def impute_solar_by_regression(target, neighbors: Sequence) -> np.ndarray:
    """Fill NaN rows of ``target`` by OLS on the neighbor series.

    Fit uses an intercept plus one coefficient per neighbor on the observed
    rows; imputed values are clipped at 0 MW. Observed rows are returned
    unchanged.
    """
    y = np.asarray(target, dtype=float)
    X = np.column_stack([np.asarray(n, dtype=float) for n in neighbors])
    if X.shape[0] != y.shape[0]:
        raise DataError("neighbor series must have the same length as the target")
    if not np.isfinite(X).all():
        raise DataError("neighbor series must be complete")
    observed = np.isfinite(y)
    if observed.sum() < 2:
        raise InsufficientDataError("need at least 2 observed rows to fit the regression")
    if observed.all():
        return y.copy()

    design = np.column_stack([np.ones(len(y)), X])
    coef, _, rank, _ = np.linalg.lstsq(design[observed], y[observed], rcond=None)
    if rank < design.shape[1]:
        warnings.warn(f"rank-deficient design matrix (rank {rank} < {design.shape[1]}); "
                      "using the minimum-norm least-squares solution", RuntimeWarning)
    out = y.copy()
    out[~observed] = np.maximum(design[~observed] @ coef, 0.0)
    return out


# ---------------------------------------------------------------------------
# Normalization and windows
# ---------------------------------------------------------------------------


def _as_range(r) -> range:
    if isinstance(r, range):
        return r
    if isinstance(r, slice):
        return range(r.start or 0, r.stop)
    start, stop = r
    return range(int(start), int(stop))


def fit_normalization(frame: TimeSeriesFrame, train_range) -> NormalizationSpec:
    """Scale factors from the max absolute value of each column over the
    valid rows of ``train_range``; an all-zero column gets scale 1."""
    r = _as_range(train_range)
    if len(r) == 0:
        raise DataError("empty training range")
    rows = np.arange(r.start, r.stop)
    rows = rows[frame.valid[rows]]
    if rows.size == 0:
        raise InsufficientDataError("no valid rows in the training range")
    scale = np.abs(frame.features[rows]).max(axis=0)
    tscale = float(np.abs(frame.target[rows]).max())
    scale = np.where(scale > 0, scale, 1.0)
    tscale = tscale if tscale > 0 else 1.0
    return NormalizationSpec(frame.columns, scale, tscale)


def complete_window_mask(valid: np.ndarray, seq_len: int = SEQ_LEN) -> np.ndarray:
    """``out[t]`` is True iff hours ``t-seq_len+1 .. t`` all exist and are valid."""
    valid = np.asarray(valid, dtype=bool)
    n = len(valid)
    out = np.zeros(n, dtype=bool)
    if n < seq_len:
        return out
    bad = np.concatenate([[0], np.cumsum(~valid)])
    t = np.arange(seq_len - 1, n)
    out[t] = (bad[t + 1] - bad[t + 1 - seq_len]) == 0
    return out


def make_windows(frame: TimeSeriesFrame, spec: NormalizationSpec, rng_range,
                 seq_len: int = SEQ_LEN) -> WindowSet:
    """One window per target hour in ``rng_range`` whose trailing ``seq_len``
    hours (target hour included) are all valid."""
    if tuple(spec.columns) != frame.columns:
        raise SchemaError("normalization columns do not match frame columns")
    r = _as_range(rng_range)
    mask = complete_window_mask(frame.valid, seq_len)
    idx = np.arange(max(r.start, 0), min(r.stop, len(frame)))
    idx = idx[mask[idx]]
    feats = np.where(frame.valid[:, None], frame.features, 0.0)
    feats = spec.normalize_features(feats)
    targets = spec.normalize_target(frame.target[idx])
    return WindowSet(feats, idx, targets, frame.timestamps[idx], seq_len)


# ---------------------------------------------------------------------------
# Fold planning
# ---------------------------------------------------------------------------


def week_starts(timestamps: pd.DatetimeIndex) -> np.ndarray:
    """Row indices of every Monday 00:00 UTC inside the frame."""
    t0 = timestamps[0]
    first = (t0 - pd.Timedelta(days=t0.dayofweek)).normalize()
    if first < t0:
        first += pd.Timedelta(days=7)
    offset = int((first - t0) / HOUR)
    return np.arange(offset, len(timestamps), WEEK_HOURS)


def plan_folds(frame: TimeSeriesFrame, train_hours: int = TRAIN_HOURS,
               val_fraction: float = VAL_FRACTION,
               min_test_hours: int = MIN_TEST_HOURS) -> FoldPlan:
    """Rolling weekly folds.

    Each complete ISO week (Monday 00:00 UTC) that has ``train_hours`` valid
    hours before it is a test week, unless it has fewer than
    ``min_test_hours`` valid hours. Train+validation is exactly the
    ``train_hours`` valid hours preceding the test week; the most recent
    ``val_fraction`` of them form the validation range.
    """
    valid = frame.valid
    n = len(frame)
    cum = np.concatenate([[0], np.cumsum(valid)])
    valid_idx = np.flatnonzero(valid)
    n_val = int(round(val_fraction * train_hours))
    n_train = train_hours - n_val

    folds: list[Fold] = []
    skipped: list[tuple[range, int]] = []
    for b in week_starts(frame.timestamps):
        e = b + WEEK_HOURS
        if e > n:
            break
        before = cum[b]
        if before < train_hours:
            continue
        n_test = int(cum[e] - cum[b])
        test = range(int(b), int(e))
        if n_test < min_test_hours:
            skipped.append((test, n_test))
            continue
        first = before - train_hours
        start = int(valid_idx[first])
        split = int(valid_idx[first + n_train]) if n_val > 0 else int(b)
        folds.append(Fold(range(start, split), range(split, int(b)), test))

    if not folds:
        raise InsufficientDataError(
            f"need more than {train_hours} valid hours plus one usable calendar week "
            f"(frame has {frame.n_valid} valid hours)")
    return FoldPlan(folds, skipped)
