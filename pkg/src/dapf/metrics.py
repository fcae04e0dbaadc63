"""Point and probabilistic forecast metrics, plus the yearly report."""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import DataError, DegenerateInputError

logger = logging.getLogger(__name__)

REPORT_COLUMNS = ["year", "nll", "mae", "smape"]


def _pair(y, yhat) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    if y.shape != yhat.shape:
        raise DataError(f"length mismatch: {y.shape} vs {yhat.shape}")
    if y.size == 0:
        raise DataError("empty input")
    return y, yhat


def mae(y, yhat) -> float:
    y, yhat = _pair(y, yhat)
    return float(np.mean(np.abs(y - yhat)))


def smape(y, yhat, return_skipped: bool = False):
    """Symmetric MAPE in percent, in [0, 200].

    Terms with ``y == yhat == 0`` are undefined; they are skipped and
    counted (the mean runs over the remaining terms). With
    ``return_skipped`` the result is ``(score, n_skipped)``.
    """
    y, yhat = _pair(y, yhat)
    denom = 0.5 * (np.abs(y) + np.abs(yhat))
    ok = denom > 0
    n_skipped = int((~ok).sum())
    if not ok.any():
        raise DegenerateInputError("all SMAPE terms are degenerate (y = yhat = 0)")
    if n_skipped:
        logger.warning("SMAPE: skipped %d degenerate terms", n_skipped)
    score = float(100.0 * np.mean(np.abs(y[ok] - yhat[ok]) / denom[ok]))
    return (score, n_skipped) if return_skipped else score


def nll_metric(y, mu, sigma) -> float:
    """Mean Gaussian negative log-likelihood in price units."""
    y, mu = _pair(y, mu)
    sigma = np.asarray(sigma, dtype=float)
    if sigma.shape != y.shape:
        raise DataError("sigma must match y in length")
    if np.any(sigma <= 0):
        raise DataError("sigma must be positive")
    return float(np.mean(0.5 * np.log(2.0 * np.pi * sigma**2) + (y - mu) ** 2 / (2.0 * sigma**2)))


def yearly_report(forecast, truth: pd.Series) -> pd.DataFrame:
    """Per-calendar-year NLL, MAE and SMAPE plus an ``all`` row.

    ``forecast`` is a ForecastDistribution; ``truth`` a price series indexed
    by UTC timestamp. Rows are aligned on timestamps; NaN truths are dropped.
    """
    fc = pd.DataFrame({"mu": forecast.mu, "sigma": forecast.sigma},
                      index=pd.DatetimeIndex(forecast.times))
    joined = fc.join(truth.rename("y"), how="inner").dropna()
    if joined.empty:
        raise DataError("forecast and truth have no overlapping timestamps")

    rows = []
    groups = [(str(year), g) for year, g in joined.groupby(joined.index.year)]
    for label, g in groups + [("all", joined)]:
        rows.append({
            "year": label,
            "nll": nll_metric(g["y"], g["mu"], g["sigma"]),
            "mae": mae(g["y"], g["mu"]),
            "smape": smape(g["y"], g["mu"]),
        })
    return pd.DataFrame(rows, columns=REPORT_COLUMNS)


def write_report(report: pd.DataFrame, path: str | Path, header: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        if header:
            for line in header.splitlines():
                fh.write(f"# {line}\n")
        report.to_csv(fh, index=False, float_format="%.2f")


# Yearly reference values (NLL, MAE, SMAPE) used by the magnitude gate.
REFERENCE_TABLE = {
    "2019": (2.94, 3.73, 15.12),
    "2020": (2.97, 3.93, 20.71),
    "2021": (3.83, 10.32, 15.41),
    "2022": (5.01, 29.85, 18.21),
    "all": (3.69, 11.92, 17.42),
}


def magnitude_gate(report: pd.DataFrame, factor: float = 3.0) -> dict[str, bool]:
    """Same-order-of-magnitude check of MAE against the reference yearly
    values; only calendar years present in both are checked."""
    out = {}
    for _, row in report.iterrows():
        ref = REFERENCE_TABLE.get(str(row["year"]))
        if ref is None or str(row["year"]) == "all":
            continue
        ratio = row["mae"] / ref[1]
        out[str(row["year"])] = bool(1.0 / factor < ratio < factor)
    return out
