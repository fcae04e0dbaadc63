"""Synthetic data with known ground truth.

Two generators:

* :func:`gen_superstat_series` samples the Gamma mixture of Gaussians
  directly: one inverse temperature per block, Gaussian noise within a block.
* :func:`gen_forecastable_frame` builds a frame with the production feature
  layout whose price is a known function of the features plus
  heteroskedastic noise, so trained models can be checked against truth.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .dataset import (
    FEATURE_COLUMNS,
    FUEL_COLUMNS,
    NEIGHBOR_ZONES,
    TimeSeriesFrame,
    shift_fuel_prices,
)
from .errors import DataError

DEFAULT_START = "2019-01-07T00:00:00Z"
SIGMA_FEATURE = "wind_de_lu_mw"


def gen_superstat_series(k: float, theta: float, block_len: int, n_blocks: int,
                         seed: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Series of ``n_blocks * block_len`` values and the true beta per block.

    Per block, beta ~ Gamma(shape=k, scale=theta) and values are
    Normal(0, 1/sqrt(2 beta)), i.e. density sqrt(beta/pi) exp(-beta x^2).
    """
    if k <= 0 or theta <= 0:
        raise DataError("Gamma shape and scale must be positive")
    if block_len < 8:
        raise DataError("block_len must be at least 8")
    rng = np.random.default_rng(seed)
    beta = rng.gamma(k, theta, size=n_blocks)
    z = rng.standard_normal((n_blocks, block_len))
    x = z / np.sqrt(2.0 * beta)[:, None]
    return x.ravel(), beta


@dataclass(frozen=True)
class SyntheticTruth:
    times: pd.DatetimeIndex
    mu: np.ndarray
    sigma: np.ndarray

    def to_dataframe(self) -> pd.DataFrame:
        return pd.DataFrame({
            "timestamp": self.times.strftime("%Y-%m-%dT%H:%M:%SZ"),
            "mu_true": self.mu,
            "sigma_true": self.sigma,
        })


def _ou(rng, n, mean, sd, phi):
    """Stationary AR(1) path with given mean, marginal sd and lag-1 coefficient."""
    eps = rng.standard_normal(n) * sd * np.sqrt(1.0 - phi**2)
    x = np.empty(n)
    x[0] = rng.standard_normal() * sd
    for t in range(1, n):
        x[t] = phi * x[t - 1] + eps[t]
    return mean + x


def _power_sources(rng, times: pd.DatetimeIndex) -> dict[str, np.ndarray]:
    """Hourly load/solar/wind per zone plus nuclear installed/unavailable."""
    n = len(times)
    hour = times.hour.to_numpy()
    dow = times.dayofweek.to_numpy()
    doy = times.dayofyear.to_numpy()
    daily = np.sin(2 * np.pi * (hour - 8) / 24)
    weekend = (dow >= 5).astype(float)
    season = np.cos(2 * np.pi * (doy - 15) / 365.25)
    daylight = np.clip(np.sin(np.pi * (hour - 6) / 12), 0, None)

    out: dict[str, np.ndarray] = {}
    zones = ("de_lu",) + NEIGHBOR_ZONES
    sizes = dict(de_lu=55000, at=7000, be=9500, ch=7000, cz=7500, dk1=2300, dk2=1600,
                 fr=52000, nl=12000, no2=4500, pl=18000)
    for z in zones:
        s = sizes[z]
        out[f"load_{z}"] = (s * (1 + 0.12 * daily - 0.1 * weekend + 0.08 * season)
                            + _ou(rng, n, 0, 0.02 * s, 0.9))
        clouds = np.repeat(rng.uniform(0.3, 1.0, n // 24 + 2), 24)[:n]
        out[f"solar_{z}"] = 0.45 * s * daylight * clouds * (1 - 0.4 * season)
        out[f"wind_{z}"] = 0.5 * s * np.exp(_ou(rng, n, -1.0, 0.6, 0.995))
    # PL solar is an exact linear function of its neighbors so imputation can round-trip
    out["solar_pl"] = 0.1 * out["solar_de_lu"] + 0.5 * out["solar_cz"]
    for z, cap in (("de_lu", 8100.0), ("fr", 61000.0)):
        out[f"nuc_installed_{z}"] = np.full(n, cap)
        outage = np.repeat(rng.uniform(0, 0.25, n // 168 + 2), 168)[:n]
        out[f"nuc_unavail_{z}"] = cap * outage
    return out


def _fuel_opens(rng, start: pd.Timestamp, n_days: int) -> pd.DataFrame:
    """Weekday opening prices for the fuel columns, starting a week early."""
    days = pd.date_range(start - pd.Timedelta(days=7), periods=n_days + 8, freq="D")
    days = days[days.dayofweek < 5]
    m = len(days)
    means = dict(gas_eur_mwh=35.0, oil_usd_bbl=65.0, coal_usd_t=90.0, co2_eur_t=30.0)
    sds = dict(gas_eur_mwh=8.0, oil_usd_bbl=8.0, coal_usd_t=12.0, co2_eur_t=6.0)
    data = {c: _ou(rng, m, means[c], sds[c], 0.98) for c in FUEL_COLUMNS}
    return pd.DataFrame(data, index=days.tz_localize(None).date)


def gen_sources(n_hours: int, seed: int | None = None, start: str = DEFAULT_START):
    """Raw per-source data: hourly power dict, daily fuel opens, hourly index."""
    rng = np.random.default_rng(seed)
    times = pd.date_range(pd.Timestamp(start), periods=n_hours, freq="h")
    if times.tz is None:
        times = times.tz_localize("UTC")
    power = _power_sources(rng, times)
    fuels = _fuel_opens(rng, times[0].normalize(), n_hours // 24 + 1)
    return times, power, fuels, rng


def assemble_features(times, power: dict, fuels: pd.DataFrame) -> np.ndarray:
    """Feature matrix in ``FEATURE_COLUMNS`` order from raw sources."""
    from .dataset import compute_nuclear_availability, compute_residual_load

    cols = {
        "load_de_lu_mw": power["load_de_lu"],
        "solar_de_lu_mw": power["solar_de_lu"],
        "wind_de_lu_mw": power["wind_de_lu"],
    }
    for z in NEIGHBOR_ZONES:
        cols[f"res_load_{z}_mw"] = compute_residual_load(
            power[f"load_{z}"], power[f"solar_{z}"], power[f"wind_{z}"])
    for z in ("de_lu", "fr"):
        cols[f"nuc_avail_{z}_mw"] = compute_nuclear_availability(
            power[f"nuc_installed_{z}"], power[f"nuc_unavail_{z}"])
    for c in FUEL_COLUMNS:
        cols[c] = shift_fuel_prices(fuels[c], times).to_numpy()
    return np.column_stack([cols[c] for c in FEATURE_COLUMNS])


def true_mean_price(features: np.ndarray) -> np.ndarray:
    """Deterministic part of the synthetic price (EUR/MWh)."""
    f = dict(zip(FEATURE_COLUMNS, features.T))
    residual = f["load_de_lu_mw"] - f["solar_de_lu_mw"] - f["wind_de_lu_mw"]
    r = (residual - 30000.0) / 15000.0
    neighbors = (f["res_load_fr_mw"] - 45000.0) / 20000.0
    nuclear = (f["nuc_avail_fr_mw"] - 53000.0) / 8000.0
    return (45.0 + 18.0 * r + 6.0 * np.tanh(1.5 * r) + 1.2 * (f["gas_eur_mwh"] - 35.0)
            + 0.6 * (f["co2_eur_t"] - 30.0) + 5.0 * neighbors - 3.0 * nuclear)


def true_sigma(features: np.ndarray, constant: bool = False) -> np.ndarray:
    """Noise standard deviation (EUR/MWh), driven by the wind feature."""
    if constant:
        return np.full(features.shape[0], 6.0)
    wind = features[:, FEATURE_COLUMNS.index(SIGMA_FEATURE)]
    return 2.0 + 10.0 * np.clip(wind / 40000.0, 0.0, 1.0)


def gen_forecastable_frame(n_hours: int = 20000, seed: int | None = None,
                           noise_scale: float = 1.0, constant_sigma: bool = False,
                           start: str = DEFAULT_START) -> tuple[TimeSeriesFrame, SyntheticTruth]:
    """Frame with the production feature layout and a known conditional
    Gaussian price distribution.

    ``noise_scale=0`` gives a noiseless price; ``constant_sigma`` switches
    off the heteroskedasticity.
    """
    if n_hours < 20000:
        raise DataError("n_hours must be at least 20000")
    times, power, fuels, rng = gen_sources(n_hours, seed, start)
    features = assemble_features(times, power, fuels)
    mu = true_mean_price(features)
    sigma = true_sigma(features, constant_sigma)
    price = mu + noise_scale * sigma * rng.standard_normal(n_hours)
    valid = np.isfinite(features).all(axis=1)
    frame = TimeSeriesFrame(times, features, price, valid, FEATURE_COLUMNS)
    return frame, SyntheticTruth(times, mu, sigma)


def write_sources(directory, n_hours: int, seed: int | None = None,
                  pl_solar_cutover: str | None = None, start: str = DEFAULT_START) -> dict:
    """Write raw per-source CSVs (prices, power, nuclear, fuels) that ingest
    back into the frame of :func:`gen_forecastable_frame` with the same seed.

    PL solar is blanked before ``pl_solar_cutover`` so ingest must impute it.
    Returns the paths written, keyed like the ingest config.
    """
    from pathlib import Path

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    frame, _ = gen_forecastable_frame(n_hours, seed, start=start)
    times, power, fuels, _ = gen_sources(n_hours, seed, start)
    stamp = times.strftime("%Y-%m-%dT%H:%M:%SZ")

    power_cols = {k: v for k, v in power.items() if not k.startswith("nuc_")}
    power_df = pd.DataFrame({"timestamp": stamp, **power_cols})
    # wind arrives split into on- and offshore for the bidding zone
    power_df["wind_onshore_de_lu"] = 0.8 * power["wind_de_lu"]
    power_df["wind_offshore_de_lu"] = power["wind_de_lu"] - power_df["wind_onshore_de_lu"]
    power_df = power_df.drop(columns=["wind_de_lu"])
    power_df["load_se4"] = np.nan
    if pl_solar_cutover is not None:
        cut = pd.Timestamp(pl_solar_cutover)
        cut = cut.tz_localize("UTC") if cut.tz is None else cut
        power_df.loc[times < cut, "solar_pl"] = np.nan

    nuc_df = pd.DataFrame({"timestamp": stamp, **{k: v for k, v in power.items()
                                                  if k.startswith("nuc_")}})
    fuel_df = fuels.copy()
    fuel_df.index.name = "date"
    price_df = pd.DataFrame({"timestamp": stamp, "price_da_eur_mwh": frame.target})

    paths = {
        "prices": directory / "prices.csv",
        "power": directory / "power.csv",
        "nuclear": directory / "nuclear.csv",
        "fuels": directory / "fuels.csv",
    }
    price_df.to_csv(paths["prices"], index=False, float_format="%.17g")
    power_df.to_csv(paths["power"], index=False, float_format="%.17g")
    nuc_df.to_csv(paths["nuclear"], index=False, float_format="%.17g")
    fuel_df.to_csv(paths["fuels"], float_format="%.17g")
    return paths
