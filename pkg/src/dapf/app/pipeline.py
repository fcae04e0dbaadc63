"""End-to-end commands: ingest, synth, backtest, superstats, report.

Every file written here starts with a ``# config_hash: ...`` comment line.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import pandas as pd

from .. import emd, superstats
from ..dataset import (
    FEATURE_COLUMNS,
    FUEL_COLUMNS,
    NEIGHBOR_ZONES,
    TARGET_COLUMN,
    TimeSeriesFrame,
    compute_nuclear_availability,
    compute_residual_load,
    fit_normalization,
    impute_solar_by_regression,
    load_csv,
    make_windows,
    parse_timestamps,
    plan_folds,
    read_table,
    save_csv,
    shift_fuel_prices,
    to_float,
)
from ..errors import DataError, DegenerateInputError, DivergenceError, SchemaError
from ..metrics import magnitude_gate, write_report, yearly_report
from ..neural import ForecastDistribution, fold_seed, model_to_dict, predict, train_fold
from ..synthetic import gen_forecastable_frame, gen_superstat_series, write_sources
from .config import PipelineConfig

logger = logging.getLogger(__name__)

TS_FORMAT = "%Y-%m-%dT%H:%M:%SZ"


def _header(cfg: PipelineConfig, what: str) -> str:
    return f"config_hash: {cfg.digest()}\nproduced_by: dapf {what}"


def _write_csv(df: pd.DataFrame, path: Path, cfg: PipelineConfig, what: str,
               float_format: str = "%.17g") -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        for line in _header(cfg, what).splitlines():
            fh.write(f"# {line}\n")
        df.to_csv(fh, index=False, float_format=float_format)


def _write_json(obj, path: Path, cfg: PipelineConfig) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps({"config_hash": cfg.digest(), **obj}, indent=2, default=str))


# ---------------------------------------------------------------------------
# ingest
# ---------------------------------------------------------------------------


def _hourly_table(path: Path, required: list[str]) -> pd.DataFrame:
    df = read_table(path)
    if "timestamp" not in df.columns:
        raise SchemaError(f"{path}: missing column 'timestamp'")
    missing = [c for c in required if c not in df.columns]
    if missing:
        raise SchemaError(f"{path}: missing columns {missing}")
    try:
        ts = parse_timestamps(df["timestamp"])
    except DataError as exc:
        bad = next(i for i, v in enumerate(df["timestamp"])
                   if pd.isna(pd.to_datetime(v, utc=True, errors="coerce")))
        raise DataError(f"{path}: row {bad + 2}: unparsable timestamp") from exc
    if ts.has_duplicates or not ts.is_monotonic_increasing:
        raise DataError(f"{path}: non-monotone timestamps")
    out = to_float(df.drop(columns=["timestamp"]))
    out.index = ts
    return out


def _wind(power: pd.DataFrame, zone: str, path: Path) -> pd.Series:
    if f"wind_{zone}" in power:
        return power[f"wind_{zone}"]
    on, off = f"wind_onshore_{zone}", f"wind_offshore_{zone}"
    if on in power:
        return power[on] + (power[off] if off in power else 0.0)
    raise SchemaError(f"{path}: missing column 'wind_{zone}' (or wind_onshore_{zone})")


def cmd_ingest(cfg: PipelineConfig) -> TimeSeriesFrame:
    """Build the canonical frame from per-source CSVs and write it."""
    paths = {k: cfg.path(k) for k in ("prices", "power", "nuclear", "fuels")}
    for key, p in paths.items():
        if p is None:
            raise SchemaError(f"config key '{key}' is required for ingest")

    prices = _hourly_table(paths["prices"], [TARGET_COLUMN])
    index = pd.date_range(prices.index[0], prices.index[-1], freq="h")
    zones = ("de_lu",) + NEIGHBOR_ZONES
    power = _hourly_table(paths["power"], [f"load_{z}" for z in zones]
                          + [f"solar_{z}" for z in zones]).reindex(index)
    nuclear = _hourly_table(paths["nuclear"], [f"nuc_{kind}_{z}" for z in ("de_lu", "fr")
                                               for kind in ("installed", "unavail")]).reindex(index)
    fuels = read_table(paths["fuels"])
    missing = [c for c in ("date", *FUEL_COLUMNS) if c not in fuels.columns]
    if missing:
        raise SchemaError(f"{paths['fuels']}: missing columns {missing}")
    fuel_dates = pd.to_datetime(fuels["date"], errors="coerce")
    if fuel_dates.isna().any():
        raise DataError(f"{paths['fuels']}: row {int(fuel_dates.isna().argmax()) + 2}: bad date")

    log: dict = {"rows": len(index)}
    known = {"timestamp"} | {f"{k}_{z}" for k in ("load", "solar", "wind", "wind_onshore",
                                                   "wind_offshore") for z in zones}
    ignored = sorted(c for c in read_table(paths["power"]).columns if c not in known)
    if ignored:
        logger.info("ignoring power columns %s", ignored)
    log["ignored_columns"] = ignored

    # PL solar gap filled by regression on neighbor solar generation
    solar_pl = power["solar_pl"].to_numpy(dtype=float)
    gap = ~np.isfinite(solar_pl)
    neighbors = [s.strip() for s in cfg.pl_solar_neighbors.split(",") if s.strip()]
    log["pl_solar_imputed"] = 0
    if gap.any():
        nb = power[neighbors].to_numpy(dtype=float)
        usable = np.isfinite(nb).all(axis=1)
        filled = solar_pl.copy()
        filled[usable] = impute_solar_by_regression(solar_pl[usable], list(nb[usable].T))
        imputed = gap & np.isfinite(filled)
        power["solar_pl"] = filled
        log["pl_solar_imputed"] = int(imputed.sum())
        if imputed.any():
            log["pl_solar_imputed_first"] = index[imputed][0].strftime(TS_FORMAT)
            log["pl_solar_imputed_last"] = index[imputed][-1].strftime(TS_FORMAT)
            cut = pd.Timestamp(cfg.pl_solar_cutover, tz="UTC") if cfg.pl_solar_cutover else None
            if cut is not None:
                log["pl_solar_imputed_after_cutover"] = int((imputed & (index >= cut)).sum())

    cols = {
        "load_de_lu_mw": power["load_de_lu"],
        "solar_de_lu_mw": power["solar_de_lu"],
        "wind_de_lu_mw": _wind(power, "de_lu", paths["power"]),
    }
    for z in NEIGHBOR_ZONES:
        cols[f"res_load_{z}_mw"] = compute_residual_load(
            power[f"load_{z}"], power[f"solar_{z}"], _wind(power, z, paths["power"]))
    for z in ("de_lu", "fr"):
        inst = nuclear[f"nuc_installed_{z}"].to_numpy(dtype=float)
        unav = nuclear[f"nuc_unavail_{z}"].to_numpy(dtype=float)
        ok = np.isfinite(inst) & np.isfinite(unav)
        avail = np.full(len(index), np.nan)
        avail[ok] = compute_nuclear_availability(inst[ok], unav[ok])
        cols[f"nuc_avail_{z}_mw"] = avail
    for c in FUEL_COLUMNS:
        daily = pd.Series(to_float(fuels[[c]])[c].to_numpy(),
                          index=fuel_dates.dt.date).dropna()
        cols[c] = shift_fuel_prices(daily, index).to_numpy()

    features = np.column_stack([np.asarray(cols[c], dtype=float) for c in FEATURE_COLUMNS])
    target = prices[TARGET_COLUMN].reindex(index).to_numpy(dtype=float)
    valid = np.isfinite(features).all(axis=1) & np.isfinite(target)
    frame = TimeSeriesFrame(index, features, target, valid, FEATURE_COLUMNS)
    log["invalid_rows"] = int((~valid).sum())

    out = cfg.path("frame")
    out.parent.mkdir(parents=True, exist_ok=True)
    save_csv(frame, out, header=_header(cfg, "ingest"))
    _write_json(log, out.with_name("ingest_log.json"), cfg)
    return frame


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------


def cmd_synth(cfg: PipelineConfig) -> Path:
    """Write a synthetic frame plus ``truth_*.csv`` sidecars next to it."""
    out = cfg.path("frame")
    out.parent.mkdir(parents=True, exist_ok=True)
    if cfg.synth_kind == "forecastable":
        frame, truth = gen_forecastable_frame(cfg.synth_hours, cfg.seed)
        save_csv(frame, out, header=_header(cfg, "synth"))
        _write_csv(truth.to_dataframe(), out.with_name("truth_forecast.csv"), cfg, "synth")
        if cfg.synth_sources_dir:
            write_sources(cfg.path("synth_sources_dir"), cfg.synth_hours, cfg.seed,
                          pl_solar_cutover=cfg.pl_solar_cutover or None)
    elif cfg.synth_kind == "superstat":
        block = cfg.tau
        x, beta = gen_superstat_series(cfg.synth_k, cfg.synth_theta, block, cfg.synth_blocks,
                                       cfg.seed)
        n = len(x)
        base, _ = gen_forecastable_frame(max(n, 20000), cfg.seed)
        price = 50.0 + 10.0 * x
        frame = TimeSeriesFrame(base.timestamps[:n], base.features[:n], price,
                                np.ones(n, dtype=bool), base.columns)
        save_csv(frame, out, header=_header(cfg, "synth"))
        starts = frame.timestamps[::block]
        _write_csv(pd.DataFrame({"window_start": starts.strftime(TS_FORMAT),
                                 "beta_true": beta / 100.0}),
                   out.with_name("truth_beta.csv"), cfg, "synth")
        # oracle forecast: the true per-block mean and std of the price
        sigma = np.repeat(10.0 / np.sqrt(2.0 * beta), block)
        _write_csv(pd.DataFrame({"timestamp": frame.timestamps.strftime(TS_FORMAT),
                                 "mu": np.full(n, 50.0), "sigma": sigma, "price_true": price}),
                   out.with_name("truth_forecast.csv"), cfg, "synth")
    else:
        raise SchemaError(f"unknown synth_kind '{cfg.synth_kind}'")
    return out


# ---------------------------------------------------------------------------
# backtest
# ---------------------------------------------------------------------------


def run_fold(frame: TimeSeriesFrame, fold, lstm_cfg, seed: int):
    """Train one fold from scratch and forecast its test week."""
    norm = fit_normalization(frame, range(fold.train.start, fold.val.stop))
    train_w = make_windows(frame, norm, fold.train, lstm_cfg.seq_len)
    val_w = make_windows(frame, norm, fold.val, lstm_cfg.seq_len)
    model, log = train_fold(train_w, val_w, lstm_cfg, seed=seed, norm=norm)
    return model, log, predict(model, frame, fold.test)


def _fold_job(args):
    frame, fold, lstm_cfg, seed, index = args
    try:
        model, log, fc = run_fold(frame, fold, lstm_cfg, seed)
    except DivergenceError as exc:
        return index, None, {"error": str(exc)}, None
    return index, fc, log.to_dict(), model_to_dict(model)


def cmd_backtest(cfg: PipelineConfig) -> ForecastDistribution:
    """Rolling weekly retraining over the canonical frame."""
    frame = load_csv(cfg.path("frame"))
    plan = plan_folds(frame, cfg.train_hours, cfg.val_fraction, cfg.min_test_hours)
    folds = plan.folds[:cfg.max_folds] if cfg.max_folds > 0 else plan.folds
    lstm_cfg = cfg.lstm()
    jobs = [(frame, f, lstm_cfg, fold_seed(cfg.seed, i), i) for i, f in enumerate(folds)]

    if cfg.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(_fold_job, jobs))
    else:
        results = [_fold_job(j) for j in jobs]

    out = cfg.out
    parts, failed = [], []
    for (index, fc, log, model), fold in zip(sorted(results, key=lambda r: r[0]), folds):
        info = {"fold": index, "train": [fold.train.start, fold.train.stop],
                "val": [fold.val.start, fold.val.stop], "test": [fold.test.start, fold.test.stop],
                "test_week_start": frame.timestamps[fold.test.start].strftime(TS_FORMAT),
                "log": log}
        _write_json(info, out / "folds" / f"fold_{index:04d}.json", cfg)
        if fc is None:
            failed.append(index)
            logger.warning("fold %d diverged and was skipped", index)
            continue
        _write_json({"model": model}, out / "checkpoints" / f"fold_{index:04d}.json", cfg)
        parts.append(fc)

    forecast = ForecastDistribution.concat(parts)
    truth = pd.Series(frame.target, index=frame.timestamps)
    df = pd.DataFrame({
        "timestamp": forecast.times.strftime(TS_FORMAT),
        "mu": forecast.mu,
        "sigma": forecast.sigma,
        "price_true": truth.reindex(forecast.times).to_numpy(),
    })
    _write_csv(df, out / "forecast.csv", cfg, "backtest")
    _write_json({"n_folds": len(folds), "failed_folds": failed,
                 "skipped_weeks": [[r.start, r.stop, n] for r, n in plan.skipped_weeks]},
                out / "backtest_log.json", cfg)
    if len(forecast):
        report = yearly_report(forecast, truth)
        write_report(report, out / "report.csv", header=_header(cfg, "backtest"))
    return forecast


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------


def read_forecast(path: Path) -> tuple[ForecastDistribution, pd.Series]:
    df = read_table(path)
    for c in ("timestamp", "mu", "sigma"):
        if c not in df.columns:
            raise SchemaError(f"{path}: missing column '{c}'")
    times = parse_timestamps(df["timestamp"])
    num = to_float(df.drop(columns=["timestamp"]))
    fc = ForecastDistribution(times, num["mu"].to_numpy(), num["sigma"].to_numpy())
    truth = num["price_true"] if "price_true" in num else pd.Series(np.nan, index=num.index)
    return fc, pd.Series(truth.to_numpy(), index=times)


def _forecast_path(cfg: PipelineConfig) -> Path:
    return cfg.path("forecast") or cfg.out / "forecast.csv"


def cmd_report(cfg: PipelineConfig, reference_gate: bool = False) -> tuple[pd.DataFrame, dict | None]:
    fc, truth = read_forecast(_forecast_path(cfg))
    report = yearly_report(fc, truth)
    cfg.out.mkdir(parents=True, exist_ok=True)
    write_report(report, cfg.out / "report.csv", header=_header(cfg, "report"))
    gate = magnitude_gate(report) if reference_gate else None
    return report, gate


# ---------------------------------------------------------------------------
# superstats
# ---------------------------------------------------------------------------


def _flat(series: np.ndarray, reference: np.ndarray) -> bool:
    return float(np.std(series)) <= 1e-9 * max(float(np.max(np.abs(reference))), 1e-300)


def cmd_superstats(cfg: PipelineConfig) -> dict:
    """Data for the four figure panels: forecast bands, standardized
    densities with fits, volatility series and volatility densities."""
    fc, _ = read_forecast(_forecast_path(cfg))
    frame = load_csv(cfg.path("frame"))
    pos = frame.timestamps.get_indexer(fc.times)
    if np.any(pos < 0):
        raise DataError("forecast timestamps not found in the frame")
    if not frame.valid[pos].all():
        raise DataError("forecast covers invalid frame rows")
    price = frame.target[pos]
    out = cfg.out

    # panel a: forecast with 1 and 2 sigma bands
    panel_a = pd.DataFrame({
        "timestamp": fc.times.strftime(TS_FORMAT),
        "price_true": price,
        "mu": fc.mu,
        "mu_minus_1sigma": fc.mu - fc.sigma,
        "mu_plus_1sigma": fc.mu + fc.sigma,
        "mu_minus_2sigma": fc.mu - 2 * fc.sigma,
        "mu_plus_2sigma": fc.mu + 2 * fc.sigma,
    })
    _write_csv(panel_a, out / "panel_a_forecast.csv", cfg, "superstats")

    # panel b: standardized densities of detrended prices and means
    price_dt = emd.detrend(price, cfg.n_slow, cfg.include_residual)
    mu_dt = emd.detrend(fc.mu, cfg.n_slow, cfg.include_residual)
    if _flat(price_dt, price):
        raise DegenerateInputError(
            f"detrended price series is constant (removing {cfg.n_slow} slow modes left no "
            "variation; the series may be constant or too short)")
    edges = np.linspace(-10.0, 10.0, 201)
    centers = 0.5 * (edges[1:] + edges[:-1])
    fits = {}
    density = {"x": centers}
    for name, series in (("price", price_dt), ("mu", mu_dt)):
        if _flat(series, price):
            fits[name] = None
            continue
        z = (series - series.mean()) / series.std()
        g_mu, g_sd = superstats.fit_gaussian(z)
        qfit = superstats.fit_qgaussian(z)
        density[f"density_{name}"] = superstats.standardized_density(series, edges)
        density[f"gauss_fit_{name}"] = superstats.gaussian_pdf(centers, g_mu, g_sd)
        density[f"qgauss_fit_{name}"] = qfit.pdf(centers)
        fits[name] = {"gaussian": {"mu": g_mu, "sigma": g_sd,
                                   "loglik": float(np.sum(np.log(superstats.gaussian_pdf(z, g_mu, g_sd))))},
                      "qgaussian": {"q": qfit.q, "beta": qfit.beta, "mu": qfit.mu,
                                    "loglik": qfit.loglik, "converged": qfit.converged}}
    _write_csv(pd.DataFrame(density), out / "density_prices.csv", cfg, "superstats")

    # panels c/d: beta(tau) against nu(t)
    beta = superstats.local_volatility(price_dt, cfg.tau, times=fc.times)
    comparison = superstats.compare_volatilities(beta, fc)
    series = comparison.aligned.copy()
    series["window_start"] = pd.DatetimeIndex(series["window_start"]).strftime(TS_FORMAT)
    _write_csv(series, out / "volatility_series.csv", cfg, "superstats")
    hourly = pd.DataFrame({"timestamp": fc.times.strftime(TS_FORMAT), "nu": 1.0 / fc.sigma**2})
    _write_csv(hourly, out / "volatility_hourly.csv", cfg, "superstats")
    _write_csv(comparison.density, out / "volatility_density.csv", cfg, "superstats")

    gamma_fit = None
    if len(beta.beta) >= 10 and np.var(beta.beta) > 0:
        k, theta = superstats.fit_gamma(beta.beta)
        gamma_fit = {"shape": k, "scale": theta}
    timescale = None
    if len(price_dt) >= 500:
        timescale = superstats.estimate_timescale(price_dt)
    summary = {"fits": fits, "gamma_fit_beta": gamma_fit, "timescale_diagnostic_h": timescale,
               "tau": cfg.tau, "n_beta_windows_skipped": beta.n_skipped,
               "volatility": comparison.summary}
    _write_json(summary, out / "superstats_summary.json", cfg)
    return summary
