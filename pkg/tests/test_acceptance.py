"""Acceptance criteria 1-9, each at its stated tolerance.

Every test prints one ``CRITERION <n>: PASS|FAIL ...`` line (also repeated
in the terminal summary) and then asserts the outcome.
"""

import time

import numpy as np
import pandas as pd
import pytest
from scipy import stats

import conftest
from gradcheck import max_relative_error, random_case
from oracles import folds_brute, mae_direct, nll_direct, smape_direct
from dapf.app import PipelineConfig, cmd_backtest, cmd_report, cmd_synth
from dapf.dataset import plan_folds, read_table, to_float
from dapf.emd import decompose
from dapf.errors import InsufficientDataError
from dapf.metrics import REFERENCE_TABLE, magnitude_gate, mae, nll_metric, smape
from dapf.superstats import (
    fit_gaussian,
    fit_qgaussian,
    gamma_to_qgaussian,
    local_volatility,
    qgaussian_loglik,
    qgaussian_pdf,
    superstat_density,
)
from dapf.synthetic import gen_superstat_series
from conftest import make_frame


def report(n, ok, detail):
    line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'} ({detail})"
    conftest.ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def superstat_series():
    return gen_superstat_series(1.5, 1.0, 96, 1000, seed=0)


def test_criterion_1_gradients():
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = max(max_relative_error(*random_case(rng)) for _ in range(20))
    elapsed = time.perf_counter() - start
    report(1, worst < 1e-5 and elapsed < 30,
           f"max relative error {worst:.2e} < 1e-5 over 20 configs, {elapsed:.1f} s < 30 s")


def test_criterion_2_metric_oracles():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 200))
        y = rng.normal(50, 30, n)
        mu = y + rng.normal(0, 10, n)
        sigma = rng.uniform(0.1, 20, n)
        for ours, ref in ((nll_metric(y, mu, sigma), nll_direct(y, mu, sigma)),
                          (mae(y, mu), mae_direct(y, mu)),
                          (smape(y, mu), smape_direct(y, mu))):
            worst = max(worst, abs(ours - ref))
    hand_nll = round(nll_metric([0.0], [0.0], [1.0]), 6)
    hand_smape = round(smape([1.0], [2.0]), 4)
    ok = worst <= 1e-12 and hand_nll == 0.918939 and hand_smape == 66.6667
    report(2, ok, f"max deviation {worst:.1e} <= 1e-12, NLL {hand_nll}, SMAPE {hand_smape}")


def test_criterion_3_mixture_identity():
    start = time.perf_counter()
    worst = 0.0
    for k, theta in ((1.5, 1.0), (3.0, 0.5)):
        q, beta_q = gamma_to_qgaussian(k, theta)
        sd = np.sqrt(1.0 / (2.0 * theta * (k - 1.0)))  # std of the mixture
        p = np.linspace(-10 * sd, 10 * sd, 401)
        worst = max(worst, np.abs(superstat_density(k, theta, p) - qgaussian_pdf(p, q, beta_q)).max())
    elapsed = time.perf_counter() - start
    report(3, worst <= 1e-6 and elapsed < 10,
           f"sup-norm {worst:.1e} <= 1e-6 on +-10 sigma grids, {elapsed:.1f} s < 10 s")


def _smooth(seed, n=600):
    rng = np.random.default_rng(seed)
    t = np.arange(n)
    x = np.zeros(n)
    for _ in range(int(rng.integers(1, 5))):
        x += rng.uniform(0.2, 3) * np.sin(2 * np.pi * t / rng.uniform(6, n / 2) + rng.uniform(0, 6.3))
    return x + rng.uniform(-1, 1) * t / n + rng.normal(0, 0.05, n)


def test_criterion_4_emd():
    worst = 0.0
    for seed in range(50):
        x = _smooth(1000 + seed)
        dec = decompose(x)
        worst = max(worst, np.abs(dec.reconstruct() - x).max() / np.abs(x).max())
    t = np.arange(1000)
    fast, slow = np.sin(2 * np.pi * t / 20), np.sin(2 * np.pi * t / 200)
    dec = decompose(fast + slow)
    c_fast = np.corrcoef(dec.imfs[0], fast)[0, 1]
    c_slow = max(np.corrcoef(imf, slow)[0, 1] for imf in dec.imfs[1:])
    ok = worst <= 1e-8 and c_fast > 0.95 and c_slow > 0.95
    report(4, ok, f"reconstruction {worst:.1e} <= 1e-8 on 50 signals, "
                  f"two-tone correlations {c_fast:.3f}/{c_slow:.3f} > 0.95")


def test_criterion_5_superstat_recovery(superstat_series):
    start = time.perf_counter()
    x, beta = superstat_series
    q_true, bq = gamma_to_qgaussian(1.5, 1.0)
    p = np.linspace(-10, 10, 201)
    identity = np.abs(superstat_density(1.5, 1.0, p) - qgaussian_pdf(p, q_true, bq)).max()
    fit = fit_qgaussian(x)
    rho = stats.spearmanr(local_volatility(x, 96).beta, beta)[0]
    elapsed = time.perf_counter() - start
    ok = 1.45 <= fit.q <= 1.55 and rho > 0.8 and abs(q_true - 1.5) < 1e-12 and identity < 1e-6 \
        and elapsed < 120
    report(5, ok, f"q_hat {fit.q:.4f} in [1.45, 1.55] (truth {q_true} checked by quadrature "
                  f"to {identity:.0e}), Spearman {rho:.3f} > 0.8, {elapsed:.1f} s < 120 s")


DESK_SCALE = """\
frame = synth/frame.csv
output_dir = out
seed = 0
max_folds = 2
dtype = float32
batch_size = 128
learning_rate = 0.003
max_epochs = 15
patience = 5
"""


def test_criterion_6_forecast_recovery(tmp_path):
    start = time.perf_counter()
    cfg_path = tmp_path / "desk.cfg"
    cfg_path.write_text(DESK_SCALE)
    cfg = PipelineConfig.from_file(cfg_path)
    cmd_synth(cfg)
    fc = cmd_backtest(cfg)
    truth = read_table(tmp_path / "synth" / "truth_forecast.csv")
    truth.index = pd.DatetimeIndex(pd.to_datetime(truth.pop("timestamp"), utc=True))
    truth = to_float(truth).reindex(fc.times)
    corr = np.corrcoef(fc.mu, truth["mu_true"])[0, 1]
    rel = np.median(np.abs(fc.sigma - truth["sigma_true"]) / truth["sigma_true"])
    elapsed = time.perf_counter() - start
    ok = corr >= 0.9 and rel <= 0.25 and elapsed <= 900 and len(fc) > 0
    report(6, ok, f"corr(mu_hat, mu_true) {corr:.4f} >= 0.9, median rel sigma error "
                  f"{rel:.4f} <= 0.25 over {len(fc)} test hours, {elapsed:.0f} s <= 900 s")


def _random_mask(rng, n):
    valid = np.ones(n, dtype=bool)
    for _ in range(int(rng.integers(0, 12))):
        a = int(rng.integers(0, n))
        valid[a:a + int(rng.integers(1, 200))] = False
    if rng.random() < 0.5:
        valid &= rng.random(n) > rng.uniform(0, 0.3)
    return valid


def test_criterion_7_fold_plan():
    rng = np.random.default_rng(77)
    violations = mismatches = n_folds = n_skipped = 0
    for _ in range(200):
        n = 17000 + int(rng.integers(168, 1500))
        start = pd.Timestamp("2019-01-01T00:00:00Z") + pd.Timedelta(hours=int(rng.integers(0, 168)))
        valid = _random_mask(rng, n)
        frame = make_frame(n, valid=valid, start=start.isoformat(), n_features=1)
        try:
            plan = plan_folds(frame)
            folds = [((f.train.start, f.train.stop), (f.val.start, f.val.stop),
                      (f.test.start, f.test.stop)) for f in plan]
            skipped = [(r.start, r.stop, k) for r, k in plan.skipped_weeks]
        except InsufficientDataError:
            folds, skipped = [], None
        exp_folds, exp_skipped = folds_brute(frame.timestamps, valid)
        # with no usable week at all the planner raises instead of listing skips
        skipped = exp_skipped if skipped is None and not exp_folds else skipped
        mismatches += (folds != exp_folds) + (skipped != exp_skipped)
        for (tr, va, te) in folds:
            no_look_ahead = tr[1] <= va[0] and va[1] <= te[0] and tr[0] < tr[1] <= te[0]
            exact = int(valid[tr[0]:va[1]].sum()) == 17000
            violations += (not no_look_ahead) + (not exact)
        violations += sum(k >= 120 for _, _, k in skipped)
        n_folds += len(folds)
        n_skipped += len(skipped)
    ok = violations == 0 and mismatches == 0 and n_folds > 0 and n_skipped > 0
    report(7, ok, f"200 masks, {n_folds} folds, {n_skipped} skipped weeks, "
                  f"{violations} invariant violations, {mismatches} walker mismatches")


def test_criterion_8_reference_numbers_gate(tmp_path):
    # same-order MAE passes the gate, a factor-3 miss fails it; the gate is off by default
    times = pd.date_range("2019-01-07", periods=24 * 7 * 60, freq="h", tz="UTC")
    year = times.year.astype(str)
    ref_mae = np.array([REFERENCE_TABLE[y][1] for y in year])
    rng = np.random.default_rng(8)
    y = 50 + 20 * rng.standard_normal(len(times))

    def gate_for(scale):
        mu = y + scale * ref_mae * np.sign(rng.standard_normal(len(times)))
        pd.DataFrame({"timestamp": times.strftime("%Y-%m-%dT%H:%M:%SZ"), "mu": mu, "sigma": 5.0,
                      "price_true": y}).to_csv(tmp_path / "fc.csv", index=False)
        (tmp_path / "run.cfg").write_text("forecast = fc.csv\n")
        cfg = PipelineConfig.from_file(tmp_path / "run.cfg")
        rep, default_gate = cmd_report(cfg)
        return rep, default_gate, magnitude_gate(rep)

    rep, default_gate, near = gate_for(1.5)
    _, _, far = gate_for(3.5)
    layout = list(rep.columns) == ["year", "nll", "mae", "smape"]
    ok = default_gate is None and layout and all(near.values()) and not any(far.values()) \
        and set(near) == {"2019", "2020"}
    report(8, ok, "reference yearly values are not reproduced at desk scale by design; "
                  "report layout year,nll,mae,smape; optional gate off by default, "
                  "accepts MAE within a factor 3 and rejects a factor 3.5 miss")


def test_criterion_9_qgaussian_beats_gaussian(superstat_series):
    x, _ = superstat_series
    fit = fit_qgaussian(x)
    mu, sd = fit_gaussian(x)
    gauss_ll = qgaussian_loglik(x, 1.0, 1.0 / (2 * sd * sd), mu)
    report(9, fit.loglik > gauss_ll,
           f"q-Gaussian log-likelihood {fit.loglik:.1f} > Gaussian {gauss_ll:.1f}")
