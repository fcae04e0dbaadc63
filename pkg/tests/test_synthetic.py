import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from dapf.app.pipeline import run_fold
from dapf.dataset import FEATURE_COLUMNS, load_csv, plan_folds, save_csv
from dapf.errors import DataError
from dapf.metrics import mae
from dapf.neural import LstmConfig
from dapf.superstats import local_volatility
from dapf.synthetic import (
    gen_forecastable_frame,
    gen_superstat_series,
    true_mean_price,
    true_sigma,
    write_sources,
)


def plain_kurtosis(x):
    x = x - x.mean()
    return np.mean(x**4) / np.mean(x**2) ** 2


# --- superstatistical series ------------------------------------------------------


def test_point_mass_beta_is_gaussian():
    k = 1e8
    x, beta = gen_superstat_series(k, 0.5 / k, 96, 1000, seed=0)
    np.testing.assert_allclose(beta, 0.5, rtol=1e-3)
    se = np.sqrt(24 / x.size)
    assert abs(plain_kurtosis(x) - 3.0) < 4 * se


def test_gamma_mixture_is_leptokurtic():
    x, beta = gen_superstat_series(1.5, 1.0, 96, 1000, seed=1)
    assert x.shape == (96_000,) and beta.shape == (1000,)
    assert plain_kurtosis(x) > 3.5


def test_block_construction():
    x, beta = gen_superstat_series(2.0, 0.3, 16, 4000, seed=2)
    blocks = x.reshape(4000, 16)
    # within-block variance tracks 1/(2 beta)
    ratio = blocks.var(axis=1, ddof=1) * 2 * beta
    assert abs(ratio.mean() - 1.0) < 0.02


def test_superstat_determinism():
    a = gen_superstat_series(1.5, 1.0, 96, 50, seed=7)
    b = gen_superstat_series(1.5, 1.0, 96, 50, seed=7)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])
    c = gen_superstat_series(1.5, 1.0, 96, 50, seed=8)
    assert not np.array_equal(a[0], c[0])


def test_superstat_errors():
    with pytest.raises(DataError):
        gen_superstat_series(0.0, 1.0, 96, 10)
    with pytest.raises(DataError):
        gen_superstat_series(1.0, -1.0, 96, 10)
    with pytest.raises(DataError):
        gen_superstat_series(1.0, 1.0, 7, 10)


@settings(max_examples=10)
@given(st.integers(0, 2**32 - 1), st.sampled_from([96, 168]), st.floats(1.0, 4.0))
def test_beta_recovery_rank_correlation(seed, block_len, k):
    x, beta = gen_superstat_series(k, 1.0, block_len, 500, seed=seed)
    est = local_volatility(x, block_len).beta
    assert stats.spearmanr(est, beta)[0] > 0.8


# --- forecastable frame -------------------------------------------------------------


@pytest.fixture(scope="module")
def generated():
    return gen_forecastable_frame(20000, seed=3)


def test_frame_schema_round_trip(generated, tmp_path):
    frame, truth = generated
    assert frame.columns == tuple(FEATURE_COLUMNS)
    assert len(frame) == 20000 and frame.valid.all()
    path = tmp_path / "frame.csv"
    save_csv(frame, path)
    back = load_csv(path, schema=FEATURE_COLUMNS)
    np.testing.assert_array_equal(back.features, frame.features)
    np.testing.assert_array_equal(back.target, frame.target)
    assert (truth.times == frame.timestamps).all()


def test_frame_truth_consistency(generated):
    frame, truth = generated
    np.testing.assert_array_equal(truth.mu, true_mean_price(frame.features))
    np.testing.assert_array_equal(truth.sigma, true_sigma(frame.features))
    z = (frame.target - truth.mu) / truth.sigma
    assert abs(z.mean()) < 0.05 and abs(z.std() - 1) < 0.05
    assert truth.sigma.std() / truth.sigma.mean() > 0.2  # heteroskedastic


def test_noiseless_and_constant_sigma():
    frame, truth = gen_forecastable_frame(20000, seed=4, noise_scale=0.0)
    np.testing.assert_array_equal(frame.target, truth.mu)
    _, flat = gen_forecastable_frame(20000, seed=4, constant_sigma=True)
    assert np.unique(flat.sigma).size == 1


def test_frame_determinism():
    a, ta = gen_forecastable_frame(20000, seed=5)
    b, tb = gen_forecastable_frame(20000, seed=5)
    np.testing.assert_array_equal(a.features, b.features)
    np.testing.assert_array_equal(a.target, b.target)
    np.testing.assert_array_equal(ta.sigma, tb.sigma)


def test_frame_minimum_length():
    with pytest.raises(DataError):
        gen_forecastable_frame(19999, seed=0)


def test_write_sources_layout(tmp_path):
    paths = write_sources(tmp_path, 20000, seed=6, pl_solar_cutover="2020-04-10")
    assert set(paths) == {"prices", "power", "nuclear", "fuels"}
    for p in paths.values():
        assert p.exists() and p.stat().st_size > 0


# --- trained-model checks (small model, one short fold) ------------------------------


SMALL = dict(depth=1, width=16, dropout=0.0, dtype="float32", batch_size=128,
             learning_rate=5e-3, max_epochs=20, patience=5, seq_len=24)


def _train_one_fold(**gen_kw):
    frame, truth = gen_forecastable_frame(20000, seed=11, **gen_kw)
    fold = plan_folds(frame, train_hours=6000).folds[0]
    _, _, fc = run_fold(frame, fold, LstmConfig(**SMALL), seed=1)
    pos = frame.timestamps.get_indexer(fc.times)
    return frame.target[pos], truth, pos, fc


def test_noiseless_price_is_learned():
    y, _, _, fc = _train_one_fold(noise_scale=0.0)
    y_noisy, _, _, fc_noisy = _train_one_fold()
    assert mae(y, fc.mu) < 0.25 * y.std()
    assert mae(y, fc.mu) < 0.5 * mae(y_noisy, fc_noisy.mu)
    assert fc.sigma.mean() < fc_noisy.sigma.mean()


def test_constant_sigma_is_learned_flat():
    _, truth, pos, fc = _train_one_fold(constant_sigma=True)
    assert fc.sigma.std() / fc.sigma.mean() < 0.2
    assert np.median(np.abs(fc.sigma - truth.sigma[pos]) / truth.sigma[pos]) < 0.25
