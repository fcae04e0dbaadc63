import math

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, strategies as st

from oracles import mae_direct, nll_direct, smape_direct
from dapf.errors import DataError, DegenerateInputError
from dapf.metrics import (
    REFERENCE_TABLE,
    magnitude_gate,
    mae,
    nll_metric,
    smape,
    write_report,
    yearly_report,
)
from dapf.neural import ForecastDistribution


def test_mae_examples():
    assert mae([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert mae([0.0, 2.0], [1.0, 1.0]) == 1.0


def test_mae_errors():
    with pytest.raises(DataError):
        mae([1.0], [1.0, 2.0])
    with pytest.raises(DataError):
        mae([], [])


def test_smape_examples():
    assert smape([5.0, -3.0], [5.0, -3.0]) == 0.0
    assert smape([100.0], [50.0]) == pytest.approx(66.6667, abs=5e-5)
    assert smape([-50.0], [50.0]) == 200.0


def test_smape_degenerate_terms():
    score, skipped = smape([0.0, 100.0], [0.0, 50.0], return_skipped=True)
    assert skipped == 1
    assert score == pytest.approx(100 * 50 / 75)
    with pytest.raises(DegenerateInputError):
        smape([0.0, 0.0], [0.0, 0.0])


def test_nll_metric_examples():
    assert nll_metric([3.0], [3.0], [1.0]) == pytest.approx(0.918939, abs=5e-7)
    a = nll_metric([3.0], [3.0], [1.0])
    b = nll_metric([3.0], [3.0], [2.0])
    assert b - a == pytest.approx(math.log(2), abs=1e-12)
    with pytest.raises(DataError):
        nll_metric([1.0], [1.0], [0.0])


def test_metrics_match_direct_summation():
    rng = np.random.default_rng(0)
    for _ in range(100):
        n = int(rng.integers(1, 200))
        y = rng.normal(50, 30, n)
        yhat = y + rng.normal(0, 10, n)
        sigma = rng.uniform(0.5, 20, n)
        assert abs(mae(y, yhat) - mae_direct(y, yhat)) <= 1e-12 * max(1, mae_direct(y, yhat))
        assert abs(smape(y, yhat) - smape_direct(y, yhat)) <= 1e-12 * 100
        assert abs(nll_metric(y, yhat, sigma) - nll_direct(y, yhat, sigma)) <= 1e-12 * 10


finite = st.floats(-1e4, 1e4, allow_nan=False)


@given(st.lists(st.tuples(finite, finite), min_size=1, max_size=50), finite)
def test_metric_properties(pairs, c):
    y = np.array([p[0] for p in pairs])
    yhat = np.array([p[1] for p in pairs])
    m = mae(y, yhat)
    assert m >= 0
    assert mae(y + c, yhat + c) == pytest.approx(m, rel=1e-9, abs=1e-6)
    if np.any(np.abs(y) + np.abs(yhat) > 0):
        s = smape(y, yhat)
        assert 0 <= s <= 200 + 1e-9


def _forecast(times, mu, sigma):
    return ForecastDistribution(pd.DatetimeIndex(times), mu, sigma)


def test_yearly_report_single_year():
    t = pd.date_range("2021-03-01", periods=48, freq="h", tz="UTC")
    rng = np.random.default_rng(1)
    y = rng.normal(50, 5, 48)
    fc = _forecast(t, y + 1, np.full(48, 2.0))
    rep = yearly_report(fc, pd.Series(y, index=t))
    assert list(rep.columns) == ["year", "nll", "mae", "smape"]
    assert list(rep["year"]) == ["2021", "all"]
    assert rep.iloc[0, 1:].tolist() == rep.iloc[1, 1:].tolist()
    assert rep["mae"][0] == pytest.approx(1.0)


def test_yearly_report_drops_empty_year():
    t = pd.date_range("2021-12-31T20:00Z", periods=8, freq="h")
    fc = _forecast(t, np.ones(8), np.ones(8))
    truth = pd.Series(np.r_[np.ones(4), np.full(4, np.nan)], index=t)
    rep = yearly_report(fc, truth)
    assert list(rep["year"]) == ["2021", "all"]


def test_yearly_report_no_overlap():
    t = pd.date_range("2021-01-01", periods=4, freq="h", tz="UTC")
    fc = _forecast(t, np.ones(4), np.ones(4))
    with pytest.raises(DataError):
        yearly_report(fc, pd.Series(np.ones(4), index=t + pd.Timedelta(days=10)))


def test_report_csv_format(tmp_path):
    rows = [{"year": y, "nll": v[0], "mae": v[1], "smape": v[2]} for y, v in REFERENCE_TABLE.items()]
    rep = pd.DataFrame(rows)
    write_report(rep, tmp_path / "r.csv", header="config_hash: x")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "# config_hash: x"
    assert lines[1] == "year,nll,mae,smape"
    assert lines[2] == "2019,2.94,3.73,15.12"
    assert lines[-1] == "all,3.69,11.92,17.42"


def test_magnitude_gate():
    rep = pd.DataFrame({"year": ["2019", "2022", "2030", "all"], "nll": [3.0, 5.0, 1.0, 1.0],
                        "mae": [3.0, 100.0, 1.0, 1000.0], "smape": [1.0, 1.0, 1.0, 1.0]})
    assert magnitude_gate(rep) == {"2019": True, "2022": False}
