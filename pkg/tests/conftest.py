import sys
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")

from dapf.dataset import FEATURE_COLUMNS, TimeSeriesFrame  # noqa: E402


def make_frame(n, valid=None, start="2019-01-07T00:00:00Z", seed=0, n_features=None):
    """Random frame of ``n`` hourly rows (Table I columns unless ``n_features``)."""
    rng = np.random.default_rng(seed)
    cols = FEATURE_COLUMNS if n_features is None else tuple(f"f{i}" for i in range(n_features))
    times = pd.date_range(start, periods=n, freq="h")
    feats = rng.uniform(-100, 1000, (n, len(cols)))
    target = rng.uniform(-50, 300, n)
    valid = np.ones(n, dtype=bool) if valid is None else np.asarray(valid, dtype=bool)
    return TimeSeriesFrame(times, feats, target, valid, cols)


@pytest.fixture
def frame_factory():
    return make_frame


# acceptance criterion outcomes, echoed once more at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
