import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from driftcast.ingest import AisRecord, parse_timestamp  # noqa: E402
from driftcast.models import MLPRegressor  # noqa: E402

T0 = parse_timestamp("2014-11-01T00:00:00Z")

# one line per acceptance criterion, echoed at the end of the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


def make_record(t_offset_s, mmsi=239923000, lat=37.9, lon=25.6, sog=11.3, cog=187.0):
    return AisRecord(mmsi, T0 + int(t_offset_s), lat, lon, sog, cog)


@pytest.fixture
def record():
    return make_record


def random_mlp(hidden, d, seed):
    """A fitted network with random weights and five evaluation rows."""
    rng = np.random.default_rng(seed)
    X, y = rng.normal(size=(20, d)), rng.normal(size=20)
    m = MLPRegressor(hidden_layer_sizes=hidden, epochs=1, seed=seed).fit(X, y)
    m.theta_ = rng.uniform(-1, 1, m.theta_.shape)
    return m, X[:5], y[:5]
