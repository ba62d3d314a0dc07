import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from quadsvr.distribution import EmpiricalSample

settings.register_profile(
    "default",
    deadline=None,
    derandomize=True,
    max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@st.composite
def samples(draw, min_size=1, max_size=12, weighted=None):
    """Small samples on a half-integer grid so ties are common."""
    n = draw(st.integers(min_size, max_size))
    vals = draw(st.lists(st.integers(-20, 20), min_size=n, max_size=n))
    values = np.array(vals, dtype=float) / 2.0
    if weighted is None:
        weighted = draw(st.booleans())
    if not weighted:
        return EmpiricalSample(values)
    raw = np.array(draw(st.lists(st.integers(1, 9), min_size=n, max_size=n)), dtype=float)
    return EmpiricalSample(values, raw / raw.sum())


levels = st.floats(0.0, 1.0, allow_nan=False)
open_levels = st.floats(0.0, 0.999, allow_nan=False)


@pytest.fixture
def s4():
    return EmpiricalSample([1.0, 2.0, 3.0, 4.0])


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
