import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings, strategies as st

from rabitomo.qubit import PureState

settings.register_profile("default", max_examples=200, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

thetas = st.floats(0.0, math.pi, allow_nan=False)
phis = st.floats(0.0, 2 * math.pi, allow_nan=False, exclude_max=True)
states = st.builds(PureState, thetas, phis)
angles = st.floats(-4 * math.pi, 4 * math.pi, allow_nan=False)


@st.composite
def unit_vectors(draw):
    v = np.array([draw(st.floats(-1, 1)) for _ in range(3)])
    n = np.linalg.norm(v)
    if n < 1e-3:
        v, n = np.array([0.0, 0.0, 1.0]), 1.0
    return v / n


def random_states(n, seed):
    """Haar-uniform pure states."""
    rng = np.random.default_rng(seed)
    z = rng.uniform(-1, 1, n)
    return [PureState(math.acos(c), p) for c, p in zip(z, rng.uniform(0, 2 * math.pi, n))]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance results, one line per criterion, echoed in the terminal summary
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
