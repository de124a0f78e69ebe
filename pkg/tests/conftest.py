import numpy as np
import pytest
from hypothesis import settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from roughdrift.tensor_core import GroupElement, anti

settings.register_profile("repo", deadline=None, max_examples=60, derandomize=True)
settings.load_profile("repo")

finite = st.floats(-5.0, 5.0, allow_nan=False, allow_infinity=False)


@st.composite
def geometric_elements(draw, d=None):
    """Random weakly geometric elements: symmetric part forced by level 1."""
    d = draw(st.integers(1, 3)) if d is None else d
    a = draw(arrays(np.float64, (d,), elements=finite))
    M = draw(arrays(np.float64, (d, d), elements=finite))
    return GroupElement(a, 0.5 * np.outer(a, a) + anti(M))


def random_geometric(rng, d, scale=1.0):
    a = scale * rng.standard_normal(d)
    M = scale**2 * rng.standard_normal((d, d))
    return GroupElement(a, 0.5 * np.outer(a, a) + anti(M))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(LINES, key=lambda s: int(s.split("#")[1].split()[0])):
            terminalreporter.write_line(line)
