import numpy as np
import pytest
from hypothesis import strategies as st

from wiretap_guessing.core_types import DistortionMeasure, Distribution


def dist_strategy(min_size=2, max_size=4, floor=0.0):
    """Probability vectors built from positive weights."""
    return st.integers(min_size, max_size).flatmap(
        lambda k: st.lists(st.floats(floor, 1.0), min_size=k, max_size=k)
        .filter(lambda w: sum(w) > 1e-3)
        .map(lambda w: Distribution.normalize(w))
    )


@pytest.fixture
def hamming2():
    return DistortionMeasure.hamming(2)


@pytest.fixture
def hamming3():
    return DistortionMeasure.hamming(3)


def random_distortion(rng, rows, cols):
    d = rng.random((rows, cols))
    d[np.arange(rows), rng.integers(0, cols, rows)] = 0.0
    return DistortionMeasure(d)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
