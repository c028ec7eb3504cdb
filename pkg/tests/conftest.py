import numpy as np
import pytest

from mapdeblur.core import EnergyParams, GradientImage


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def params():
    return EnergyParams()


def random_gradients(rng, shape, scale=0.2):
    return GradientImage(scale * rng.standard_normal(shape), scale * rng.standard_normal(shape))


ACCEPTANCE_LINES = {}


def report(number, ok, detail):
    """Record the one-line verdict of an acceptance criterion."""
    ACCEPTANCE_LINES[number] = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(ACCEPTANCE_LINES[number])
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
