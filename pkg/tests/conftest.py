import numpy as np
import pytest

from lattwave.lattice import Field, make_box


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_field(box, rng, scale=1.0):
    return Field(box, scale * (rng.standard_normal(box.shape) + 1j * rng.standard_normal(box.shape)))


@pytest.fixture
def box1():
    return make_box(1, 16)


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
