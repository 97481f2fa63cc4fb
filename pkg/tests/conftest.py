import numpy as np
import pytest

from amastego.grid import ElementGrid, synth_cover


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def cover64():
    return synth_cover(64, 64, seed=7, smoothness=30)


def random_grid(rng, h, w, lo=0, hi=256):
    return ElementGrid(rng.integers(lo, hi, size=(h, w)))


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
