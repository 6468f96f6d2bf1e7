import numpy as np
import pytest

from bidirelay.channel import ChannelConfig, generate_channels
from bidirelay.types import LINKS, ChannelRealization, NodeGeometry, ProblemInstance


def make_instance(n=8, seed=0, snr_db=20.0, r=(0.0, 0.0), w=(1.0, 1.0), position=0.5):
    ch = generate_channels(ChannelConfig(geometry=NodeGeometry.on_segment(position),
                                         n_subcarriers=n, seed=seed))
    p = 10.0 ** (snr_db / 10.0)
    return ProblemInstance(ch, w[0], w[1], r[0], r[1], p, p, p)


def flat_channels(n, value=1.0):
    return ChannelRealization({link: np.full(n, value) for link in LINKS})


@pytest.fixture
def instance():
    return make_instance()


_CRITERIA: dict[int, str] = {}


@pytest.fixture
def report():
    """Record and print the one-line verdict of an acceptance criterion."""
    def emit(number: int, ok: bool, detail: str) -> None:
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        _CRITERIA[number] = line
        print(line)
    return emit


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[number])
