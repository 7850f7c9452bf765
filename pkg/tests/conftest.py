from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

from tsisc.events import SIGNAL, StreamHeader, make_events, read_binary

FIXTURES = Path(__file__).parent / "fixtures"
EDGE_FIXTURE = FIXTURES / "edge_noise_5hz.evb"

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")

# acceptance criteria append (number, title, passed, detail) here
ACCEPTANCE_LINES: list = []


@pytest.fixture(scope="session")
def edge_fixture():
    return read_binary(EDGE_FIXTURE)


def random_stream(rng, width, height, n, t_max, labels=False, polarity=True):
    t = np.sort(rng.integers(0, t_max, n))
    ev = make_events(t, rng.integers(0, width, n), rng.integers(0, height, n),
                     rng.integers(0, 2, n) if polarity else 1,
                     rng.integers(0, 2, n) if labels else SIGNAL)
    return StreamHeader(width, height, int(t_max), has_labels=labels), ev


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for num, title, ok, detail in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {num:2d}. {title}: {detail}")
