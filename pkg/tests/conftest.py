from __future__ import annotations

import sys

import numpy as np
import pytest

from vexbench.backends import StubServer


class ScriptedClock:
    """Fake clock: each (start, stop) pair of reads spans the next scripted duration.

    Every start reads 0.0 so that ``stop - start`` reproduces the scripted
    value bit-for-bit; only differences within a pair are meaningful.
    """

    def __init__(self, durations):
        self.durations = list(durations)
        self.reads = 0
        self._pending = False

    def __call__(self) -> float:
        self.reads += 1
        self._pending = not self._pending
        return 0.0 if self._pending else self.durations.pop(0)


@pytest.fixture
def scripted_clock():
    return ScriptedClock


@pytest.fixture(scope="session")
def stub():
    with StubServer(port=0) as server:
        yield server


def random_corpus(n: int, d: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.standard_normal((n, d)).astype(np.float32)


@pytest.fixture
def corpus_factory():
    return random_corpus


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "VERDICTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda v: int(v.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
