from __future__ import annotations

import numpy as np
import pytest

from evpipe.core import EVENT_DTYPE, SensorGeometry


def random_stream(rng: np.random.Generator, n: int, geometry: SensorGeometry = SensorGeometry(), mean_dt: float = 20.0):
    """Sorted random events with geometric gaps (ties included)."""
    ev = np.zeros(n, dtype=EVENT_DTYPE)
    ev["t"] = np.cumsum(rng.geometric(1.0 / (mean_dt + 1.0), n) - 1).astype(np.uint64)
    ev["x"] = rng.integers(0, geometry.width, n)
    ev["y"] = rng.integers(0, geometry.height, n)
    ev["p"] = rng.integers(0, 2, n)
    return ev


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one PASS/FAIL line per acceptance criterion, shown in the terminal summary
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance():
    def record(label: str, ok: bool, detail: str) -> bool:
        line = f"criterion {label}: {'PASS' if ok else 'FAIL'} ({detail})"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
