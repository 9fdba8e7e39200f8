from __future__ import annotations

import numpy as np
import pytest

from jumpbridge.core import Dataset, RngSpec, TimeGrid
from jumpbridge.synthdata import MertonParams, daily_grid, gen_merton


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: runs for more than a few seconds")


@pytest.fixture
def small_grid() -> TimeGrid:
    return daily_grid(5, 20)


@pytest.fixture
def merton_small(small_grid) -> Dataset:
    return gen_merton(MertonParams(), small_grid, 40, stream=RngSpec(11))


def make_dataset(values, dt: float = 1.0, substeps: int = 10, names=None) -> Dataset:
    values = np.asarray(values, dtype=float)
    if values.ndim == 2:
        values = values[:, :, None]
    return Dataset(values, TimeGrid.uniform(values.shape[1] - 1, dt, substeps), (), names)


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES: list[str] = []


def record_criterion(name: str, ok: bool, detail: str) -> bool:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
