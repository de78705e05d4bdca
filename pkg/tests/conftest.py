import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from cowcka.model import ExperimentParams, FreeParams  # noqa: E402
from cowcka.montecarlo import run_protocol  # noqa: E402
from cowcka.optimizer import OptimizerConfig, sweep  # noqa: E402

SWEEP_DISTANCES = [float(d) for d in np.arange(0, 601, 10)]

DESK_FP = FreeParams(0.5, 0.2)
DESK_EP = ExperimentParams(
    dark_count_rate=1e-4,
    time_misalignment=0.001,
    interference_misalignment=0.01,
    total_distance_km=50,
)
DESK_SLOTS = 10**7
DESK_SEED = 2021

# filled by test_acceptance, printed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def _timed_sweep(e_prime: float):
    t0 = time.perf_counter()
    rows = sweep(ExperimentParams(interference_misalignment=e_prime), SWEEP_DISTANCES, OptimizerConfig(), workers=1)
    return rows, time.perf_counter() - t0


@pytest.fixture(scope="session")
def sweep_1pct():
    return _timed_sweep(0.01)


@pytest.fixture(scope="session")
def sweep_3pct():
    return _timed_sweep(0.03)


@pytest.fixture(scope="session")
def desk_run():
    t0 = time.perf_counter()
    stats = run_protocol(DESK_FP, DESK_EP, DESK_SLOTS, DESK_SEED)
    return stats, time.perf_counter() - t0


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
