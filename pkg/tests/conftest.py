import sys
import time
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

ROOT = Path(__file__).resolve().parents[1]
SCENARIO = ROOT / "scenarios" / "cloudy_10loop.toml"


class RunCache:
    """Full closed-loop runs of the shipped scenario, computed once per session."""

    def __init__(self):
        from trough_dmpc.scenario import load_scenario

        self.cfg = load_scenario(SCENARIO)
        self._runs = {}

    def get(self, mode, n_cl_max=None):
        from trough_dmpc.controller import run_closed_loop

        key = (mode, n_cl_max)
        if key not in self._runs:
            t0 = time.perf_counter()
            log = run_closed_loop(self.cfg, mode, n_cl_max=n_cl_max)
            self._runs[key] = (log, time.perf_counter() - t0)
        return self._runs[key]


@pytest.fixture(scope="session")
def full_runs():
    return RunCache()


CRITERIA: dict[int, tuple[bool, str]] = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    """Store and print one acceptance verdict; the test then asserts it."""
    CRITERIA[number] = (bool(ok), detail)
    print(f"CRITERION {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        ok, detail = CRITERIA[number]
        terminalreporter.write_line(f"CRITERION {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
