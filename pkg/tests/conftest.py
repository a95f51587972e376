import math

import pytest

from ionbell import crystal as cr
from ionbell import dynamics as dyn
from ionbell import scenarios
from ionbell import sequence as sq

ACCEPTANCE_LINES: dict[int, str] = {}


def record_acceptance(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE_LINES[number] = f"[{'PASS' if passed else 'FAIL'}] criterion {number:2d}: {detail}"
    print(ACCEPTANCE_LINES[number])


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])


@pytest.fixture(scope="session")
def reference_summary():
    crystal = cr.reference_crystal()
    return cr.describe(crystal, cr.BeamGeometry())


@pytest.fixture(scope="session")
def reference_config():
    return scenarios.resolve(scenarios.fixture("gate_fidelity"))


@pytest.fixture(scope="session")
def reference_setup(reference_summary):
    """Calibrated gate at the published timing with unequal per-state forces."""
    mode = reference_summary.in_phase
    dg = 1 / 13.7e-6
    drive = dyn.DriveConfig(mode.frequency + dg, dg, 1.0e5, -0.9e5, 0.8e5, -0.75e5)
    env = dyn.Envelope(13.7e-6)
    drive = dyn.calibrate_drive(drive, env, mode, reference_summary.force_sign, math.pi / 2)
    return sq.GateSetup(drive, env, mode, reference_summary.force_sign)
