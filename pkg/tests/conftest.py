import math

import pytest
from hypothesis import HealthCheck, settings

from magflow.dynamics import MagneticSystem

settings.register_profile("magflow", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("magflow")

# energy used by the orbit-search tests; below the measured tau_plus of the default field
K_ORBIT = 0.004

ACCEPTANCE = {}


def record(criterion: int, ok: bool, detail: str) -> None:
    """Store and print one pass/fail line for an acceptance criterion."""
    line = f"criterion {criterion:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[criterion] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for c in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[c])


@pytest.fixture(scope="session")
def osc():
    return MagneticSystem.oscillating()


@pytest.fixture(scope="session")
def const():
    return MagneticSystem.constant(1.0)


@pytest.fixture(scope="session")
def orbit_run(osc):
    """Minimizer and first mountain pass at ``K_ORBIT`` (shared by several modules)."""
    from magflow.action import iterate_loop
    from magflow.search import find_local_min, mountain_pass, negative_disc_seed

    seed = negative_disc_seed(osc, K_ORBIT, 64)
    cp = find_local_min(seed, osc, K_ORBIT)
    valley = iterate_loop(cp.loop, 2, osc.group)
    mp = mountain_pass(cp, valley, 1, osc, K_ORBIT)
    return {"k": K_ORBIT, "seed": seed, "minimizer": cp, "valley": valley, "mp": mp}


def circle_period(r, k):
    return 2.0 * math.pi * math.sinh(r) / math.sqrt(2.0 * k)
