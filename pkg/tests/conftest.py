import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from greenkam.model import make_model
from greenkam.weakkam import weak_kam_pair

settings.register_profile(
    "default", deadline=None, suppress_health_check=[HealthCheck.too_slow], derandomize=True)
settings.load_profile("default")

ACCEPTANCE: dict = {}


@pytest.fixture(scope="session")
def pendulum():
    return make_model("Pendulum")


@pytest.fixture(scope="session")
def free_rotor():
    return make_model("FreeRotor")


@pytest.fixture(scope="session")
def mane_rotor():
    return make_model("ManeRotor")


@pytest.fixture(scope="session")
def mechanical_t2():
    return make_model("MechanicalT2")


@pytest.fixture(scope="session")
def pendulum_pair(pendulum):
    """Conjugate weak KAM pair of the pendulum at m = 512, tau = 0.2 (about 10 s)."""
    return weak_kam_pair(pendulum, m=512, tau=0.2)


@pytest.fixture
def record():
    """record(criterion, ok, detail) stores one line for the acceptance summary."""
    def _record(criterion, ok, detail=""):
        prev = ACCEPTANCE.get(criterion)
        parts = [] if prev is None else prev[1]
        ok_all = bool(ok) and (prev is None or prev[0])
        ACCEPTANCE[criterion] = (ok_all, parts + ([detail] if detail else []))
    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, parts = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'} | {'; '.join(parts)}")


def pendulum_u_minus(q):
    """Closed-form negative weak KAM solution of 1/2 u'^2 + cos(2 pi q) = 1, min 0."""
    q = np.mod(q, 1.0)
    return np.where(q <= 0.5, (2 / np.pi) * (1 - np.cos(np.pi * q)), (2 / np.pi) * (1 + np.cos(np.pi * q)))
