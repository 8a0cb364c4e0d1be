import numpy as np
import pytest

from greenkam.flow import FlowConfig
from greenkam.green import pushed_vertical
from greenkam.model import make_model
from greenkam.weakkam import barrier, barrier_comparison_check

TWO_PI = 2 * np.pi
CASES = [
    ("Pendulum", [0.0, 0.0], 1.0),
    ("Pendulum", [0.0, 0.0], 10.0),
    ("Pendulum", [0.1, 1.5], 1.0),
    ("FreeRotor", [0.3, 0.5], 2.0),
    ("MechanicalT2", [0.0, 0.0, 0.0, 0.0], 1.0),
]


@pytest.mark.parametrize("name,x,t", CASES)
@pytest.mark.parametrize("sign", ["+", "-"])
def test_second_derivative_is_the_pushed_vertical(name, x, t, sign):
    model = make_model(name)
    b = barrier(model, x, t, sign, per_axis=3)
    ref = pushed_vertical(model, x, t if sign == "+" else -t).S
    assert np.max(np.abs(b.d2_fd - ref)) <= 1e-3
    assert np.max(np.abs(b.d2 - ref)) <= 1e-3
    assert b.agreement <= 1e-3


def test_saddle_barrier_curvature(pendulum):
    b = barrier(pendulum, [0.0, 0.0], 10.0, "+")
    assert b.d2[0, 0] == pytest.approx(TWO_PI / np.tanh(TWO_PI * 10.0), abs=1e-4)
    # a_t^+ is a paraboloid to second order: remainder ~ d2 h^2 / 2
    h = b.points[:, 0] - b.base[0]
    assert np.max(np.abs(b.remainder() - 0.5 * b.d2[0, 0] * h**2)) < 1e-3


def test_free_rotor_barrier_values(free_rotor):
    # a_t^+(q) = (q - q_{-t})^2 / (2t) + const
    b = barrier(free_rotor, [0.3, 0.5], 2.0, "+")
    assert b.d1 == pytest.approx([0.5], abs=1e-9)
    assert b.d2[0, 0] == pytest.approx(0.5, abs=1e-9)


def test_rejects_bad_arguments(pendulum):
    with pytest.raises(ValueError):
        barrier(pendulum, [0.0, 0.0], 1.0, "x")
    with pytest.raises(ValueError):
        barrier(pendulum, [0.0, 0.0], -1.0)


@pytest.mark.slow
@pytest.mark.parametrize("t", [1.0, 10.0])
def test_comparison_at_equality_set_bases(pendulum, pendulum_pair, t):
    for q0 in pendulum_pair.equality_nodes():
        cmp = barrier_comparison_check(pendulum, pendulum_pair, q0, t)
        assert cmp.verdict == "PASS", (q0, cmp.min_slack, cmp.tol)
