import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from greenkam.errors import ConjugatePointError, GreenKamError
from greenkam.flow import FlowConfig
from greenkam.green import (LagrangianGraph, assemble_pair, dynamical_criterion_check,
                            green_bundles, green_bundles_batch, monotonicity_scan, pushed_vertical)
from greenkam.model import make_model

TWO_PI = 2 * np.pi
# rotating orbits with |p| >= 2 need a finer step than the default to meet the energy budget
FINE = FlowConfig(step=2.5e-3)


@pytest.mark.parametrize("t", [0.25, 0.5, 1.0, 2.0])
def test_pushed_vertical_at_the_saddle(pendulum, t):
    # linearisation q'' = k^2 q: the image of the vertical after time t has slope k coth(k t)
    ref = TWO_PI / np.tanh(TWO_PI * t)
    assert pushed_vertical(pendulum, [0.0, 0.0], t).S[0, 0] == pytest.approx(ref, rel=1e-6)
    assert pushed_vertical(pendulum, [0.0, 0.0], -t).S[0, 0] == pytest.approx(-ref, rel=1e-6)


@pytest.mark.parametrize("t", [0.5, 2.0, 7.0])
def test_pushed_vertical_free_rotor(free_rotor, t):
    assert pushed_vertical(free_rotor, [0.3, 0.5], t).S[0, 0] == pytest.approx(1 / t, rel=1e-9)
    assert pushed_vertical(free_rotor, [0.3, 0.5], -t).S[0, 0] == pytest.approx(-1 / t, rel=1e-9)


def test_green_pair_at_the_saddle(pendulum):
    pair = green_bundles(pendulum, [0.0, 0.0])
    assert pair.s_plus.S[0, 0] == pytest.approx(TWO_PI, abs=1e-5)
    assert pair.s_minus.S[0, 0] == pytest.approx(-TWO_PI, abs=1e-5)
    assert pair.p_dim == 0
    assert pair.lam == pytest.approx(2 * TWO_PI, abs=1e-5)
    assert all(v > 0 for v in pair.order_margins().values())


def test_integrable_models_have_full_kernel(free_rotor, mane_rotor):
    fr = green_bundles(free_rotor, [0.1, 0.5])
    mr = green_bundles(mane_rotor, [0.1, 0.2, 0.0, 0.0])
    assert fr.p_dim == 1 and np.allclose(fr.s_plus.S, 0, atol=1e-6)
    assert mr.p_dim == 2 and np.allclose(mr.s_minus.S, 0, atol=1e-6)
    assert fr.certificate["limit_plus"] == "extrapolated"


def test_batch_matches_single(pendulum, mane_rotor):
    xs = np.array([[0.0, 0.0], [0.0, 0.0]])
    batch = green_bundles_batch(pendulum, xs)
    assert np.allclose(batch[1].s_plus.S, green_bundles(pendulum, xs[0]).s_plus.S, atol=1e-12)
    ys = np.array([[0.0, 0.0, 0.0, 0.0], [0.4, 0.1, 0.5, -0.5]])
    for pair in green_bundles_batch(mane_rotor, ys):
        assert pair.p_dim == 2


def test_conjugate_point_on_elliptic_orbit(pendulum):
    # the bottom of the well is elliptic: verticals refocus after half a period
    with pytest.raises(ConjugatePointError) as err:
        pushed_vertical(pendulum, [0.5, 0.0], 1.0)
    assert 0.4 < err.value.time < 0.6


MONOTONE_BASES = {
    "FreeRotor": [[0.0, 0.5], [0.7, -1.2]],
    "Pendulum": [[0.0, 0.0], [0.0, 2.5]],
    "ManeRotor": [[0.0, 0.0, 0.0, 0.0], [0.3, 0.6, 0.2, -0.1]],
    "MechanicalT2": [[0.0, 0.0, 0.0, 0.0]],
}


@pytest.mark.parametrize("name", sorted(MONOTONE_BASES))
def test_monotonicity_scan_passes_on_builtins(name):
    model = make_model(name)
    for x in MONOTONE_BASES[name]:
        rep = monotonicity_scan(model, x, (0.5, 1.0, 2.0, 4.0), FINE)
        assert rep.verdict == "PASS", (x, rep.offending)


@settings(max_examples=25)
@given(q=st.floats(0, 1), p=st.floats(-2, 2), t1=st.floats(0.2, 2.0), t2=st.floats(2.1, 6.0))
def test_free_rotor_family_is_ordered(q, p, t1, t2):
    fr = make_model("FreeRotor", validate=False)
    rep = monotonicity_scan(fr, [q, p], (t1, t2))
    assert rep.verdict == "PASS"


def test_dynamical_criterion_free_rotor(free_rotor):
    rep = dynamical_criterion_check(free_rotor, [0.0, 0.5], [0.0, 1.0], 10.0)
    assert rep.forward[-1] == pytest.approx(10.0)
    assert rep.forward_verdict == "DIVERGES" and not rep.in_minus
    assert rep.consistent


def test_dynamical_criterion_at_the_saddle(pendulum):
    pair = green_bundles(pendulum, [0.0, 0.0])
    v = np.array([1.0, -TWO_PI])  # stable direction = G-
    rep = dynamical_criterion_check(pendulum, [0.0, 0.0], v, 3.0, pair=pair)
    assert rep.in_minus and not rep.in_plus
    assert rep.forward_verdict == "BOUNDED" and rep.backward_verdict == "DIVERGES"
    assert rep.consistent


def test_graph_distance():
    g = LagrangianGraph(np.array([[2.0]]))
    assert g.distance([1.0, 2.0]) == pytest.approx(0.0, abs=1e-15)
    assert g.distance([0.0, 1.0]) == pytest.approx(1 / np.sqrt(5))
    with pytest.raises(GreenKamError):
        LagrangianGraph(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_pair_order_is_enforced():
    with pytest.raises(GreenKamError):
        assemble_pair(np.array([[1.0]]), np.array([[0.0]]))
    pair = assemble_pair(np.diag([-1.0, 0.0]), np.diag([1.0, 0.0]))
    assert pair.p_dim == 1 and pair.lam == pytest.approx(2.0)
    assert np.allclose(pair.projector, np.diag([1.0, 0.0]))
