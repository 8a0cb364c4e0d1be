import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from greenkam.green import green_bundles
from greenkam.lyapunov import (classify_spectrum, lyapunov_spectra, lyapunov_spectrum,
                               stable_direction, verify_theorem_two)
from greenkam.model import MODELS, make_model

TWO_PI = 2 * np.pi


def test_saddle_exponents(pendulum):
    spec = lyapunov_spectrum(pendulum, [0.0, 0.0], T=50.0)
    assert spec.exponents == pytest.approx([TWO_PI, -TWO_PI], rel=1e-3)
    assert spec.sum_defect() < 1e-9


def test_mechanical_t2_origin(mechanical_t2):
    # q'' = (2 pi)^2 K q with K = [[a1 + b, b], [b, a2 + b]]; exponents are +-2 pi sqrt(eig K)
    K = np.array([[1.2, 0.2], [0.2, 0.7]])
    rates = TWO_PI * np.sqrt(np.linalg.eigvalsh(K))
    ref = np.concatenate([rates[::-1], -rates])
    spec = lyapunov_spectrum(mechanical_t2, np.zeros(4), T=100.0)
    assert spec.exponents == pytest.approx(ref, rel=1e-2)


@pytest.mark.parametrize("name,x", [("FreeRotor", [0.2, 0.7]), ("ManeRotor", [0.1, 0.9, 0.3, -0.2])])
def test_integrable_spectra_vanish(name, x):
    spec = lyapunov_spectrum(make_model(name), x, T=100.0)
    assert np.max(np.abs(spec.exponents)) <= 1e-3


@pytest.mark.parametrize("name", sorted(MODELS))
def test_pairing_on_random_orbits(name):
    model = make_model(name)
    n = model.n
    rng = np.random.default_rng(11)
    xs = np.concatenate([rng.uniform(0, 1, (250, n)), rng.uniform(-1, 1, (250, n))], axis=1)
    for spec in lyapunov_spectra(model, xs, T=20.0):
        assert spec.pairing_defect() <= 2 * spec.zero_tol
        assert np.all(np.diff(spec.exponents) <= 0)


@settings(max_examples=200)
@given(vals=st.lists(st.floats(-5, 5), min_size=1, max_size=6), tol=st.floats(1e-3, 1.0))
def test_classification_partitions_the_spectrum(vals, tol):
    cls = classify_spectrum(np.array(sorted(vals, reverse=True)), tol)
    assert cls.zero + cls.pos + cls.neg == len(vals)


def test_classify_flags_borderline_values():
    cls = classify_spectrum(np.array([0.015, -0.015]), 0.01)
    assert cls.indeterminate


def test_theorem_two_verdicts(pendulum, free_rotor, mane_rotor):
    sad = verify_theorem_two(pendulum, [0.0, 0.0], T=50.0)
    assert (sad.p_from_green, sad.counts, sad.verdict) == (0, (0, 1, 1), "CONSISTENT-WITH-CAVEAT")
    fr = verify_theorem_two(free_rotor, [0.0, 0.5], T=50.0)
    assert (fr.p_from_green, fr.counts, fr.verdict) == (1, (2, 0, 0), "CONSISTENT")
    mr = verify_theorem_two(mane_rotor, [0.0, 0.0, 0.0, 0.0], T=50.0)
    assert (mr.p_from_green, mr.counts, mr.verdict) == (2, (4, 0, 0), "CONSISTENT")


def test_stable_direction_lies_in_g_minus(pendulum):
    pair = green_bundles(pendulum, [0.0, 0.0])
    v = stable_direction(pendulum, [0.0, 0.0])[:, 0]
    assert pair.s_minus.distance(v) < 1e-8


def test_step_outside_range_is_rejected(pendulum):
    with pytest.raises(ValueError):
        lyapunov_spectrum(pendulum, [0.0, 0.0], T=10.0, step=2.0)
