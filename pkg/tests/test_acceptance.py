"""Acceptance criteria 1-8; each test records one PASS/FAIL line printed in the terminal summary."""
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import pendulum_u_minus
from greenkam.cli import main
from greenkam.flow import FlowConfig, linearized_flow
from greenkam.green import green_bundles, monotonicity_scan, pushed_vertical
from greenkam.lyapunov import lyapunov_spectra, lyapunov_spectrum, verify_theorem_two
from greenkam.model import MODELS, make_model, torus_distance
from greenkam.regularity import (c1_diagnostic, circle_samples, contingent_cone, default_radii,
                                 theorem_three_check, torus_lattice)
from greenkam.weakkam import LaxOleinik, barrier, barrier_comparison_check, pseudograph, solve_weak_kam

TWO_PI = 2 * np.pi
SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def _check(record, criterion, ok, detail):
    record(criterion, ok, detail)
    print(f"criterion {criterion}: {'PASS' if ok else 'FAIL'} | {detail}")
    assert ok, detail


def test_criterion_1_pendulum_critical_value(record, pendulum, pendulum_pair):
    sol = solve_weak_kam(pendulum, m=512, tau=0.2)
    q = sol.u.nodes()[:, 0]
    err = float(np.max(np.abs(sol.u.values - pendulum_u_minus(q))))
    ok = abs(sol.c - 1.0) <= 0.02 and err <= 0.02
    _check(record, 1, ok, f"c = {sol.c:.12f}, sup |u- - closed form| = {err:.2e}")


def test_criterion_2_conjugate_pair(record, pendulum_pair):
    pair = pendulum_pair
    um, up = pair.u_minus, pair.u_plus
    sym = float(np.max(np.abs(up.values + um.values)))
    eq = pair.equality_nodes()
    near = bool(np.all(torus_distance(eq, np.zeros_like(eq)) <= um.spacing + 1e-15)) and len(eq) > 0
    order = float(np.max(up.values - um.values))
    ok = sym <= 0.02 and near and order <= 0.0
    _check(record, 2, ok, f"sup |u+ + u-| = {sym:.2e}, equality set {eq[:, 0].tolist()}, max(u+ - u-) = {order:.1e}")


def test_criterion_3_green_pair_and_spectrum(record, pendulum):
    pair = green_bundles(pendulum, [0.0, 0.0])
    sp, sm = pair.s_plus.S[0, 0], pair.s_minus.S[0, 0]
    spec = lyapunov_spectrum(pendulum, [0.0, 0.0], T=50.0)
    rep = verify_theorem_two(pendulum, [0.0, 0.0], T=50.0, pair=pair, spectrum=spec)
    lam_err = float(np.max(np.abs(spec.exponents - [TWO_PI, -TWO_PI]))) / TWO_PI
    ok = (abs(sp - TWO_PI) <= 1e-3 and abs(sm + TWO_PI) <= 1e-3 and pair.p_dim == 0
          and lam_err <= 0.01 and rep.p_from_green == 0 and rep.counts == (0, 1, 1)
          and rep.verdict == "CONSISTENT-WITH-CAVEAT")
    _check(record, 3, ok, f"s+ = {sp:.8f}, s- = {sm:.8f}, p = {pair.p_dim}, exponents {spec.exponents.round(6).tolist()} "
                          f"(rel err {lam_err:.1e}), counts {rep.counts}, {rep.verdict}")


@pytest.mark.parametrize("name,x", [("FreeRotor", [0.25, 0.5]), ("ManeRotor", [0.1, 0.2, 0.0, 0.0])])
def test_criterion_4_integrable_theorem_two(record, name, x):
    model = make_model(name)
    n = model.n
    rep = verify_theorem_two(model, x)
    biggest = float(np.max(np.abs(rep.spectrum.exponents)))
    ok = rep.p_from_green == n and rep.zero_count == 2 * n and rep.verdict == "CONSISTENT" and biggest <= 1e-3
    _check(record, 4, ok, f"{name}: p = {rep.p_from_green}, counts {rep.counts}, {rep.verdict}, max |lambda| = {biggest:.1e}")


def test_criterion_5_saturation(record, pendulum, pendulum_pair):
    samples = pseudograph(pendulum, pendulum_pair.u_minus).states()
    cone = contingent_cone(samples, [0.0, 0.0], default_radii(samples))
    rep = theorem_three_check(pendulum, [0.0, 0.0], cone, "minus", spacing=pendulum_pair.u_minus.spacing)
    X = np.abs(cone.directions[:, 0])
    bound = 8 * np.pi * X
    rel_slack = float(np.max(np.abs(rep.slack) / rep.rhs)) if len(X) else np.inf
    rel_lhs = float(np.max(np.abs(rep.lhs - bound) / bound)) if len(X) else np.inf
    rel_rhs = float(np.max(np.abs(rep.rhs - bound) / bound)) if len(X) else np.inf
    ok = len(X) > 0 and rel_slack <= 0.05 and rel_lhs <= 0.05 and rel_rhs <= 0.05
    _check(record, 5, ok, f"{len(X)} cone directions, LHS {rep.lhs.round(4).tolist()}, RHS {rep.rhs.round(4).tolist()}, "
                          f"8 pi |X| = {bound.round(4).tolist()}, max |slack|/RHS = {rel_slack:.2%}, {rep.verdict}")


@pytest.mark.parametrize("name", ["FreeRotor", "ManeRotor"])
def test_criterion_6_c1_diagnostic(record, name):
    model = make_model(name)
    samples = circle_samples(0.5, 1000) if name == "FreeRotor" else torus_lattice(512)
    rep = c1_diagnostic(model, samples, n_bases=100, seed=2024, angle_tol=0.05)
    ok = rep.fraction_pass >= 0.99
    _check(record, 6, ok, f"{name}: {rep.fraction_pass:.0%} of {len(rep.bases)} bases PASS, {rep.verdict}")


# -- criterion 7: property suites ---------------------------------------------------------

@pytest.fixture(scope="module")
def lo_ops():
    return [LaxOleinik(make_model("Pendulum"), 128, 0.2), LaxOleinik(make_model("FreeRotor"), 128, 0.2)]


def _suite(record, label, prop, strategies, cases=1000):
    """Run ``prop`` under hypothesis for ``cases`` examples and record the outcome."""
    count = [0]

    def counted(**kw):
        count[0] += 1
        prop(**kw)

    test = settings(max_examples=cases, database=None)(given(**strategies)(counted))
    try:
        test()
        ok, msg = count[0] >= cases, f"{label}: {count[0]} cases"
    except AssertionError as e:
        ok, msg = False, f"{label}: falsified ({str(e).splitlines()[0] if str(e) else 'assertion'})"
    _check(record, 7, ok, msg)


LO_CASES = dict(seed=st.integers(0, 2**32 - 1), k=st.integers(0, 1), sign=st.sampled_from(["negative", "positive"]))


def test_criterion_7_lo_monotone(record, lo_ops):
    def prop(seed, k, sign):
        rng = np.random.default_rng(seed)
        op = lo_ops[k]
        u = rng.normal(size=op.shape) * rng.uniform(0.01, 5)
        v = u + np.abs(rng.normal(size=op.shape))
        assert np.all(op.apply(u, sign) <= op.apply(v, sign))

    _suite(record, "Lax-Oleinik monotonicity", prop, LO_CASES)


def test_criterion_7_lo_non_expansive(record, lo_ops):
    def prop(seed, k, sign):
        rng = np.random.default_rng(seed)
        op = lo_ops[k]
        u, v = rng.normal(size=(2,) + op.shape) * rng.uniform(0.01, 5)
        gap = np.max(np.abs(op.apply(u, sign) - op.apply(v, sign)))
        assert gap <= np.max(np.abs(u - v)) + 1e-12 * (1 + np.max(np.abs(u)) + np.max(np.abs(v)))

    _suite(record, "Lax-Oleinik non-expansiveness", prop, LO_CASES)


def test_criterion_7_lo_constants(record, lo_ops):
    def prop(seed, k, sign, c):
        rng = np.random.default_rng(seed)
        op = lo_ops[k]
        u = rng.normal(size=op.shape) * rng.uniform(0.01, 5)
        gap = np.max(np.abs(op.apply(u + c, sign) - op.apply(u, sign) - c))
        assert gap <= 1e-12 * (1 + abs(c) + np.max(np.abs(u)))

    _suite(record, "Lax-Oleinik constant commutation (round-off)", prop,
           dict(LO_CASES, c=st.floats(-100, 100)))


def test_criterion_7_symplecticity(record):
    rng = np.random.default_rng(7)
    cfg = FlowConfig(step=2.5e-3)
    worst = 0.0
    cases = 0
    for name in sorted(MODELS):
        model = make_model(name)
        n = model.n
        xs = np.concatenate([rng.uniform(0, 1, (250, n)), rng.uniform(-1.5, 1.5, (250, n))], axis=1)
        for t in (0.5, 2.0):
            F = linearized_flow(model, xs, t, cfg)
            worst = max(worst, F.symplectic_defect(relative=True) / t)
            cases += len(xs)
    ok = worst <= 1e-8 and cases >= 1000
    _check(record, 7, ok, f"cocycle symplecticity: {cases} cases, worst relative defect per unit time {worst:.1e}")


def test_criterion_7_lyapunov_pairing(record):
    rng = np.random.default_rng(8)
    worst, cases = 0.0, 0
    for name in sorted(MODELS):
        model = make_model(name)
        n = model.n
        xs = np.concatenate([rng.uniform(0, 1, (250, n)), rng.uniform(-1, 1, (250, n))], axis=1)
        for spec in lyapunov_spectra(model, xs, T=20.0):
            worst = max(worst, spec.pairing_defect() / spec.zero_tol)
            cases += 1
    ok = worst <= 2.0 and cases >= 1000
    _check(record, 7, ok, f"Lyapunov pairing: {cases} orbits, worst defect / zero_tol = {worst:.3f}")


MONOTONE_BASES = {
    "FreeRotor": [[0.0, 0.5], [0.7, -1.2]],
    "Pendulum": [[0.0, 0.0], [0.0, 2.5]],
    "ManeRotor": [[0.0, 0.0, 0.0, 0.0], [0.3, 0.6, 0.2, -0.1]],
    "MechanicalT2": [[0.0, 0.0, 0.0, 0.0]],
}


def test_criterion_7_riccati_monotonicity(record):
    cfg = FlowConfig(step=2.5e-3)
    verdicts = {}
    for name, bases in sorted(MONOTONE_BASES.items()):
        model = make_model(name)
        verdicts[name] = all(monotonicity_scan(model, x, (0.5, 1.0, 2.0, 4.0), cfg).verdict == "PASS" for x in bases)
    _check(record, 7, all(verdicts.values()), f"Riccati monotonicity scan: {verdicts}")


def test_criterion_7_barrier_second_derivative(record):
    cases = [("Pendulum", [0.0, 0.0], 1.0), ("Pendulum", [0.0, 0.0], 10.0), ("Pendulum", [0.1, 1.5], 1.0),
             ("FreeRotor", [0.3, 0.5], 2.0), ("MechanicalT2", [0.0, 0.0, 0.0, 0.0], 1.0)]
    worst = 0.0
    for name, x, t in cases:
        model = make_model(name)
        for sign in "+-":
            b = barrier(model, x, t, sign, per_axis=3)
            ref = pushed_vertical(model, x, t if sign == "+" else -t).S
            worst = max(worst, float(np.max(np.abs(b.d2_fd - ref))), float(np.max(np.abs(b.d2 - ref))))
    _check(record, 7, worst <= 1e-3, f"barrier d2 vs pushed vertical: {2 * len(cases)} cases, worst gap {worst:.1e}")


def test_criterion_7_barrier_comparison(record, pendulum, pendulum_pair):
    results = []
    for q0 in pendulum_pair.equality_nodes():
        for t in (1.0, 10.0):
            cmp = barrier_comparison_check(pendulum, pendulum_pair, q0, t)
            results.append((float(q0[0]), t, cmp.verdict, cmp.min_slack, cmp.tol))
    ok = all(r[2] == "PASS" for r in results)
    detail = ", ".join(f"q0={q:g} t={t:g} {v} (min slack {s:.1e}, tol {tol:.1e})" for q, t, v, s, tol in results)
    _check(record, 7, ok, f"barrier comparison: {detail}")


# -- criterion 8 -----------------------------------------------------------------------

def _strip_wall_time(text):
    return "\n".join(line for line in text.splitlines() if '"wall_time"' not in line)


@pytest.mark.parametrize("scenario", ["freerotor-full.ini", "pendulum-thm3.ini"])
def test_criterion_8_determinism(record, tmp_path, scenario):
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        main(["run", str(SCENARIOS / scenario), "--out", str(out), "--seed", "17"])
        outs.append(out)
    names = sorted(p.name for p in outs[0].iterdir())
    same = names == sorted(p.name for p in outs[1].iterdir())
    for name in names:
        a, b = ((o / name).read_text() for o in outs)
        if name == "report.json":
            a, b = _strip_wall_time(a), _strip_wall_time(b)
        same = same and a == b
    _check(record, 8, same, f"{scenario}: {len(names)} files byte-identical across two runs with seed 17")
