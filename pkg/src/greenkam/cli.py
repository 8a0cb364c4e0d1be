"""Scenario files, the batch runner, reports and plot data.

A scenario is an INI file with sections [scenario], [model] and
[numerics].  ``run`` dispatches the requested task to the numerical modules
and returns a Report; ``write_report`` and ``emit_plotdata`` turn it into
report.json plus CSV tables.
"""
from __future__ import annotations

import argparse
import configparser
import contextlib
import csv
import inspect
import json
import math
import os
import re
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .errors import GreenKamError, ScenarioError
from .flow import METHODS, FlowConfig, flow_states, linearized_flow
from .green import green_bundles, monotonicity_scan
from .lyapunov import lyapunov_spectrum, verify_theorem_two
from .model import MODELS, eval_hamiltonian, list_models, make_model
from .regularity import (c1_diagnostic, circle_samples, contingent_cone, default_radii,
                         theorem_three_check, torus_lattice)
from .weakkam import (barrier_comparison_check, lipschitz_graph_check, mather_set_approx,
                      pseudograph, weak_kam_pair)

TASKS = ("flow", "green", "lyapunov", "weakkam", "verify-thm2", "verify-thm3",
         "c1-diagnostic", "full")
FAILING = ("INCONSISTENT", "VIOLATION", "FAIL")
SEED_MAX = 2**64 - 1


# -- scenario ---------------------------------------------------------------------

def _int(lo, hi):
    def conv(s):
        v = int(s)
        if not lo <= v <= hi:
            raise ValueError(f"must lie in [{lo}, {hi}]")
        return v
    return conv


def _float(lo, hi, open_lo=False):
    def conv(s):
        v = float(s)
        if not math.isfinite(v) or v > hi or v < lo or (open_lo and v == lo):
            bracket = "(" if open_lo else "["
            raise ValueError(f"must lie in {bracket}{lo}, {hi}]")
        return v
    return conv


def _choice(options):
    def conv(s):
        if s not in options:
            raise ValueError(f"must be one of {', '.join(options)}")
        return s
    return conv


def _floats(s):
    vals = [float(t) for t in re.split(r"[,\s]+", s.strip()) if t]
    if not vals or not all(math.isfinite(v) for v in vals):
        raise ValueError("expected a list of finite numbers")
    return vals


def _radii(s):
    vals = _floats(s)
    if any(v <= 0 for v in vals) or len(vals) < 2:
        raise ValueError("expected at least two positive radii")
    return vals


SCENARIO_KEYS = {
    "task": (_choice(TASKS), None),
    "seed": (_int(0, SEED_MAX), 0),
    "output": (str, "out"),
}

NUMERIC_KEYS = {
    "grid": (_int(2, 4096), None),
    "tau": (_float(0.05, 0.5), 0.2),
    "tol": (_float(0.0, 1e-2, open_lo=True), 1e-9),
    "max_iter": (_int(1, 100000), 2000),
    "t_max": (_float(1.0, 4096.0), 256.0),
    "green_tol": (_float(0.0, 1e-2, open_lo=True), 1e-6),
    "step": (_float(0.0, 0.1, open_lo=True), 1e-2),
    "method": (_choice(METHODS), "auto"),
    "max_energy_drift": (_float(0.0, 1.0, open_lo=True), 1e-6),
    "flow_time": (_float(-1e3, 1e3), 10.0),
    "lyap_time": (_float(4.0, 1e4), 100.0),
    "lyap_step": (_float(0.1, 1.0), 0.5),
    "base": (_floats, None),
    "radii": (_radii, None),
    "n_bases": (_int(1, 10000), 100),
    "samples": (_int(16, 4096), None),
    "angle_tol": (_float(0.0, math.pi / 2, open_lo=True), 0.05),
    "drift_tol": (_float(0.0, math.pi / 2, open_lo=True), 0.05),
    "side": (_choice(("minus", "plus")), "minus"),
    "barrier_t": (_float(0.05, 10.0), 1.0),
    "patch_radius": (_float(0.0, 0.25, open_lo=True), 0.05),
}

SECTIONS = ("scenario", "model", "numerics")


@dataclass
class Scenario:
    task: str
    model: str
    parameters: dict
    numerics: dict
    seed: int = 0
    output: str = "out"
    source: str | None = None

    def flow_config(self) -> FlowConfig:
        k = self.numerics
        return FlowConfig(step=k["step"], method=k["method"], max_energy_drift=k["max_energy_drift"])

    def echo(self) -> dict:
        return {"task": self.task, "model": self.model, "parameters": dict(self.parameters),
                "numerics": dict(self.numerics), "seed": self.seed, "output": self.output}


def _line_map(text):
    """(section, key) -> 1-based line number of the assignment."""
    where, section = {}, None
    for i, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            where[(section, None)] = i
            continue
        m = re.match(r"([^=:]+?)\s*[=:]", line)
        if m and section is not None:
            where[(section, m.group(1).strip())] = i
    return where


def parse_scenario_text(text: str, source: str | None = None) -> Scenario:
    cp = configparser.ConfigParser(strict=True, interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text, source or "<scenario>")
    except (configparser.DuplicateSectionError, configparser.DuplicateOptionError) as e:
        raise ScenarioError(str(e).split(": ", 1)[-1], line=e.lineno) from None
    except configparser.MissingSectionHeaderError as e:
        raise ScenarioError("key outside any section", line=e.lineno) from None
    except configparser.ParsingError as e:
        line = e.errors[0][0] if e.errors else None
        raise ScenarioError("malformed line", line=line) from None
    lines = _line_map(text)

    for sec in cp.sections():
        if sec not in SECTIONS:
            raise ScenarioError(f"unknown section [{sec}]", line=lines.get((sec, None)))
    for sec in ("scenario", "model"):
        if not cp.has_section(sec):
            raise ScenarioError(f"missing section [{sec}]")

    def convert(sec, key, conv):
        try:
            return conv(cp.get(sec, key))
        except ValueError as e:
            raise ScenarioError(f"{key} = {cp.get(sec, key)!r}: {e}", line=lines.get((sec, key))) from None

    head = {}
    for key in cp.options("scenario"):
        if key not in SCENARIO_KEYS:
            raise ScenarioError(f"unknown key {key!r} in [scenario]", line=lines.get(("scenario", key)))
        head[key] = convert("scenario", key, SCENARIO_KEYS[key][0])
    if "task" not in head:
        raise ScenarioError("[scenario] needs a task", line=lines.get(("scenario", None)))

    if not cp.has_option("model", "name"):
        raise ScenarioError("[model] needs a name", line=lines.get(("model", None)))
    name = cp.get("model", "name")
    if name not in MODELS:
        raise ScenarioError(f"unknown model {name!r}; known: {', '.join(list_models())}",
                            line=lines.get(("model", "name")))
    accepted = inspect.signature(MODELS[name]).parameters
    params = {}
    for key in cp.options("model"):
        if key == "name":
            continue
        if key not in accepted:
            raise ScenarioError(f"unknown parameter {key!r} for {name}", line=lines.get(("model", key)))
        conv = _int(1, 2) if key == "n" else _float(-1e6, 1e6)
        params[key] = convert("model", key, conv)

    numerics = {k: d for k, (_, d) in NUMERIC_KEYS.items()}
    if cp.has_section("numerics"):
        for key in cp.options("numerics"):
            if key not in NUMERIC_KEYS:
                raise ScenarioError(f"unknown key {key!r} in [numerics]", line=lines.get(("numerics", key)))
            numerics[key] = convert("numerics", key, NUMERIC_KEYS[key][0])

    n = int(params.get("n", 1)) if name == "FreeRotor" else (1 if name == "Pendulum" else 2)
    grid_min = 128 if n == 1 else 64
    if numerics["grid"] is None:
        numerics["grid"] = 512 if n == 1 else 64
    elif numerics["grid"] < grid_min:
        raise ScenarioError(f"grid = {numerics['grid']}: must be at least {grid_min} for n = {n}",
                            line=lines.get(("numerics", "grid")))
    if numerics["base"] is None:
        numerics["base"] = [0.0] * (2 * n)
    elif len(numerics["base"]) != 2 * n:
        raise ScenarioError(f"base needs {2 * n} coordinates", line=lines.get(("numerics", "base")))
    if numerics["samples"] is None:
        numerics["samples"] = 1000 if n == 1 else 512
    if numerics["radii"] is not None:
        r = sorted(numerics["radii"], reverse=True)
        if r[0] / r[-1] < 100 * (1 - 1e-9):
            raise ScenarioError("radii must span at least two decades", line=lines.get(("numerics", "radii")))
    return Scenario(head["task"], name, params, numerics, head.get("seed", 0),
                    head.get("output", "out"), source)


def parse_scenario(path) -> Scenario:
    path = Path(path)
    return parse_scenario_text(path.read_text(), str(path))


# -- report -------------------------------------------------------------------------

@dataclass
class Report:
    scenario: dict
    results: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)
    errors: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)
    wall_time: float = 0.0
    version: str = __version__

    @property
    def exit_code(self) -> int:
        if self.errors:
            return 2
        bad = [v for v in self.verdicts.values() if any(f in v for f in FAILING)]
        return 1 if bad else 0

    def to_dict(self) -> dict:
        return {"artifact_version": self.version, "scenario": self.scenario,
                "results": self.results, "verdicts": self.verdicts, "errors": self.errors,
                "tables": sorted(self.tables), "exit_code": self.exit_code,
                "wall_time": self.wall_time}

    def to_json(self) -> str:
        return json.dumps(_plain(self.to_dict()), sort_keys=True, indent=2) + "\n"


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return obj


# -- tasks ----------------------------------------------------------------------------

class _Context:
    """Lazily computed objects shared by tasks of one run."""

    def __init__(self, scenario: Scenario):
        self.sc = scenario
        self.k = scenario.numerics
        self.model = make_model(scenario.model, **scenario.parameters)
        self.cfg = scenario.flow_config()
        self.base = np.asarray(self.k["base"], dtype=float)
        seeds = np.random.SeedSequence(scenario.seed).spawn(2)
        self.cone_rng = np.random.default_rng(seeds[0])
        self.base_seed = int(seeds[1].generate_state(1, np.uint64)[0])
        self._pair = None

    @property
    def pair(self):
        if self._pair is None:
            k = self.k
            self._pair = weak_kam_pair(self.model, k["grid"], k["tau"], k["tol"], k["max_iter"])
        return self._pair

    def support(self):
        """Samples of an invariant set: a flat torus for integrable models, else the pseudograph of u-."""
        p = self.base[self.model.n:]
        if self.model.translation_invariant:
            if self.model.n == 1:
                return circle_samples(float(p[0]), self.k["samples"]), 0.0
            return torus_lattice(self.k["samples"], p), 0.0
        g = pseudograph(self.model, self.pair.u_minus)
        return g.states(), self.pair.u_minus.spacing

    def mather_base(self):
        """Default base on the Mather set for models solved on a grid."""
        if self.model.translation_invariant:
            return self.base
        return mather_set_approx(self.pair).states[0]


def task_flow(ctx, rep):
    model, x = ctx.model, ctx.base
    t = ctx.k["flow_time"]
    x1, _ = flow_states(model, x, t, ctx.cfg)
    M = linearized_flow(model, x, t, ctx.cfg)
    drift = abs(float(eval_hamiltonian(model, x1)) - float(eval_hamiltonian(model, x)))
    rep.results["flow"] = {"t": t, "start": x, "end": x1, "energy_drift": drift,
                           "symplectic_defect": M.symplectic_defect()}


def task_green(ctx, rep):
    pair = green_bundles(ctx.model, ctx.base, ctx.k["t_max"], ctx.k["green_tol"], ctx.cfg)
    scan = monotonicity_scan(ctx.model, ctx.base, (0.5, 1.0, 2.0, 4.0), ctx.cfg)
    rep.results["green"] = {"s_minus": pair.s_minus.S, "s_plus": pair.s_plus.S, "delta": pair.delta,
                            "p_dim": pair.p_dim, "lambda": pair.lam,
                            "certificate": pair.certificate, "order_margins": pair.order_margins(),
                            "monotonicity": scan.verdict}
    rep.verdicts["green.monotonicity"] = scan.verdict


def _spectrum_table(spec):
    d = len(spec.exponents)
    header = ["t"] + [f"lambda{i}" for i in range(1, d + 1)]
    rows = np.column_stack([spec.times, spec.history])
    return header, rows


def task_lyapunov(ctx, rep):
    spec = lyapunov_spectrum(ctx.model, ctx.base, ctx.k["lyap_time"], ctx.k["lyap_step"], ctx.cfg)
    rep.results["lyapunov"] = {"exponents": spec.exponents, "T": spec.T, "slope": spec.slope,
                               "zero_tol": spec.zero_tol, "pairing_defect": spec.pairing_defect()}
    verdict = "PASS" if spec.pairing_defect() <= 2 * spec.zero_tol else "FAIL"
    rep.verdicts["lyapunov.pairing"] = verdict
    rep.tables["exponents.csv"] = _spectrum_table(spec)


def _grid_table(u, g):
    n = u.n
    q = [f"q{i}" for i in range(1, n + 1)] if n > 1 else ["q"]
    du = [f"du{i}" for i in range(1, n + 1)] if n > 1 else ["du"]
    vals = np.column_stack([g.q, u.flat(), g.du])
    rows = [list(r) + [int(k)] for r, k in zip(vals, g.mask)]
    return q + ["u"] + du + ["mask"], rows


def task_weakkam(ctx, rep):
    pair = ctx.pair
    mather = mather_set_approx(pair)
    lip = lipschitz_graph_check(pair)
    gm, gp = pseudograph(ctx.model, pair.u_minus), pseudograph(ctx.model, pair.u_plus)
    comps = []
    for q0 in pair.equality_nodes():
        cmp = barrier_comparison_check(ctx.model, pair, q0, ctx.k["barrier_t"], ctx.k["patch_radius"],
                                       ctx.cfg)
        comps.append({"q0": cmp.q0, "min_slack": cmp.min_slack, "tol": cmp.tol, "verdict": cmp.verdict})
    barrier_verdict = "PASS" if all(c["verdict"] == "PASS" for c in comps) else "FAIL"
    rep.results["weakkam"] = {
        "c": pair.c, "grid": pair.u_minus.m, "tau": pair.tau,
        "residual_minus": pair.residual_minus, "residual_plus": pair.residual_plus,
        "equality_set": pair.equality_nodes(), "mather_states": mather.states,
        "mather_mismatch": mather.mismatch, "order_defect": float(np.max(pair.u_plus.values - pair.u_minus.values)),
        "semiconcavity": lip.K_semiconcave, "lipschitz_fit": lip.K_fit, "barrier": comps,
    }
    rep.verdicts["weakkam.lipschitz"] = lip.verdict
    rep.verdicts["weakkam.barrier"] = barrier_verdict
    rep.tables["u_minus.csv"] = _grid_table(pair.u_minus, gm)
    rep.tables["u_plus.csv"] = _grid_table(pair.u_plus, gp)


def task_thm2(ctx, rep):
    r = verify_theorem_two(ctx.model, ctx.base, ctx.k["lyap_time"], ctx.cfg, ctx.k["lyap_step"])
    rep.results["verify-thm2"] = {"p": r.p_from_green, "counts": r.counts,
                                  "exponents": r.spectrum.exponents, "zero_tol": r.spectrum.zero_tol,
                                  "lower_bound_ok": r.lower_bound_ok, "caveats": r.caveats}
    rep.verdicts["verify-thm2"] = r.verdict
    rep.tables.setdefault("exponents.csv", _spectrum_table(r.spectrum))


def task_thm3(ctx, rep):
    samples, spacing = ctx.support()
    base = ctx.mather_base()
    radii = ctx.k["radii"] or default_radii(samples)
    cone = contingent_cone(samples, base, radii, ctx.k["drift_tol"], rng=ctx.cone_rng)
    r = theorem_three_check(ctx.model, base, cone, ctx.k["side"], ctx.cfg, spacing=spacing)
    n = ctx.model.n
    rep.results["verify-thm3"] = {"base": base, "side": r.side, "directions": r.directions,
                                  "lhs": r.lhs, "rhs": r.rhs, "rhs_projected": r.rhs_projected,
                                  "sampling_error": r.sampling_error, "notes": r.notes}
    rep.verdicts["verify-thm3"] = r.verdict
    header = ([f"dirX{i}" for i in range(1, n + 1)] + [f"dirY{i}" for i in range(1, n + 1)]
              + ["lhs", "rhs", "slack"])
    rows = np.column_stack([r.directions, r.lhs, r.rhs, r.slack]) if len(r.lhs) else np.zeros((0, 2 * n + 3))
    rep.tables["slack.csv"] = (header, rows)


def task_c1(ctx, rep):
    samples, _ = ctx.support()
    r = c1_diagnostic(ctx.model, samples, n_bases=ctx.k["n_bases"], cfg=ctx.cfg, seed=ctx.base_seed,
                      radii=ctx.k["radii"], T_lyap=ctx.k["lyap_time"], angle_tol=ctx.k["angle_tol"],
                      drift_tol=ctx.k["drift_tol"])
    rep.results["c1-diagnostic"] = {"fraction_pass": r.fraction_pass, "counts": r.counts(),
                                    "angle_tol": r.angle_tol, "notes": r.notes}
    rep.verdicts["c1-diagnostic"] = r.verdict
    n = ctx.model.n
    header = ([f"q{i}" for i in range(1, n + 1)] + [f"p{i}" for i in range(1, n + 1)]
              + ["verdict", "max_angle", "directions"])
    rows = [list(b.base) + [b.verdict, b.max_angle, b.directions] for b in r.bases]
    rep.tables["c1_bases.csv"] = (header, rows)


DISPATCH = {
    "flow": task_flow,
    "green": task_green,
    "lyapunov": task_lyapunov,
    "weakkam": task_weakkam,
    "verify-thm2": task_thm2,
    "verify-thm3": task_thm3,
    "c1-diagnostic": task_c1,
}


def run(scenario: Scenario, seed: int | None = None) -> Report:
    """Run every task of the scenario; module errors are recorded, not raised."""
    if seed is not None:
        scenario = Scenario(scenario.task, scenario.model, scenario.parameters, scenario.numerics,
                            int(seed), scenario.output, scenario.source)
    rep = Report(scenario.echo())
    t0 = time.perf_counter()
    tasks = [t for t in TASKS if t != "full"] if scenario.task == "full" else [scenario.task]
    try:
        ctx = _Context(scenario)
    except (GreenKamError, ValueError) as e:
        rep.errors.append({"task": "setup", "error": type(e).__name__, "message": str(e)})
        tasks = []
    for task in tasks:
        try:
            DISPATCH[task](ctx, rep)
        except (GreenKamError, ValueError, ArithmeticError) as e:
            rep.errors.append({"task": task, "error": type(e).__name__, "message": str(e)})
    rep.wall_time = time.perf_counter() - t0
    return rep


# -- output ---------------------------------------------------------------------------

def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def emit_plotdata(report: Report, out_dir) -> list[Path]:
    """Write every table of the report as CSV; returns the paths in name order."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for name in sorted(report.tables):
        header, rows = report.tables[name]
        path = out / name
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_cell(v) for v in row])
        paths.append(path)
    return paths


def write_report(report: Report, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "report.json"
    path.write_text(report.to_json())
    return [path] + emit_plotdata(report, out)


def _thread_limit():
    """Context capping BLAS/OpenMP pools at GREENKAM_THREADS (no-op when unset)."""
    cap = os.environ.get("GREENKAM_THREADS")
    if not cap:
        return contextlib.nullcontext()
    return threadpool_limits(max(1, int(cap)))


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="greenkam", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run a scenario and write report.json plus CSV tables")
    p_run.add_argument("scenario")
    p_run.add_argument("--out", default=None, help="output directory (default: scenario output key)")
    p_run.add_argument("--seed", type=int, default=None)
    p_val = sub.add_parser("validate", help="parse a scenario and echo it with defaults")
    p_val.add_argument("scenario")
    sub.add_parser("list-models", help="print the model catalog")
    args = ap.parse_args(argv)

    if args.command == "list-models":
        for name in list_models():
            sig = inspect.signature(MODELS[name])
            print(name, " ".join(f"{k}={v.default!r}" for k, v in sig.parameters.items()))
        return 0
    try:
        sc = parse_scenario(args.scenario)
    except ScenarioError as e:
        print(f"{args.scenario}: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(e, file=sys.stderr)
        return 2
    if args.command == "validate":
        print(json.dumps(_plain(sc.echo()), sort_keys=True, indent=2))
        return 0
    if args.seed is not None and not 0 <= args.seed <= SEED_MAX:
        print("seed must be a 64-bit unsigned integer", file=sys.stderr)
        return 2
    with _thread_limit():
        rep = run(sc, args.seed)
    out = args.out or sc.output
    for path in write_report(rep, out):
        print(path)
    for key, verdict in sorted(rep.verdicts.items()):
        print(f"{key}: {verdict}")
    for err in rep.errors:
        print(f"error in {err['task']}: {err['error']}: {err['message']}", file=sys.stderr)
    return rep.exit_code


if __name__ == "__main__":
    sys.exit(main())
