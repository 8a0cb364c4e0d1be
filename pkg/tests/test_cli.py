import json
from pathlib import Path

import numpy as np
import pytest

from greenkam.cli import Report, emit_plotdata, main, parse_scenario, parse_scenario_text, run, write_report
from greenkam.errors import ScenarioError

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"

FREE_THM2 = """
[scenario]
task = verify-thm2
seed = 5

[model]
name = FreeRotor

[numerics]
base = 0.25, 0.5
lyap_time = 50
"""


def test_pendulum_scenario_echo():
    sc = parse_scenario(SCENARIOS / "pendulum-weakkam.ini")
    assert (sc.model, sc.task, sc.numerics["grid"], sc.numerics["tau"]) == ("Pendulum", "weakkam", 512, 0.2)
    assert sc.parameters == {"amplitude": 1.0}
    # defaults are applied and echoed
    assert sc.echo()["numerics"]["lyap_step"] == 0.5


@pytest.mark.parametrize("path", sorted(SCENARIOS.glob("*.ini")), ids=lambda p: p.stem)
def test_shipped_scenarios_validate(path):
    assert parse_scenario(path).task


@pytest.mark.parametrize("body,line,fragment", [
    ("[scenario]\ntask = weakkam\n[model]\nname = Pendulum\n[numerics]\ngrid = -4\n", 6, "grid"),
    ("[scenario]\ntask = weakkam\n[model]\nname = Pendulum\n[model]\nname = Pendulum\n", 5, "already exists"),
    ("[scenario]\ntask = weakkam\ncolour = red\n[model]\nname = Pendulum\n", 3, "unknown key"),
    ("[scenario]\ntask = dance\n[model]\nname = Pendulum\n", 2, "task"),
    ("[scenario]\ntask = flow\n[model]\nname = Kepler\n", 4, "unknown model"),
    ("[scenario]\ntask = flow\n[model]\nname = Pendulum\nmass = 2\n", 5, "unknown parameter"),
    ("[scenario]\ntask = flow\n[model]\nname = Pendulum\n[numerics]\n\ngrid = 64\n", 7, "at least 128"),
    ("[scenario]\ntask = flow\n[model]\nname = ManeRotor\n[numerics]\nbase = 0, 0\n", 6, "4 coordinates"),
    ("[scenario]\ntask = flow\nseed = -1\n[model]\nname = Pendulum\n", 3, "seed"),
    ("[scenario]\ntask = flow\n[model]\nname = Pendulum\n[extras]\n", 5, "unknown section"),
    ("[scenario]\ntask = flow\n[model]\nname = Pendulum\n[numerics]\nradii = 0.1, 0.01\n", 6, "two decades"),
])
def test_parse_errors_name_the_line(body, line, fragment):
    with pytest.raises(ScenarioError) as err:
        parse_scenario_text(body)
    assert err.value.line == line
    assert fragment in str(err.value) and str(err.value).startswith(f"line {line}:")


def test_verify_thm2_on_free_rotor(tmp_path):
    rep = run(parse_scenario_text(FREE_THM2))
    res = rep.results["verify-thm2"]
    assert res["p"] == 1 and tuple(res["counts"]) == (2, 0, 0)
    assert rep.verdicts == {"verify-thm2": "CONSISTENT"} and rep.exit_code == 0
    paths = write_report(rep, tmp_path)
    assert [p.name for p in paths] == ["report.json", "exponents.csv"]
    assert (tmp_path / "exponents.csv").read_text().splitlines()[0] == "t,lambda1,lambda2"


def test_report_bytes_are_reproducible():
    sc = parse_scenario_text(FREE_THM2.replace("verify-thm2", "c1-diagnostic")
                             + "n_bases = 10\nsamples = 500\n")
    a, b = run(sc), run(sc)
    a.wall_time = b.wall_time = 0.0
    assert a.to_json() == b.to_json()
    c = run(sc, seed=6)
    c.wall_time = 0.0
    assert c.to_json() != a.to_json()


def test_module_errors_are_captured():
    sc = parse_scenario_text("[scenario]\ntask = weakkam\n[model]\nname = Pendulum\n"
                             "[numerics]\ngrid = 128\nmax_iter = 1\n")
    rep = run(sc)
    assert rep.exit_code == 2
    assert rep.errors[0]["task"] == "weakkam" and rep.errors[0]["error"] == "NonConvergenceError"


def test_exit_code_contract():
    rep = Report({})
    rep.verdicts = {"a": "CONSISTENT", "b": "CONSISTENT-WITH-CAVEAT", "c": "INDETERMINATE"}
    assert rep.exit_code == 0
    rep.verdicts["d"] = "INEQUALITY-VIOLATION"
    assert rep.exit_code == 1
    rep.verdicts = {"e": "INCONSISTENT"}
    assert rep.exit_code == 1


def test_plot_schemas(tmp_path):
    rep = Report({})
    rep.tables["slack.csv"] = (["dirX1", "dirY1", "lhs", "rhs", "slack"], np.array([[0.5, 1.0, 2.0, 2.5, 0.5]]))
    (path,) = emit_plotdata(rep, tmp_path)
    assert path.read_text() == "dirX1,dirY1,lhs,rhs,slack\n0.5,1.0,2.0,2.5,0.5\n"


def test_command_line(tmp_path, capsys):
    assert main(["list-models"]) == 0
    assert "Pendulum amplitude=1.0" in capsys.readouterr().out
    scen = tmp_path / "s.ini"
    scen.write_text(FREE_THM2)
    assert main(["validate", str(scen)]) == 0
    echo = json.loads(capsys.readouterr().out)
    assert echo["seed"] == 5 and echo["numerics"]["base"] == [0.25, 0.5]
    out = tmp_path / "out"
    assert main(["run", str(scen), "--out", str(out), "--seed", "2"]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["scenario"]["seed"] == 2 and report["exit_code"] == 0
    bad = tmp_path / "bad.ini"
    bad.write_text("[scenario]\ntask = flow\n[model]\nname = Pendulum\n[numerics]\ngrid = -4\n")
    assert main(["validate", str(bad)]) == 2
    assert "line 6" in capsys.readouterr().err


def test_thread_cap(tmp_path, monkeypatch):
    monkeypatch.setenv("GREENKAM_THREADS", "1")
    scen = tmp_path / "s.ini"
    scen.write_text(FREE_THM2)
    assert main(["run", str(scen), "--out", str(tmp_path / "o")]) == 0
