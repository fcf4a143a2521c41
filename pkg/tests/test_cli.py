import json

import jsonschema
import pytest

from periodic_schrodinger.cli import main
from periodic_schrodinger.commands import load_schema


def run(tmp_path, *args):
    return main(["--out", str(tmp_path), "--quiet", *args])


def report(tmp_path, cmd):
    doc = json.loads((tmp_path / cmd / "report.json").read_text())
    jsonschema.validate(doc, load_schema())
    return doc


@pytest.mark.parametrize("cmd", ["constants", "bands", "kernel", "evolve", "lightcone", "vasy"])
def test_subcommands_pass(tmp_path, cmd):
    assert run(tmp_path, cmd) == 0
    doc = report(tmp_path, cmd)
    assert doc["passed"] and doc["command"] == cmd
    assert all(c["passed"] for c in doc["checks"])
    assert doc["config"]["potential"] == [1.0, -1.0]


def test_constants_output(tmp_path, capsys):
    assert main(["--out", str(tmp_path), "constants"]) == 0
    out = capsys.readouterr().out
    assert "C = 37.0" in out and "C3 = 50.26548245743669" in out
    assert out.startswith("== constants ==")


def test_below_threshold_warns(tmp_path, capsys):
    assert main(["--out", str(tmp_path), "constants", "--mu", "3"]) == 3
    assert "WARNING" in capsys.readouterr().out
    assert report(tmp_path, "constants")["warnings"]


def test_narrow_gap_threshold(tmp_path):
    assert run(tmp_path, "constants", "--potential=0,0.01,0.02") == 0
    res = report(tmp_path, "constants")["results"]
    assert res["mu0_exceeds_naive"] is True


@pytest.mark.parametrize("args", [["constants", "--potential", "1,1"], ["constants", "--eps", "2"],
                                  ["--config", "/nonexistent.toml", "constants"], ["sweep", "--mus", "1,2,3,40"]])
def test_config_errors_exit_2(tmp_path, args):
    assert run(tmp_path, *args) == 2


def test_env_override(tmp_path, monkeypatch):
    monkeypatch.setenv("PSCHRO_POTENTIAL", "0,1,2")
    assert run(tmp_path, "constants") == 0
    assert report(tmp_path, "constants")["config"]["potential"] == [0.0, 1.0, 2.0]


def test_config_file(tmp_path):
    cfg = tmp_path / "run.toml"
    cfg.write_text('potential = [0.0, 1.0, 2.0]\nrho0 = 1.5\n')
    assert run(tmp_path, "--config", str(cfg), "constants") == 0
    assert report(tmp_path, "constants")["config"]["rho0"] == 1.5


def test_verify_matching_table(tmp_path):
    assert run(tmp_path, "verify", "--p", "6", "--trials", "50") == 0
    doc = report(tmp_path, "verify")
    assert doc["results"]["matching_layout"]["counts_by_size"] == {"0": 1, "1": 5, "2": 6, "3": 1}
    rows = (tmp_path / "verify" / "matchings_p6.csv").read_text().splitlines()
    assert len(rows) == 1 + 13


def test_verify_fault_injection(tmp_path):
    assert run(tmp_path, "verify", "--p", "4", "--trials", "50", "--perturb-formula") == 1
    doc = report(tmp_path, "verify")
    failed = [c["name"] for c in doc["checks"] if not c["passed"]]
    assert failed and all("determinant" in n for n in failed)


def test_sweep_and_byte_identical_rerun(tmp_path):
    args = ["sweep", "--no-figures", "--no-direct"]
    assert run(tmp_path, *args) == 0
    first = {p.name: p.read_bytes() for p in (tmp_path / "sweep").iterdir() if p.name != "timings.json"}
    assert run(tmp_path, *args) == 0
    second = {p.name: p.read_bytes() for p in (tmp_path / "sweep").iterdir() if p.name != "timings.json"}
    assert first == second
    header = (tmp_path / "sweep" / "sweep.csv").read_text().splitlines()[0]
    assert header.startswith("mu,v_front,v_lr_bound,v_asy_exact_A")
    assert (tmp_path / "sweep" / "scaling.gp").exists()


@pytest.mark.slow
def test_pipeline(tmp_path):
    assert run(tmp_path, "pipeline") == 0
    doc = report(tmp_path, "pipeline")
    assert doc["passed"]
    for sub in ("sweep/sweep.csv", "sweep/scaling.gp", "lightcone/lightcone.gp", "lightcone/lightcone.png",
                "sweep/scaling.png"):
        assert (tmp_path / "pipeline" / sub).exists(), sub


def test_global_flags_after_subcommand(tmp_path):
    assert main(["constants", "--out", str(tmp_path), "--quiet", "--seed", "5"]) == 0
    assert report(tmp_path, "constants")["config"]["seed"] == 5
