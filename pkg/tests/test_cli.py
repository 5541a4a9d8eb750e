import json

import numpy as np
import pytest
from click.testing import CliRunner

from lpsace.artifacts import read_draws, read_manifest, sha256_file
from lpsace.cli import main
from lpsace.report import validate_report
from lpsace.scenarios import recovery_spec

# short runs trip the small-sample diagnostics warnings on purpose
pytestmark = pytest.mark.filterwarnings("ignore::UserWarning")

FAST = ["--iters", "60", "--warmup", "30", "--chains", "2", "--leapfrog-steps", "6"]


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def panel(tmp_path, runner):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps(recovery_spec(N=150, seed=3).to_json()))
    data = tmp_path / "d.csv"
    res = runner.invoke(main, ["simulate", "--spec", str(spec), "--out", str(data), "--truth", str(tmp_path / "t.csv")])
    assert res.exit_code == 0, res.output
    return data


def fit(runner, data, out, *extra):
    return runner.invoke(main, ["fit", "--data", str(data), "--out", str(out), *FAST, *extra])


def test_simulate_writes_manifest(panel, tmp_path):
    m = read_manifest(tmp_path / "d.manifest.json")
    assert m["command"] == "simulate" and m["dataset"]["sha256"] == sha256_file(panel)
    assert (tmp_path / "t.csv").read_text().startswith("id,G,")


def test_describe(panel, runner):
    res = runner.invoke(main, ["describe", "--data", str(panel)])
    assert res.exit_code == 0
    assert json.loads(res.output)["N"] == 150


def test_fit_is_deterministic(panel, runner, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert fit(runner, panel, a, "--seed", "7").exit_code == 0
    assert fit(runner, panel, b, "--seed", "7").exit_code == 0
    assert a.read_bytes() == b.read_bytes()
    dr = read_draws(a)
    assert dr.draws.shape == (30, 2, 70)
    m = read_manifest(tmp_path / "a.manifest.json")
    assert m["dataset"]["sha256"] == sha256_file(panel)
    assert m["seeds"]["seed"] == 7 and m["paths"]["draws"] == str(a)
    assert set(m["diagnostics"]) >= {"max_rhat", "min_ess", "divergences"}


def test_retained_draws(panel, runner, tmp_path):
    out = tmp_path / "r.csv"
    res = runner.invoke(main, ["fit", "--data", str(panel), "--out", str(out), "--iters", "200", "--warmup", "100",
                               "--chains", "1", "--leapfrog-steps", "4"])
    assert res.exit_code == 0, res.output
    assert read_draws(out).draws.shape[0] == 100


def test_manifest_replay(panel, runner, tmp_path):
    out = tmp_path / "a.csv"
    assert fit(runner, panel, out, "--seed", "3").exit_code == 0
    first = out.read_bytes()
    out.unlink()
    res = runner.invoke(main, ["--config", str(tmp_path / "a.manifest.json"), "fit"])
    assert res.exit_code == 0, res.output
    assert out.read_bytes() == first


def test_yaml_config(panel, runner, tmp_path):
    cfg = tmp_path / "c.yaml"
    out = tmp_path / "y.csv"
    cfg.write_text(f"fit:\n  data: {panel}\n  out: {out}\n  iters: 40\n  warmup: 20\n  chains: 1\n  leapfrog_steps: 3\n")
    res = runner.invoke(main, ["--config", str(cfg), "fit"])
    assert res.exit_code == 0, res.output
    assert read_draws(out).draws.shape == (20, 1, 70)


def test_strict_fails_on_short_run(panel, runner, tmp_path):
    res = runner.invoke(main, ["fit", "--data", str(panel), "--out", str(tmp_path / "s.csv"), "--iters", "12",
                               "--warmup", "2", "--chains", "2", "--leapfrog-steps", "2", "--strict"])
    assert res.exit_code == 3
    assert "R-hat" in res.output


def test_invalid_data_exit_code(runner, tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("id,w,x1,s1,s2,y1,y2\na,1,0,0,1,*,1\nb,0,1,1,1,0,0\n")
    res = runner.invoke(main, ["fit", "--data", str(bad), *FAST])
    assert res.exit_code == 2
    assert "survival not absorbing" in res.output


def test_post_fit_commands(panel, runner, tmp_path):
    draws = tmp_path / "f.csv"
    assert fit(runner, panel, draws).exit_code == 0
    summ = tmp_path / "s.json"
    res = runner.invoke(main, ["summarize", "--draws", str(draws), "--estimand", "sace", "--s", "3", "--out", str(summ), "--thin", "20"])
    assert res.exit_code == 0, res.output
    rows = json.loads(summ.read_text())["sace"]
    assert [(r["s"], r["t_prime"]) for r in rows] == [(3, 1), (3, 2), (3, 3)]
    res = runner.invoke(main, ["summarize", "--draws", str(draws), "--estimand", "strata", "--format", "csv",
                               "--out", str(tmp_path / "s.csv"), "--thin", "10"])
    assert res.exit_code == 0 and res.output.count("\n") == 11

    pp = tmp_path / "p.json"
    res = runner.invoke(main, ["ppc", "--draws", str(draws), "--out", str(pp), "--thin", "10"])
    assert res.exit_code == 0, res.output
    assert len(json.loads(pp.read_text())["checks"]) == 12

    rj, rt = tmp_path / "r.json", tmp_path / "r.txt"
    res = runner.invoke(main, ["report", "--draws", str(draws), "--out", str(rj), "--text", str(rt), "--thin", "20"])
    assert res.exit_code == 0, res.output
    rep = json.loads(rj.read_text())
    validate_report(rep)
    assert len(rep["tables"]["strata"]["rows"]) == 10
    assert "SACE_{1:3}(3)" in rt.read_text()
    assert read_manifest(tmp_path / "r.manifest.json")["command"] == "report"


def test_checksum_mismatch(panel, runner, tmp_path):
    draws = tmp_path / "f.csv"
    assert fit(runner, panel, draws).exit_code == 0
    panel.write_text(panel.read_text().replace("u001,", "u001x,", 1))
    res = runner.invoke(main, ["report", "--draws", str(draws), "--out", str(tmp_path / "r.json")])
    assert res.exit_code == 2 and "checksum" in res.output


def test_help_documents_defaults(runner):
    res = runner.invoke(main, ["fit", "--help"])
    text = " ".join(res.output.split())
    for d in ("default: 2000", "default: 1000", "default: 4]", "default: 0.8", "default: 2.5", "default: 1.05"):
        assert d in text
