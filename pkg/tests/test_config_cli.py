import json
import subprocess
import sys

import numpy as np
import pytest

from copulaabc import config as cfgmod
from copulaabc import reftable
from copulaabc.cli import main
from copulaabc.models import registry

MINIMAL = """
seed = 3
N = 400
n_sim = 50
n = 50
replicas = 2
methods = ["copulaABCdrf", "rejectionABC"]
q = 0.05
out = "{out}"

[forest]
n_trees = 40

[[model]]
name = "poisson_mixture"
truth = [3.0, 0.0]
"""


def write_config(tmp_path, text=MINIMAL, **fmt):
    p = tmp_path / "c.toml"
    p.write_text(text.format(out=tmp_path / "out", **fmt))
    return p


# --- config ----------------------------------------------------------------------------------

def test_missing_seed_named():
    with pytest.raises(cfgmod.ConfigError) as exc:
        cfgmod.from_dict({"N": 10, "n_sim": 5, "model": [{"name": "poisson_mixture"}]})
    assert any(p.startswith("seed") for p in exc.value.problems)


def test_every_problem_listed():
    raw = {"N": -1, "n_sim": "x", "bogus": 1, "methods": ["magic"],
           "forest": {"trees": 3}, "model": [{"name": "nope"}]}
    problems = cfgmod.validate(raw)
    for key in ("seed", "N", "n_sim", "bogus", "methods", "forest.trees", "model[0].name"):
        assert any(p.startswith(key) for p in problems), key


def test_truth_length_checked():
    raw = {"seed": 1, "N": 10, "n_sim": 5, "model": [{"name": "poisson_mixture", "truth": [1.0]}]}
    with pytest.raises(cfgmod.ConfigError, match="truth"):
        cfgmod.from_dict(raw)


def test_overrides_and_forest_seed():
    raw = {"seed": 1, "N": 10, "n_sim": 5, "forest": {"n_trees": 7}, "model": [{"name": "poisson_mixture"}]}
    rc = cfgmod.from_dict(raw, {"seed": 9, "threads": 2})
    assert rc.seed == 9 and rc.inference.forest.seed == 9 and rc.inference.forest.n_trees == 7
    assert rc.inference.workers == 2


@pytest.mark.parametrize("name", cfgmod.preset_names())
def test_presets_valid(name):
    rc = cfgmod.load(f"preset:{name}")
    assert rc.models and rc.truth is not None
    rc.experiment()


def test_unknown_preset():
    with pytest.raises(cfgmod.ConfigError, match="unknown preset"):
        cfgmod.load("preset:nothing")


# --- CLI ---------------------------------------------------------------------------------------

def run(*argv):
    try:
        return main([str(a) for a in argv])
    except SystemExit as exc:
        return exc.code


def test_build_infer_reject(tmp_path, capsys):
    cfg = write_config(tmp_path)
    table = tmp_path / "t.bin"
    assert run("build-table", "--config", cfg, "--out", table) == 0
    assert reftable.load(table).N == 400

    model = registry.poisson_mixture()
    data = model.simulate(np.array([3.0, 0.0]), 50, np.random.default_rng(0))
    obs = tmp_path / "obs.csv"
    np.savetxt(obs, data, delimiter=",")
    out = tmp_path / "inf"
    assert run("infer", "--table", table, "--observed", obs, "--seed", 1, "--out", out) == 0
    lines = (out / "report.csv").read_text().splitlines()
    assert lines[0].startswith("# config_hash=") and lines[2].startswith("copulaABCdrf,lambda,")
    rep = json.loads((out / "report.json").read_text())
    assert rep["config_hash"] == lines[0].split("=")[1]
    for f in ("weights_lambda.csv", "density_mu.csv"):
        assert (out / "plots" / f).read_text().startswith("# config_hash=")

    out2 = tmp_path / "rej"
    assert run("reject", "--table", table, "--summaries", "3.0,0.1", "--q", 0.05, "--out", out2) == 0
    assert (out2 / "report.csv").read_text().splitlines()[2].startswith("rejectionABC,")

    assert run("infer", "--table", table, "--summaries", "3,0", "--method", "magic") == 2
    assert run("infer", "--table", table, "--summaries", "3,0,1") == 2
    assert "error" in capsys.readouterr().err


def test_infer_thread_count_invariant(tmp_path):
    cfg = write_config(tmp_path)
    table = tmp_path / "t.bin"
    run("build-table", "--config", cfg, "--out", table)
    outs = []
    for th in (1, 3):
        o = tmp_path / f"o{th}"
        assert run("infer", "--config", cfg, "--table", table, "--summaries", "3.1,0.2",
                   "--threads", th, "--out", o) == 0
        outs.append((o / "report.csv").read_bytes())
    assert outs[0] == outs[1]


def test_missing_seed_exit_code(tmp_path, capsys):
    p = tmp_path / "bad.toml"
    p.write_text('N = 10\nn_sim = 5\n[[model]]\nname = "poisson_mixture"\n')
    assert run("build-table", "--config", p) == 2
    assert "seed" in capsys.readouterr().err


def test_two_model_table_and_selection(tmp_path):
    text = """
seed = 4
N = 300
n_sim = 30
[forest]
n_trees = 30
[[model]]
name = "price"
truth = [1.0, 0.05]
options = {undirected = true, summaries = ["density", "clustering_avg_local", "var_degree"]}
[[model]]
name = "nlpa"
options = {summaries = ["density", "clustering_avg_local", "var_degree"]}
"""
    cfg = tmp_path / "two.toml"
    cfg.write_text(text)
    table = tmp_path / "t.bin"
    assert run("build-table", "--config", cfg, "--out", table) == 0
    t = reftable.load(table)
    assert set(np.unique(t.model)) == {0, 1}
    out = tmp_path / "sel"
    assert run("select-model", "--table", table, "--summaries", "0.05,0.0,1.0", "--out", out) == 0
    probs = json.loads((out / "model_probs.json").read_text())["probabilities"]
    assert sum(probs) == pytest.approx(1.0)


def test_replicate_single_and_resume(tmp_path):
    text = MINIMAL.replace("replicas = 2", "replicas = 1")
    cfg = write_config(tmp_path, text)
    assert run("replicate", "--config", cfg) == 0
    out = tmp_path / "out"
    lines = (out / "metrics.csv").read_text().splitlines()
    assert lines[0].startswith("# config_hash=")
    row = next(l for l in lines if l.startswith("copulaABCdrf,lambda,mean,"))
    assert row.split(",")[4] == ""            # no sd with a single replica
    prov = json.loads((out / "provenance.json").read_text())
    assert prov["seed"] == 3 and "numpy" in prov["versions"]
    first = (out / "metrics.csv").read_bytes()
    assert run("replicate", "--config", cfg) == 0   # resumes from replica files
    assert (out / "metrics.csv").read_bytes() == first


def test_export_csv(tmp_path):
    cfg = write_config(tmp_path)
    table = tmp_path / "t.bin"
    run("build-table", "--config", cfg, "--out", table)
    assert run("export-csv", "--table", table, "--out", tmp_path / "t.csv") == 0
    text = (tmp_path / "t.csv").read_text().splitlines()
    assert text[0].startswith("# config_hash=") and text[1].startswith("model,lambda,mu,")


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "copulaabc", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.strip()
