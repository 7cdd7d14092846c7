import json

import numpy as np
import pytest

from emulkit.cli import main
from emulkit.synthetic import gen_synthetic
from emulkit.tensorfield import read_container, write_container


def _out(tmp_path, name):
    return ["--out-dir", str(tmp_path / name)]


def test_help(capsys):
    assert main(["--help"]) == 0
    assert "spectral-check" in capsys.readouterr().out
    assert main(["rollout-eval", "--help"]) == 0


def test_usage_errors(tmp_path):
    assert main([]) == 2
    assert main(["no-such-command"]) == 2
    assert main(["simulate-sched", "--strategy", "greedy"]) == 2


def test_spectral_check_passes(tmp_path):
    out = tmp_path / "spec"
    assert main(["spectral-check", "--seeds", "5", "--out-dir", str(out)]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "spectral-check" and manifest["seed"] == 0
    rows = (out / "spectral-check.tsv").read_text().splitlines()
    assert rows[0].split("\t") == ["identity", "max_rel_err", "tolerance", "pass"]
    assert all(r.endswith("yes") for r in rows[1:])


def test_spectral_check_tolerance_failure(tmp_path):
    args = ["spectral-check", "--seeds", "2", "--tol-scale", "0"] + _out(tmp_path, "s")
    assert main(args) == 1


def test_missing_container(tmp_path):
    args = ["rollout-eval", "--container", str(tmp_path / "nope.ckt")] + _out(tmp_path, "r")
    assert main(args) == 2
    args = ["augment", "--container", str(tmp_path / "nope.ckt"),
            "--output", str(tmp_path / "x.ckt")] + _out(tmp_path, "a")
    assert main(args) == 2


def test_gen_synthetic_and_rollout_eval(tmp_path):
    gen = tmp_path / "gen"
    assert main(["gen-synthetic", "--extents", "16,16", "--steps", "8",
                 "--out-dir", str(gen)]) == 0
    container = gen / "advection_000.ckt"
    assert len(read_container(container)) == 8
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"model": "linear", "history": 2, "targets": [8, 8],
                               "train_steps": 5, "lr": 0.01}))
    out = tmp_path / "roll"
    assert main(["rollout-eval", "--container", str(container), "--config", str(cfg),
                 "--horizon", "3", "--report", "vrmse,spectrum", "--out-dir", str(out)]) == 0
    rows = (out / "rollout-eval.tsv").read_text().strip().splitlines()
    assert len(rows) == 4 and "vrmse_mean" in rows[0] and "hf_fraction_pred" in rows[0]
    assert main(["rollout-eval", "--container", str(container), "--horizon", "30"]
                + _out(tmp_path, "r2")) == 2


def test_bad_config(tmp_path):
    traj = gen_synthetic("advection", (8, 8), 6, seed=0)
    write_container(traj, tmp_path / "t.ckt")
    cfg = tmp_path / "cfg.json"
    cfg.write_text("{not json")
    args = ["rollout-eval", "--container", str(tmp_path / "t.ckt"), "--config", str(cfg)]
    assert main(args + _out(tmp_path, "r")) == 2


def test_augment_round_trip(tmp_path):
    traj = gen_synthetic("mixed", (8, 8, 8), 3, seed=1)
    write_container(traj, tmp_path / "in.ckt")
    args = ["augment", "--container", str(tmp_path / "in.ckt"), "--output",
            str(tmp_path / "out.ckt"), "--element", "5"] + _out(tmp_path, "aug")
    assert main(args) == 0
    out = read_container(tmp_path / "out.ckt")
    assert len(out) == 3 and out.template.extents == (8, 8, 8)
    assert np.isclose(np.sum(out.stack() ** 2), np.sum(traj.stack() ** 2))


def test_simulate_sched(tmp_path):
    cat = tmp_path / "cat.txt"
    cat.write_text("a 2 10 0.0\nb 3 20 0.2\n")
    out = tmp_path / "sched"
    args = ["simulate-sched", "--catalog", str(cat), "--strategy", "tied", "--steps", "200",
            "--ranks", "8", "--group-size", "4", "--out-dir", str(out)]
    assert main(args) == 0
    assert (out / "simulate-sched.tsv").exists()
    assert main(["simulate-sched", "--compare", "--steps", "100"] + _out(tmp_path, "c")) == 0
    cat.write_text("broken line\n")
    assert main(args) == 2


def test_jitter_demo_modes(tmp_path):
    assert main(["jitter-demo", "--seeds", "20"] + _out(tmp_path, "j")) == 0
    assert main(["jitter-demo", "--mode", "averaged", "--n", "16", "--plan", "2,2,2,2"]
                + _out(tmp_path, "k")) == 0
