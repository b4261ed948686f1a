import json

import numpy as np
import pytest

from stochfire import io
from stochfire.cli import main

CFG = {"height": 20, "width": 20, "seed_cells": [[10, 10]], "max_steps": 30}


@pytest.fixture
def cfg_path(tmp_path):
    p = tmp_path / "sim.json"
    p.write_text(json.dumps(CFG))
    return str(p)


def simulate(cfg_path, out, *extra):
    return main(["simulate", cfg_path, "--out", str(out), *map(str, extra)])


def outputs(d):
    return json.loads((d / "manifest.json").read_text())["outputs"]


def test_s0_payloads_identical(tmp_path, cfg_path):
    assert simulate(cfg_path, tmp_path / "a", "--sims", 10, "--s-level", 0) == 0
    files = sorted((tmp_path / "a").glob("*.ffca"))
    assert len(files) == 10
    heads = [io.read_trace_header(f) for f in files]
    payloads = {f.read_bytes()[io._FFCA_HEADER.size:] for f in files}
    assert len(payloads) == 1
    assert [h["sim_index"] for h in heads] == list(range(10))


def test_determinism_across_workers(tmp_path, cfg_path):
    simulate(cfg_path, tmp_path / "w1", "--sims", 12, "--s-level", 20, "--workers", 1)
    simulate(cfg_path, tmp_path / "w8", "--sims", 12, "--s-level", 20, "--workers", 8)
    simulate(cfg_path, tmp_path / "again", "--sims", 12, "--s-level", 20)
    assert outputs(tmp_path / "w1") == outputs(tmp_path / "w8") == outputs(tmp_path / "again")


def test_force_required(tmp_path, cfg_path, capsys):
    simulate(cfg_path, tmp_path / "o", "--sims", 2)
    assert simulate(cfg_path, tmp_path / "o", "--sims", 2) == 1
    assert "--force" in capsys.readouterr().err
    assert simulate(cfg_path, tmp_path / "o", "--sims", 3, "--force") == 0
    assert len(list((tmp_path / "o").glob("*.ffca"))) == 3


def test_invalid_config(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"density": 3}))
    assert simulate(str(p), tmp_path / "o") == 2
    assert not (tmp_path / "o" / "manifest.json").exists()


def test_seed_failure_removes_partial_outputs(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(dict(CFG, density=0.0)))
    assert simulate(str(p), tmp_path / "o", "--sims", 2) == 2
    assert not list((tmp_path / "o").glob("*"))


def test_stats(tmp_path, cfg_path):
    simulate(cfg_path, tmp_path / "t0", "--sims", 4, "--s-level", 0, "--length", 25)
    assert main(["stats", str(tmp_path / "t0"), "--out", str(tmp_path / "st")]) == 0
    v = io.read_stat_map(tmp_path / "st" / "stats.ffst")
    assert set(np.unique(v)) <= {0.0, 1.0}
    assert len(io.read_csv(tmp_path / "st" / "macro.csv")) == 25
    man = json.loads((tmp_path / "st" / "manifest.json").read_text())
    assert man["sim_indices"] == [0, 1, 2, 3]


def test_stats_refuses_mixed(tmp_path, cfg_path):
    simulate(cfg_path, tmp_path / "a", "--sims", 2, "--s-level", 0)
    simulate(cfg_path, tmp_path / "b", "--sims", 2, "--s-level", 10, "--first-index", 5)
    (tmp_path / "a" / "trace_000005.ffca").write_bytes((tmp_path / "b" / "trace_000005.ffca").read_bytes())
    assert main(["stats", str(tmp_path / "a"), "--out", str(tmp_path / "st")]) == 2


def test_stats_bad_magic(tmp_path, cfg_path, capsys):
    simulate(cfg_path, tmp_path / "a", "--sims", 2)
    f = tmp_path / "a" / "trace_000001.ffca"
    f.write_bytes(b"NOPE" + f.read_bytes()[4:])
    assert main(["stats", str(tmp_path / "a"), "--out", str(tmp_path / "st")]) == 2
    assert "trace_000001.ffca" in capsys.readouterr().err


@pytest.fixture
def train_eval(tmp_path, cfg_path):
    simulate(cfg_path, tmp_path / "train", "--sims", 20, "--s-level", 20, "--length", 30)
    simulate(cfg_path, tmp_path / "eval", "--sims", 20, "--s-level", 20, "--length", 30,
             "--first-index", 20)
    main(["stats", str(tmp_path / "train"), "--out", str(tmp_path / "stat")])
    return tmp_path / "stat" / "stats.ffst", tmp_path / "eval"


def test_evaluate_time(tmp_path, train_eval):
    fc, ev = train_eval
    assert main(["evaluate", str(fc), str(ev), "--metrics", "mse", "--out", str(tmp_path / "r")]) == 0
    rows = io.read_csv(tmp_path / "r" / "report.csv")
    assert any(r["stratum_kind"] == "overall" and r["metric"] == "mse" and r["value"] for r in rows)


def test_evaluate_dc(tmp_path, train_eval):
    fc, ev = train_eval
    rc = main(["evaluate", str(fc), str(ev), "--metrics", "recall,mse", "--stratify", "dc",
               "--out", str(tmp_path / "r")])
    assert rc == 0
    rows = io.read_csv(tmp_path / "r" / "report.csv")
    recall = [r for r in rows if r["metric"] == "recall"]
    assert [r["stratum_kind"] for r in recall] == ["dc"] * 10 + ["overall"]


def test_evaluate_variance(tmp_path, train_eval):
    fc, ev = train_eval
    rc = main(["evaluate", str(fc), str(ev), "--metrics", "recall", "--stratify", "variance",
               "--out", str(tmp_path / "r")])
    assert rc == 0
    assert (tmp_path / "r" / "sd_vs_var.csv").exists()


def test_evaluate_errors(tmp_path, train_eval, capsys):
    fc, ev = train_eval
    out = str(tmp_path / "r")
    assert main(["evaluate", str(fc), str(ev), "--metrics", "brier", "--out", out]) == 1
    assert "auc_pr" in capsys.readouterr().err
    train = tmp_path / "train"
    assert main(["evaluate", str(fc), str(train), "--out", out]) == 2
    (tmp_path / "empty").mkdir()
    assert main(["evaluate", str(fc), str(tmp_path / "empty"), "--out", out]) == 2
    io.write_stat_map(tmp_path / "small.ffst", np.zeros((30, 5, 5)))
    assert main(["evaluate", str(tmp_path / "small.ffst"), str(ev), "--out", out]) == 2


def test_experiment_cli(tmp_path):
    cfg = tmp_path / "e.json"
    cfg.write_text(json.dumps({"sim": CFG, "n_sims": 10, "s_levels": [0, 10], "t_end": 20}))
    assert main(["experiment", "sweep", str(cfg), "--out", str(tmp_path / "x")]) == 0
    rows = io.read_csv(tmp_path / "x" / "fig3a_macro.csv")
    assert {r["s_level"] for r in rows} == {"0.0", "10.0"}
    with pytest.raises(SystemExit) as exc:
        main(["experiment", "bogus", "--out", str(tmp_path / "y")])
    assert exc.value.code == 1


def test_usage_errors():
    for argv in ([], ["simulate"], ["evaluate", "only-one"]):
        with pytest.raises(SystemExit) as exc:
            main(argv)
        assert exc.value.code == 1


def test_help_lists_flags(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["simulate", "--help"])
    assert exc.value.code == 0
    text = capsys.readouterr().out
    for flag in ("--sims", "--s-level", "--seed", "--out", "--workers", "--force"):
        assert flag in text
