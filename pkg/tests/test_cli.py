"""Command-line interface: config resolution, runs, manifests, exit codes."""

import csv
import hashlib
import io
import json
import math
import os

import numpy as np
import pytest

import spinsim
from spinsim.cli import (
    ConfigError,
    RunConfig,
    build_parser,
    build_plan,
    main,
)


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    monkeypatch.delenv("SPINSIM_SEED", raising=False)
    monkeypatch.delenv("SPINSIM_THREADS", raising=False)


def plan_for(argv):
    return build_plan(build_parser().parse_args(argv))


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    return rows[0], rows[1:]


ALIGN_SMALL = [
    "--experiment", "align", "--t1", "1", "--dt", "0.01",
    "--stride", "10", "--n-paths", "4",
]


def test_rate_defaults():
    plan = plan_for(["--experiment", "rate"])
    cfg = plan.runs[0]
    assert cfg.t1 == 1e4
    assert cfg.dt == 0.01
    assert cfg.n_paths == 10000
    assert cfg.stride == 100
    assert cfg.seed == 1
    assert cfg.mu0 == "minus-b"
    assert cfg.alpha == 1.0 and cfg.eps == 0.1
    assert cfg.b == "0,0,1"
    assert plan.base == "rate"
    assert plan.threads is None


def test_invalid_model_parameters_exit_2(tmp_path, capsys):
    assert main(ALIGN_SMALL + ["--alpha", "0", "--out-dir", str(tmp_path)]) == 2
    assert "alpha" in capsys.readouterr().err
    assert main(ALIGN_SMALL + ["--eps", "-1", "--out-dir", str(tmp_path)]) == 2
    assert main(ALIGN_SMALL + ["--b", "0,0,0", "--out-dir", str(tmp_path)]) == 2
    assert main(ALIGN_SMALL + ["--dt", "0.3", "--out-dir", str(tmp_path)]) == 2
    assert main(["--experiment", "rate", "--n-paths", "1"]) == 2
    assert main([]) == 2


def test_bad_flag_value_exits_2_via_argparse():
    with pytest.raises(SystemExit) as e:
        main(["--experiment", "nope"])
    assert e.value.code == 2


def test_config_file(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(
        "# comment line\n"
        "experiment = align\n"
        "t1 = 2.0  # trailing comment\n"
        "dt = 0.01\n"
        "stride = 20\n"
        "n_paths = 6\n"
        "seed = 5\n"
        "threads = 4\n"
        "\n"
    )
    plan = plan_for(["--config", str(cfg)])
    c = plan.runs[0]
    assert c.experiment == "align"
    assert c.t1 == 2.0 and c.stride == 20 and c.n_paths == 6 and c.seed == 5
    assert plan.threads == 4


def test_config_file_unknown_key(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("experiment = align\nbogus = 3\n")
    assert main(["--config", str(cfg)]) == 2
    err = capsys.readouterr().err
    assert "bogus" in err and "run.cfg:2" in err


def test_config_file_bad_syntax(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("just words\n")
    assert main(["--config", str(cfg)]) == 2
    cfg.write_text("dt = abc\n")
    assert main(["--config", str(cfg)]) == 2
    assert main(["--config", str(tmp_path / "missing.cfg")]) == 2


def test_precedence_file_env_flag(tmp_path, monkeypatch):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("experiment = align\nseed = 5\nt1 = 1\nstride = 10\nn_paths = 4\n")
    assert plan_for(["--config", str(cfg)]).runs[0].seed == 5
    monkeypatch.setenv("SPINSIM_SEED", "6")
    assert plan_for(["--config", str(cfg)]).runs[0].seed == 6
    assert plan_for(["--config", str(cfg), "--seed", "7"]).runs[0].seed == 7
    monkeypatch.setenv("SPINSIM_THREADS", "3")
    assert plan_for(["--config", str(cfg)]).threads == 3
    assert plan_for(["--config", str(cfg), "--threads", "2"]).threads == 2
    monkeypatch.setenv("SPINSIM_SEED", "abc")
    with pytest.raises(ConfigError):
        plan_for(["--config", str(cfg)])


def test_align_run_schema_and_manifest(tmp_path):
    out = tmp_path / "out"
    assert main(ALIGN_SMALL + ["--out-dir", str(out)]) == 0
    csv_path = out / "align.csv"
    header, rows = read_csv(csv_path)
    assert header == ["t", "observable", "mean", "stderr", "n"]
    assert len(rows) == 10
    assert {r[1] for r in rows} == {"mdotb"}
    assert all(int(r[4]) == 4 for r in rows)
    t = np.array([float(r[0]) for r in rows])
    assert np.allclose(t, np.arange(1, 11) * 0.1, atol=1e-12)
    means = np.array([float(r[2]) for r in rows])
    assert np.all(np.isfinite(means)) and np.all(np.abs(means) <= 1.0 + 1e-9)

    with open(out / "align.manifest.json", encoding="utf-8") as f:
        manifest = json.load(f)
    assert manifest["tool"] == "spinsim"
    assert manifest["version"] == spinsim.__version__
    assert manifest["rng"] == spinsim.RNG_ID
    digest = hashlib.sha256(csv_path.read_bytes()).hexdigest()
    assert manifest["files"][0]["name"] == "align.csv"
    assert manifest["files"][0]["sha256"] == digest
    assert manifest["files"][0]["rows"] == 10
    # the stored run configuration is complete and replayable
    replay_cfg = RunConfig(**manifest["runs"][0])
    replay_cfg.validate()
    assert replay_cfg.n_paths == 4
    assert manifest["summary"]["align"]["n_failed"] == 0


def test_byte_identical_reruns_and_thread_independence(tmp_path):
    args = ["--experiment", "align", "--t1", "1", "--dt", "0.01", "--stride", "10",
            "--n-paths", "600"]
    d1, d2, d3 = (tmp_path / n for n in ("a", "b", "c"))
    assert main(args + ["--out-dir", str(d1), "--threads", "1"]) == 0
    assert main(args + ["--out-dir", str(d2), "--threads", "4"]) == 0
    assert main(args + ["--out-dir", str(d3), "--threads", "4"]) == 0
    data1 = (d1 / "align.csv").read_bytes()
    assert data1 == (d2 / "align.csv").read_bytes()
    assert data1 == (d3 / "align.csv").read_bytes()


def test_from_manifest_replay(tmp_path):
    out = tmp_path / "orig"
    assert main(ALIGN_SMALL + ["--out-dir", str(out)]) == 0
    manifest_path = out / "align.manifest.json"

    replay_dir = tmp_path / "replay"
    assert main(["--from-manifest", str(manifest_path),
                 "--out-dir", str(replay_dir)]) == 0
    assert (replay_dir / "align.csv").read_bytes() == (out / "align.csv").read_bytes()

    # --from-manifest refuses config-carrying flags
    assert main(["--from-manifest", str(manifest_path), "--eps", "0.2"]) == 2

    # a tampered recorded hash must be detected on replay
    m = json.loads(manifest_path.read_text())
    m["files"][0]["sha256"] = "0" * 64
    bad = tmp_path / "tampered.manifest.json"
    bad.write_text(json.dumps(m))
    assert main(["--from-manifest", str(bad), "--out-dir", str(tmp_path / "r2")]) == 4

    # malformed manifests are config errors
    bad.write_text("{not json")
    assert main(["--from-manifest", str(bad)]) == 2
    bad.write_text('{"runs": [{}]}')
    assert main(["--from-manifest", str(bad)]) == 2


def test_assert_pass_fail_and_tol(tmp_path, capsys):
    ok_args = ["--experiment", "align", "--mu0", "plus-b", "--t1", "0.5",
               "--dt", "0.01", "--stride", "10", "--n-paths", "4",
               "--out-dir", str(tmp_path / "ok"), "--assert"]
    assert main(ok_args) == 0
    assert "assert ok" in capsys.readouterr().out

    fail_args = ["--experiment", "align", "--mu0", "minus-b", "--t1", "0.5",
                 "--dt", "0.01", "--stride", "10", "--n-paths", "4",
                 "--out-dir", str(tmp_path / "bad"), "--assert"]
    assert main(fail_args) == 4
    assert "assertion failed" in capsys.readouterr().err
    # an explicit tolerance can waive the same check
    assert main(fail_args[:-1] + ["--assert", "--tol", "2.5"]) == 0


def test_single_path_schemas(tmp_path):
    out = tmp_path / "sp"
    assert main(["--experiment", "align", "--t1", "1", "--dt", "0.01",
                 "--stride", "10", "--n-paths", "1", "--out-dir", str(out)]) == 0
    header, rows = read_csv(out / "align.csv")
    assert header == ["t", "value"]
    assert len(rows) == 10

    assert main(["--experiment", "hysteresis", "--eps", "0.05", "--eta", "0.1",
                 "--dt", "0.001", "--stride", "100", "--n-paths", "1",
                 "--out-dir", str(out)]) == 0
    header, rows = read_csv(out / "hysteresis.csv")
    assert header == ["t", "value", "bound"]
    bound = np.array([float(r[2]) for r in rows])
    t = np.array([float(r[0]) for r in rows])
    from spinsim.dynamics import NormProfile

    assert np.allclose(bound, 1.0 / NormProfile(0.05, 1.0, 0.1).h(t), atol=1e-12)


def test_hysteresis_ensemble_schema_and_validation(tmp_path):
    out = tmp_path / "hy"
    assert main(["--experiment", "hysteresis", "--eps", "0.05", "--eta", "0.1",
                 "--dt", "0.001", "--stride", "100", "--n-paths", "8",
                 "--out-dir", str(out)]) == 0
    header, rows = read_csv(out / "hysteresis.csv")
    assert header == ["t", "observable", "mean", "stderr", "n", "bound"]
    assert {r[1] for r in rows} == {"align"}
    # the sweep owns its start direction
    assert main(["--experiment", "hysteresis", "--mu0", "plus-b"]) == 2
    assert main(["--experiment", "hysteresis", "--b", "0,0,2"]) == 2
    assert main(["--experiment", "hysteresis", "--eta", "-0.1"]) == 2


def test_hitting_run_and_validation(tmp_path, capsys):
    out = tmp_path / "hit"
    assert main(["--experiment", "hitting", "--t-max", "2", "--stride", "10",
                 "--n-paths", "16", "--out-dir", str(out)]) == 0
    header, rows = read_csv(out / "hitting.csv")
    assert header == ["t", "observable", "mean", "stderr", "n"]
    assert {r[1] for r in rows} == {"survival"}
    surv = np.array([float(r[2]) for r in rows])
    assert np.all((0.0 <= surv) & (surv <= 1.0))
    assert np.all(np.diff(surv) <= 1e-12)
    # default eps = 0.3 puts the admissible delta window at (0.914, 1)
    capsys.readouterr()
    assert main(["--experiment", "hitting", "--delta", "0.9"]) == 2
    assert "delta" in capsys.readouterr().err
    assert main(["--experiment", "hitting", "--mu0", "minus-b"]) == 2


def test_io_error_exit_5(tmp_path):
    blocker = tmp_path / "blocked"
    blocker.write_text("a file, not a directory")
    assert main(ALIGN_SMALL + ["--out-dir", str(blocker)]) == 5


def test_preset_plans():
    plan = plan_for(["--preset", "figure1"])
    assert plan.base == "figure1"
    assert [c.label for c in plan.runs] == ["alpha0.5", "alpha1", "alpha2"]
    assert all(c.experiment == "align" and c.n_paths == 1 for c in plan.runs)
    assert [c.alpha for c in plan.runs] == [0.5, 1.0, 2.0]

    plan = plan_for(["--preset", "figure2"])
    assert all(c.experiment == "rate" and c.n_paths == 100 for c in plan.runs)

    plan = plan_for(["--preset", "figure3"])
    assert [c.label for c in plan.runs] == ["forward", "backward"]
    assert all(c.experiment == "hysteresis" and c.eta == 0.01 for c in plan.runs)

    plan = plan_for(["--preset", "figure4"])
    (cfg,) = plan.runs
    assert cfg.eta == 3.1e-5 and cfg.eps == 0.01 and cfg.n_paths == 100
    n_steps = round((1.0 / 3.1e-5) / 0.01)
    assert cfg.dt == 1.0 / n_steps and cfg.stride == 3226
    assert plan_for(["--preset", "figure5"]).runs[0].stride == 323

    # flags override preset pins
    plan = plan_for(["--preset", "figure3", "--n-paths", "4"])
    assert all(c.n_paths == 4 for c in plan.runs)
    with pytest.raises(ConfigError):
        plan_for(["--preset", "figure1", "--experiment", "align"])


def test_preset_figure3_executes_and_reruns_identically(tmp_path):
    args = ["--preset", "figure3", "--dt", "0.001", "--stride", "10"]
    d1, d2 = tmp_path / "r1", tmp_path / "r2"
    assert main(args + ["--out-dir", str(d1)]) == 0
    assert main(args + ["--out-dir", str(d2), "--threads", "2"]) == 0
    for name in ("figure3_forward.csv", "figure3_backward.csv"):
        assert (d1 / name).read_bytes() == (d2 / name).read_bytes()
    header, rows = read_csv(d1 / "figure3_forward.csv")
    assert header == ["t", "value", "bound"]
    with open(d1 / "figure3.manifest.json", encoding="utf-8") as f:
        manifest = json.load(f)
    assert manifest["preset"] == "figure3"
    assert [r["label"] for r in manifest["runs"]] == ["forward", "backward"]
