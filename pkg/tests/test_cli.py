"""Config parsing, the run/sweep/eval subcommands, and artifact layout."""

import json
import os

import numpy as np
import pytest

from cooprl.cli import main
from cooprl.config import RunConfig, parse_config

FAST = [
    "run.warmup_steps=60",
    "run.phase_steps=30",
    "run.total_steps=240",
    "run.hidden=4,4",
    "sac.batch_size=16",
    "sac.start_steps=20",
]
FAST_FLAGS = [f"--set={s}" for s in FAST]


def test_empty_config_gives_documented_defaults():
    cfg = parse_config(None, [])
    assert cfg == RunConfig()
    assert cfg.local_sample_prob == 0.3
    assert cfg.transfer_gap == 5.0
    assert cfg.warmup_steps == 2_000
    assert cfg.phase_steps == 1_000
    assert cfg.total_steps == 30_000
    assert cfg.local_capacity == 2_000


def test_config_file_sections_and_overrides(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(
        "[run]\nenv = point-sparse\nseed = 3\n\n"
        "[memory]\nlocal_sample_prob = 0.3\nlocal_capacity = 500\n\n"
        "[sac]\nlr = 1e-3\nalpha = 0.1\n"
    )
    cfg = parse_config(str(path), ["run.seed=9", "ppo.epochs=4"])
    assert cfg.env_id == "point-sparse"
    assert cfg.seed == 9  # override beats file
    assert cfg.local_sample_prob == 0.3
    assert cfg.local_capacity == 500
    assert cfg.sac.lr == pytest.approx(1e-3)
    assert cfg.sac.alpha == pytest.approx(0.1)
    assert cfg.ppo.epochs == 4


def test_out_of_range_value_names_the_key():
    with pytest.raises(ValueError, match="local_sample_prob"):
        parse_config(None, ["memory.local_sample_prob=1.5"])


def test_unknown_key_and_section_rejected():
    with pytest.raises(ValueError, match="unknown key"):
        parse_config(None, ["sac.learning_rate=1"])
    with pytest.raises(ValueError, match="unknown section"):
        parse_config(None, ["dqn.lr=1"])
    with pytest.raises(ValueError, match="unknown env"):
        parse_config(None, ["run.env=pendulum"])


def test_missing_config_file_is_an_error():
    with pytest.raises(ValueError, match="not found"):
        parse_config("/nonexistent/path.cfg")


def test_run_subcommand_writes_artifacts(tmp_path, capsys):
    out = tmp_path / "runs"
    rc = main(["run", "--variant=coop", "--env=point-dense", "--seed=0", f"--out={out}"] + FAST_FLAGS)
    assert rc == 0
    cell = out / "coop" / "point-dense" / "seed0"
    for name in ("config.json", "log.csv", "losses.csv", "summary.json"):
        assert (cell / name).is_file()
    ckpts = {p.name for p in (cell / "checkpoints").iterdir()}
    assert {"sac_final.json", "ppo_final.json", "cem_final.json"} <= ckpts
    summary = json.loads((cell / "summary.json").read_text())
    assert summary["total_steps"] >= 240
    assert set(summary["agents"]) == {"sac", "ppo", "cem"}
    echoed = json.loads((cell / "config.json").read_text())
    assert echoed["total_steps"] == 240


def test_run_csv_byte_identical_across_repeats(tmp_path):
    args = ["run", "--variant=coop", "--env=point-dense", "--seed=5"] + FAST_FLAGS
    assert main(args + [f"--out={tmp_path / 'a'}"]) == 0
    assert main(args + [f"--out={tmp_path / 'b'}"]) == 0
    rel = os.path.join("coop", "point-dense", "seed5", "log.csv")
    a = (tmp_path / "a" / rel).read_bytes()
    b = (tmp_path / "b" / rel).read_bytes()
    assert a == b


def test_run_output_root_env_var(tmp_path, monkeypatch):
    monkeypatch.setenv("COOPRL_OUT", str(tmp_path / "envroot"))
    rc = main(["run", "--variant=solo-cem", "--env=point-dense", "--seed=0"] + FAST_FLAGS)
    assert rc == 0
    assert (tmp_path / "envroot" / "solo-cem" / "point-dense" / "seed0" / "log.csv").is_file()


def test_invalid_config_returns_nonzero(capsys):
    rc = main(["run", "--variant=coop", "--set=memory.local_sample_prob=2.0"])
    assert rc == 1
    assert "local_sample_prob" in capsys.readouterr().err


def test_sweep_aggregates_and_matches_hand_stats(tmp_path):
    plan = tmp_path / "plan.cfg"
    plan.write_text(
        "[sweep]\nvariants = solo-cem\nenvs = point-dense\nseeds = 0,1,2\n\n"
        "[run]\nwarmup_steps = 0\nphase_steps = 30\ntotal_steps = 120\nhidden = 4,4\n"
    )
    out = tmp_path / "sweepout"
    rc = main(["sweep", str(plan), f"--out={out}"])
    assert rc == 0
    summary = json.loads((out / "sweep_summary.json").read_text())
    cells = summary["cells"]
    assert len(cells) == 3 and all(c["status"] == "ok" for c in cells)
    group = summary["groups"]["solo-cem|point-dense"]
    returns = np.array([c["max_avg_return"] for c in cells])
    assert group["n_seeds"] == 3
    assert group["max_return_mean"] == pytest.approx(returns.mean())
    assert group["max_return_std"] == pytest.approx(returns.std())  # population std
    for seed in (0, 1, 2):
        assert (out / "solo-cem" / "point-dense" / f"seed{seed}" / "log.csv").is_file()


def test_sweep_ablation_plan_writes_one_curve_file_per_variant(tmp_path):
    plan = tmp_path / "plan.cfg"
    plan.write_text(
        "[sweep]\n"
        "variants = coop, coop-no-transfer, coop-no-local-memory, coop-no-global-memory\n"
        "envs = point-dense\nseeds = 0\n\n"
        "[run]\nwarmup_steps = 40\nphase_steps = 20\ntotal_steps = 160\nhidden = 4,4\n\n"
        "[sac]\nbatch_size = 16\nstart_steps = 10\n"
    )
    out = tmp_path / "ablate"
    assert main(["sweep", str(plan), f"--out={out}"]) == 0
    curves = sorted(out.glob("*/point-dense/seed0/log.csv"))
    assert len(curves) == 4
    summary = json.loads((out / "sweep_summary.json").read_text())
    assert len(summary["groups"]) == 4


def test_sweep_single_cell_std_zero(tmp_path):
    plan = tmp_path / "plan.cfg"
    plan.write_text(
        "[sweep]\nvariants = solo-cem\nenvs = point-dense\nseeds = 4\n\n"
        "[run]\nwarmup_steps = 0\nphase_steps = 30\ntotal_steps = 60\nhidden = 4,4\n"
    )
    out = tmp_path / "one"
    assert main(["sweep", str(plan), f"--out={out}"]) == 0
    summary = json.loads((out / "sweep_summary.json").read_text())
    group = summary["groups"]["solo-cem|point-dense"]
    assert group["n_seeds"] == 1 and group["max_return_std"] == 0.0


def test_sweep_records_cell_failure_and_continues(tmp_path):
    plan = tmp_path / "plan.cfg"
    plan.write_text(
        "[sweep]\nvariants = solo-cem, no-such-variant\nenvs = point-dense\nseeds = 0\n\n"
        "[run]\nwarmup_steps = 0\nphase_steps = 30\ntotal_steps = 60\nhidden = 4,4\n"
    )
    out = tmp_path / "fail"
    rc = main(["sweep", str(plan), f"--out={out}"])
    assert rc == 1  # at least one cell failed
    summary = json.loads((out / "sweep_summary.json").read_text())
    statuses = {c["variant"]: c["status"] for c in summary["cells"]}
    assert statuses["solo-cem"] == "ok"
    assert statuses["no-such-variant"] == "error"
    assert "variant" in [c for c in summary["cells"] if c["status"] == "error"][0]["error"]


def test_sweep_duplicate_cells_rejected(tmp_path):
    plan = tmp_path / "plan.cfg"
    plan.write_text("[sweep]\nvariants = coop\nenvs = point-dense\nseeds = 0,0\n")
    assert main(["sweep", str(plan)]) == 1


def test_eval_subcommand_scores_checkpoint(tmp_path, capsys):
    out = tmp_path / "runs"
    assert main(["run", "--variant=solo-cem", "--env=point-dense", "--seed=0", f"--out={out}"] + FAST_FLAGS) == 0
    ckpt = out / "solo-cem" / "point-dense" / "seed0" / "checkpoints" / "cem_final.json"
    rc = main(["eval", str(ckpt), "--env=point-dense", "--episodes=5"])
    assert rc == 0
    assert "avg_return=" in capsys.readouterr().out


def test_eval_dimension_mismatch_nonzero_exit(tmp_path, capsys):
    out = tmp_path / "runs"
    assert main(["run", "--variant=solo-cem", "--env=point-dense", "--seed=0", f"--out={out}"] + FAST_FLAGS) == 0
    ckpt = out / "solo-cem" / "point-dense" / "seed0" / "checkpoints" / "cem_final.json"
    rc = main(["eval", str(ckpt), "--env=deceptive-corridor"])
    assert rc == 1
    assert "do not match" in capsys.readouterr().err
