"""Command-line experiment runner.

Subcommands:
    run    train one (variant, env, seed) cell and write its artifacts
    sweep  run a grid of cells from a plan file, then aggregate a summary
    eval   load a mean-network checkpoint and report its evaluation score

Output root resolution: --out flag, else $COOPRL_OUT, else ./runs.
"""

from __future__ import annotations

import argparse
import configparser
import json
import os
import sys

import numpy as np

from cooprl.config import parse_config
from cooprl.envs import make_env
from cooprl.numerics import Mlp
from cooprl.runner import run_experiment
from cooprl.transfer import evaluate_agent


def out_root(args) -> str:
    return args.out or os.environ.get("COOPRL_OUT") or "runs"


def cell_dir(root: str, variant: str, env: str, seed: int) -> str:
    return os.path.join(root, variant, env, f"seed{seed}")


def cmd_run(args) -> int:
    overrides = list(args.set or [])
    if args.variant:
        overrides.append(f"run.variant={args.variant}")
    if args.env:
        overrides.append(f"run.env={args.env}")
    if args.seed is not None:
        overrides.append(f"run.seed={args.seed}")
    config = parse_config(args.config, overrides)
    run_dir = cell_dir(out_root(args), config.variant, config.env_id, config.seed)
    result = run_experiment(config, out_dir=run_dir)
    print(
        f"{config.variant} on {config.env_id} seed {config.seed}: "
        f"max_avg_return={result.summary['max_avg_return']} "
        f"elite={result.summary['elite_agent']} -> {run_dir}"
    )
    return 0


def read_plan(path: str):
    parser = configparser.ConfigParser()
    if not parser.read(path):
        raise ValueError(f"plan file not found: {path}")
    if not parser.has_section("sweep"):
        raise ValueError(f"{path}: plan needs a [sweep] section")
    sweep = dict(parser.items("sweep"))
    unknown = set(sweep) - {"variants", "envs", "seeds"}
    if unknown:
        raise ValueError(f"[sweep]: unknown keys {sorted(unknown)}")

    def split(key, default):
        return [x.strip() for x in sweep.get(key, default).split(",") if x.strip()]

    variants = split("variants", "coop")
    envs = split("envs", "point-dense")
    seeds = [int(s) for s in split("seeds", "0")]
    for name, vals in (("variants", variants), ("envs", envs), ("seeds", seeds)):
        if len(set(vals)) != len(vals):
            raise ValueError(f"[sweep] {name}: duplicate entries")
    overrides = []
    for section in parser.sections():
        if section == "sweep":
            continue
        for key, raw in parser.items(section):
            overrides.append(f"{section}.{key}={raw}")
    return variants, envs, seeds, overrides


def cmd_sweep(args) -> int:
    variants, envs, seeds, overrides = read_plan(args.plan)
    overrides += list(args.set or [])
    root = out_root(args)
    cells = []
    failed = 0
    for variant in variants:
        for env in envs:
            for seed in seeds:
                cell = {"variant": variant, "env": env, "seed": seed}
                try:
                    config = parse_config(
                        None,
                        overrides
                        + [f"run.variant={variant}", f"run.env={env}", f"run.seed={seed}"],
                    )
                    result = run_experiment(
                        config, out_dir=cell_dir(root, variant, env, seed)
                    )
                    cell.update(
                        status="ok",
                        max_avg_return=result.summary["max_avg_return"],
                        elite_agent=result.summary["elite_agent"],
                    )
                except Exception as exc:  # noqa: BLE001 - record and continue
                    failed += 1
                    cell.update(status="error", error=f"{type(exc).__name__}: {exc}")
                cells.append(cell)
                print(f"[sweep] {variant}/{env}/seed{seed}: {cell['status']}")
    summary = {"cells": cells, "groups": aggregate_groups(cells)}
    os.makedirs(root, exist_ok=True)
    with open(os.path.join(root, "sweep_summary.json"), "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
    print(f"[sweep] summary -> {os.path.join(root, 'sweep_summary.json')}")
    return 1 if failed else 0


def aggregate_groups(cells: list[dict]) -> dict:
    """Mean +- population std of max average return per (variant, env)."""
    groups: dict[str, dict] = {}
    for cell in cells:
        if cell.get("status") != "ok":
            continue
        key = f"{cell['variant']}|{cell['env']}"
        g = groups.setdefault(key, {"returns": [], "elites": {}, "seeds": []})
        g["returns"].append(cell["max_avg_return"])
        g["seeds"].append(cell["seed"])
        elite = cell["elite_agent"]
        g["elites"][elite] = g["elites"].get(elite, 0) + 1
    out = {}
    for key, g in groups.items():
        returns = np.asarray(g["returns"], dtype=np.float64)
        out[key] = {
            "n_seeds": len(returns),
            "seeds": g["seeds"],
            "max_return_mean": float(returns.mean()),
            "max_return_std": float(returns.std()),  # population std
            "elite_agents": g["elites"],
        }
    return out


def cmd_eval(args) -> int:
    net = Mlp.load(args.checkpoint)
    env = make_env(args.env)
    if net.in_dim != env.spec.obs_dim or net.out_dim != env.spec.act_dim:
        raise ValueError(
            f"checkpoint dims ({net.in_dim}->{net.out_dim}) do not match env "
            f"{args.env!r} ({env.spec.obs_dim}->{env.spec.act_dim})"
        )
    score = evaluate_agent(net, env, n_episodes=args.episodes, seed_base=args.seed_base)
    print(f"{args.checkpoint} on {args.env}: avg_return={score!r} over {args.episodes} episodes")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cooprl", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="train one (variant, env, seed) cell")
    run_p.add_argument("--config", default=None, help="config file (key=value sections)")
    run_p.add_argument("--variant", default=None)
    run_p.add_argument("--env", default=None)
    run_p.add_argument("--seed", type=int, default=None)
    run_p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE")
    run_p.add_argument("--out", default=None, help="output root (default $COOPRL_OUT or ./runs)")
    run_p.set_defaults(func=cmd_run)

    sweep_p = sub.add_parser("sweep", help="run a plan of cells and aggregate")
    sweep_p.add_argument("plan", help="plan file with a [sweep] section")
    sweep_p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE")
    sweep_p.add_argument("--out", default=None)
    sweep_p.set_defaults(func=cmd_sweep)

    eval_p = sub.add_parser("eval", help="score a mean-network checkpoint")
    eval_p.add_argument("checkpoint")
    eval_p.add_argument("--env", required=True)
    eval_p.add_argument("--episodes", type=int, default=5)
    eval_p.add_argument("--seed-base", type=int, default=2**31)
    eval_p.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
