"""Experiment runner: warm-up, round-robin training, background replay
updates for the global agent, evaluation, transfers, and step accounting.

One run executes, for a single (variant, env, seed) cell:

    warm-up of the global agent for `warmup_steps`
    repeat until the shared ledger reaches `total_steps`:
        for each agent (global first): train for `phase_steps`;
            after each local agent's phase the global agent performs
            `phase_steps` gradient steps on the replay memories
        evaluate every agent (deterministic policy, fixed eval seeds)
        apply gap-gated transfers
        append one CSV row

All training-time environment steps are charged to a shared ledger so the
three agents together consume the same interaction budget as a single
baseline agent. Evaluation rollouts are not charged.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from cooprl.base import TRAIN_SEED_SPAN, AgentBase
from cooprl.cem import CemAgent
from cooprl.config import VARIANT_PRESETS, RunConfig
from cooprl.envs import make_env
from cooprl.memory import (
    GlobalMemory,
    LocalMemory,
    TransferFlags,
    Transition,
    admit_episode,
    pick_mixed_source,
)
from cooprl.numerics import Mlp, params_flatten, params_load
from cooprl.ppo import PpoAgent
from cooprl.sac import SacAgent
from cooprl.transfer import apply_transfers, evaluate_agent

CSV_COLUMNS = (
    "t",
    "iteration",
    "score_global",
    "score_local1",
    "score_local2",
    "best_score",
    "transfer_events",
    "mem_global_size",
    "mem_local_size",
    "local_hit_ratio",
)


class TimestepLedger:
    """Shared environment-step accounting; one increment per env step."""

    def __init__(self, names: list[str]):
        self.per_agent = {name: 0 for name in names}

    def record(self, name: str) -> None:
        self.per_agent[name] += 1

    @property
    def total(self) -> int:
        return sum(self.per_agent.values())


class MixedSampler:
    """Bernoulli(p) choice of local vs global memory, one draw per batch."""

    def __init__(self, gm: GlobalMemory, lm: LocalMemory, p: float):
        self.gm = gm
        self.lm = lm
        self.p = p
        self.draws = 0
        self.local_draws = 0

    def ready(self, batch_size: int) -> bool:
        return len(self.gm) >= batch_size

    def sample_arrays(self, batch_size: int, rng: np.random.Generator):
        store, from_local = pick_mixed_source(self.gm, self.lm, self.p, rng)
        self.draws += 1
        self.local_draws += from_local
        return store.sample_arrays(batch_size, rng)


class UniformSampler:
    """Plain uniform replay from a single buffer."""

    def __init__(self, mem: GlobalMemory):
        self.mem = mem

    def ready(self, batch_size: int) -> bool:
        return len(self.mem) >= batch_size

    def sample_arrays(self, batch_size: int, rng: np.random.Generator):
        return self.mem.sample_arrays(batch_size, rng)


@dataclass
class Wiring:
    agents: list[AgentBase]
    global_agent: AgentBase | None  # top of the transfer hierarchy
    warmup_agent: AgentBase | None
    background: bool  # global agent keeps updating while locals explore
    transfers_enabled: bool
    gm: GlobalMemory
    lm: LocalMemory | None
    mixed_sampler: MixedSampler | None


def build_wiring(config: RunConfig) -> Wiring:
    """Instantiate agents, memories, and samplers for the configured variant."""
    config.validate()
    env_spec = make_env(config.env_id).spec
    gm = GlobalMemory(capacity=config.global_capacity or None)
    # ablation presets keep their own name but share the full-trio layout
    variant = "coop" if config.variant in VARIANT_PRESETS else config.variant

    def sac_agent(name, role, slot):
        a = SacAgent(
            name,
            role,
            slot,
            env_spec,
            config.seed,
            hidden=config.hidden,
            lr=config.sac.lr,
            gamma=config.sac.gamma,
            tau=config.sac.tau,
            alpha=config.sac.alpha,
            batch_size=config.sac.batch_size,
            start_steps=config.sac.start_steps,
        )
        a.own_memory = GlobalMemory()
        return a

    def ppo_agent(role):
        return PpoAgent(
            "ppo",
            role,
            1,
            env_spec,
            config.seed,
            hidden=config.hidden,
            lr=config.ppo.lr,
            gamma=config.ppo.gamma,
            gae_lambda=config.ppo.gae_lambda,
            clip_ratio=config.ppo.clip_ratio,
            epochs=config.ppo.epochs,
            minibatch_size=config.ppo.minibatch_size,
            init_log_std=config.ppo.init_log_std,
        )

    def cem_agent():
        return CemAgent(
            "cem",
            "local2",
            2,
            env_spec,
            config.seed,
            hidden=config.hidden,
            population=config.cem.population,
            elites=config.cem.elites,
            noise_init=config.cem.noise_init,
            noise_decay=config.cem.noise_decay,
            var_init=config.cem.var_init,
            episodes_per_individual=config.cem.episodes_per_individual,
        )

    solo = variant in ("solo-sac", "solo-ppo", "solo-cem")
    shared_only = variant == "three-sac-shared"
    use_local_memory = not (config.disable_local_memory or solo or shared_only)
    lm = LocalMemory(config.local_capacity) if use_local_memory else None

    if variant == "coop":
        agents = [sac_agent("sac", "global", 0), ppo_agent("local1"), cem_agent()]
    elif variant == "no-ppo":
        agents = [sac_agent("sac", "global", 0), cem_agent()]
    elif variant == "no-cem":
        agents = [sac_agent("sac", "global", 0), ppo_agent("local1")]
    elif variant == "no-sac":
        agents = [ppo_agent("global"), cem_agent()]
    elif variant == "solo-sac":
        agents = [sac_agent("sac", "global", 0)]
    elif variant == "solo-ppo":
        agents = [ppo_agent("local1")]
    elif variant == "solo-cem":
        agents = [cem_agent()]
    elif variant in ("three-sac-coop", "three-sac-shared"):
        roles = ("global", "local1", "local2") if variant == "three-sac-coop" else ("peer1", "peer2", "peer3")
        agents = [sac_agent(f"sac{i + 1}", roles[i], i) for i in range(3)]
    else:  # pragma: no cover - guarded by validate()
        raise ValueError(f"unknown variant {variant!r}")

    for agent in agents:
        agent.env = make_env(config.env_id)

    has_global = not shared_only and agents[0].role == "global"
    global_agent = agents[0] if has_global else None

    # replay sources for off-policy agents
    mixed_sampler = None
    for i, agent in enumerate(agents):
        if agent.kind != "sac":
            continue
        is_top = has_global and i == 0
        if solo or config.disable_global_memory:
            agent.sampler = UniformSampler(agent.own_memory)
        elif shared_only:
            agent.sampler = UniformSampler(gm)
        elif not is_top:
            agent.sampler = UniformSampler(agent.own_memory)  # local off-policy agents keep their own scheme
        elif lm is None:
            agent.sampler = UniformSampler(gm)
        else:
            mixed_sampler = MixedSampler(gm, lm, config.local_sample_prob)
            agent.sampler = mixed_sampler

    background = (
        has_global
        and global_agent.kind == "sac"
        and len(agents) > 1
        and not config.disable_global_memory
    )
    transfers_enabled = has_global and len(agents) > 1 and not config.disable_transfer
    warmup_agent = global_agent if (has_global and not solo) else (agents[0] if solo and variant == "solo-sac" else None)

    return Wiring(
        agents=agents,
        global_agent=global_agent,
        warmup_agent=warmup_agent,
        background=background,
        transfers_enabled=transfers_enabled,
        gm=gm,
        lm=lm,
        mixed_sampler=mixed_sampler,
    )


def train_phase(
    agent: AgentBase,
    budget: int,
    ledger: TimestepLedger,
    gm: GlobalMemory,
    lm: LocalMemory | None,
    flags: TransferFlags,
    r_min: float,
) -> int:
    """One training phase of exactly `budget` environment steps.

    Episodes that end inside the phase trigger the agent's own update and
    are then committed to the memories. A gradient agent flushes an
    episode cut off by the phase boundary (bootstrap, done=false); the
    population agent instead resumes it in its next phase.
    """
    steps = 0
    while steps < budget:
        if agent.current_obs is None:
            agent.begin_episode()
        obs = agent.current_obs
        action = agent.act(obs)
        res = agent.env.step(action)
        tr = Transition(obs, action, res.reward, res.next_obs, res.done)
        agent.episode.add(tr)
        agent.on_transition(tr)
        agent.steps_taken += 1
        ledger.record(agent.name)
        steps += 1

        truncated = not res.done and steps == budget and not agent.pauses_mid_episode
        if res.done or truncated:
            _commit_episode(agent, res.done, res.next_obs, gm, lm, flags, r_min)
        else:
            agent.current_obs = res.next_obs
    return steps


def _commit_episode(agent, done, last_obs, gm, lm, flags, r_min) -> None:
    ep_ret, ep_len = agent.episode.ret, len(agent.episode)
    agent.end_episode(truncated=not done, last_obs=last_obs)
    own = getattr(agent, "own_memory", None)
    if own is not None:
        for t in agent.episode.transitions:
            own.push(t)
    admit_episode(agent.episode, agent.role, flags, r_min, gm, lm)
    agent.episode_log.append((agent.steps_taken, ep_ret, ep_len, not done))
    agent.current_obs = None


@dataclass
class RunResult:
    config: RunConfig
    agents: list[AgentBase]
    ledger: TimestepLedger
    rows: list[dict]
    summary: dict
    csv_text: str
    out_dir: str | None = None


def run_experiment(config: RunConfig, out_dir: str | None = None) -> RunResult:
    config.validate()
    wiring = build_wiring(config)
    agents = wiring.agents
    ledger = TimestepLedger([a.name for a in agents])
    flags = TransferFlags()
    scores = [float("-inf")] * len(agents)
    eval_env = make_env(config.env_id)
    best_score = {a.name: float("-inf") for a in agents}
    best_params = {a.name: None for a in agents}
    best_iteration = {a.name: 0 for a in agents}
    losses_rows: list[tuple] = []
    rows: list[dict] = []

    if wiring.warmup_agent is not None and config.warmup_steps > 0:
        train_phase(
            wiring.warmup_agent, config.warmup_steps, ledger, wiring.gm, wiring.lm, flags, min(scores)
        )
        _snapshot_losses(losses_rows, ledger.total, 0, wiring.warmup_agent)

    iteration = 0
    while ledger.total < config.total_steps:
        iteration += 1
        if config.reset_flags_each_round:
            flags.a_p = False
            flags.a_c = False
        r_min = min(scores)
        prev_draws = (wiring.mixed_sampler.draws, wiring.mixed_sampler.local_draws) if wiring.mixed_sampler else (0, 0)
        for agent in agents:
            train_phase(agent, config.phase_steps, ledger, wiring.gm, wiring.lm, flags, r_min)
            _snapshot_losses(losses_rows, ledger.total, iteration, agent)
            if wiring.background and agent is not wiring.global_agent:
                wiring.global_agent.update_from_memories(config.phase_steps)

        seed_base = TRAIN_SEED_SPAN + iteration * config.eval_episodes
        scores = [
            evaluate_agent(a.eval_policy_mean(), eval_env, config.eval_episodes, seed_base)
            for a in agents
        ]
        for agent, score in zip(agents, scores):
            if score > best_score[agent.name]:
                best_score[agent.name] = score
                best_params[agent.name] = params_flatten(agent.eval_policy_mean())
                best_iteration[agent.name] = iteration

        events = (
            apply_transfers(agents, scores, flags, config.transfer_gap, has_global=True)
            if wiring.transfers_enabled
            else []
        )
        rows.append(
            _csv_row(iteration, ledger, agents, scores, events, wiring, prev_draws)
        )

    summary = _summarize(config, agents, ledger, rows, best_score, best_iteration)
    csv_text = _csv_render(rows)
    result = RunResult(config, agents, ledger, rows, summary, csv_text, out_dir)
    if out_dir is not None:
        _write_artifacts(result, best_params, losses_rows)
    return result


def _snapshot_losses(losses_rows, t, iteration, agent) -> None:
    last = getattr(agent, "last_losses", None)
    if last:
        for key in sorted(last):
            losses_rows.append((t, iteration, agent.name, key, last[key]))


def _csv_row(iteration, ledger, agents, scores, events, wiring, prev_draws):
    # positional score columns follow the hierarchy order; absent agents blank
    padded = list(scores) + [None] * (3 - len(scores))
    if wiring.mixed_sampler is not None:
        d = wiring.mixed_sampler.draws - prev_draws[0]
        ld = wiring.mixed_sampler.local_draws - prev_draws[1]
        hit_ratio = repr(ld / d) if d > 0 else ""
    else:
        hit_ratio = ""
    return {
        "t": ledger.total,
        "iteration": iteration,
        "score_global": _fmt(padded[0]),
        "score_local1": _fmt(padded[1]),
        "score_local2": _fmt(padded[2]),
        "best_score": _fmt(max(scores)),
        "transfer_events": ";".join(f"{e.src}->{e.dst}:{e.gap!r}" for e in events),
        "mem_global_size": len(wiring.gm),
        "mem_local_size": len(wiring.lm) if wiring.lm is not None else 0,
        "local_hit_ratio": hit_ratio,
    }


def _fmt(x) -> str:
    return "" if x is None else repr(float(x))


def _csv_render(rows: list[dict]) -> str:
    lines = [",".join(CSV_COLUMNS)]
    for row in rows:
        lines.append(",".join(str(row[c]) for c in CSV_COLUMNS))
    return "\n".join(lines) + "\n"


def _summarize(config, agents, ledger, rows, best_score, best_iteration) -> dict:
    per_agent = {}
    slot_cols = ("score_global", "score_local1", "score_local2")
    for i, agent in enumerate(agents):
        final = float(rows[-1][slot_cols[i]]) if rows else None
        per_agent[agent.name] = {
            "kind": agent.kind,
            "role": agent.role,
            "steps": ledger.per_agent[agent.name],
            "episodes": len(agent.episode_log),
            "max_avg_return": best_score[agent.name] if rows else None,
            "best_iteration": best_iteration[agent.name],
            "final_score": final,
        }
    elite = None
    best_ever = None
    if rows:
        elite = max(agents, key=lambda a: per_agent[a.name]["final_score"]).name
        best_ever = max(agents, key=lambda a: per_agent[a.name]["max_avg_return"]).name
    return {
        "variant": config.variant,
        "env": config.env_id,
        "seed": config.seed,
        "total_steps": ledger.total,
        "iterations": len(rows),
        "agents": per_agent,
        "max_avg_return": per_agent[best_ever]["max_avg_return"] if best_ever else None,
        "elite_agent": elite,
        "best_agent_ever": best_ever,
        "transfer_count": sum(1 for r in rows for e in r["transfer_events"].split(";") if e),
    }


def _write_artifacts(result: RunResult, best_params, losses_rows) -> None:
    out = result.out_dir
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "config.json"), "w") as f:
        json.dump(result.config.to_dict(), f, indent=2, sort_keys=True)
    with open(os.path.join(out, "log.csv"), "w") as f:
        f.write(result.csv_text)
    with open(os.path.join(out, "losses.csv"), "w") as f:
        f.write("t,iteration,agent,loss,value\n")
        for t, it, name, key, val in losses_rows:
            f.write(f"{t},{it},{name},{key},{val!r}\n")
    with open(os.path.join(out, "summary.json"), "w") as f:
        json.dump(result.summary, f, indent=2, sort_keys=True)
    ckpt_dir = os.path.join(out, "checkpoints")
    os.makedirs(ckpt_dir, exist_ok=True)
    for agent in result.agents:
        agent.eval_policy_mean().save(os.path.join(ckpt_dir, f"{agent.name}_final.json"))
        if best_params[agent.name] is not None:
            net = Mlp.zeros(agent.eval_policy_mean().layer_sizes)
            params_load(net, best_params[agent.name])
            net.save(os.path.join(ckpt_dir, f"{agent.name}_best.json"))
