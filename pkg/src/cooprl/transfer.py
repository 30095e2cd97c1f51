"""Cooperative exploration: score agents, apply gap-gated policy transfers.

Transfers flow strictly down the hierarchy (upper index to lower index)
and only when the upper agent's evaluation score beats the lower one's by
strictly more than the gap. A transfer from the global agent also raises
the destination's admission flag for the local replay memory.
"""

from __future__ import annotations

from dataclasses import dataclass

from cooprl.base import TRAIN_SEED_SPAN
from cooprl.cem import CemAgent
from cooprl.envs import Env
from cooprl.memory import TransferFlags
from cooprl.numerics import Mlp, params_flatten
from cooprl.policy import ActionBounds, act_deterministic


def evaluate_agent(
    mean: Mlp,
    env: Env,
    n_episodes: int = 5,
    seed_base: int = TRAIN_SEED_SPAN,
) -> float:
    """Mean return of the deterministic policy over freshly seeded episodes."""
    if n_episodes < 1:
        raise ValueError(f"n_episodes must be >= 1, got {n_episodes}")
    bounds = ActionBounds.from_spec(env.spec)
    total = 0.0
    for k in range(n_episodes):
        obs = env.reset(seed_base + k)
        done = False
        while not done:
            res = env.step(act_deterministic(mean, obs, bounds))
            total += res.reward
            obs = res.next_obs
            done = res.done
    return total / n_episodes


@dataclass
class TransferEvent:
    src: str
    dst: str
    gap: float


def apply_transfers(
    agents: list,
    scores: list[float],
    flags: TransferFlags,
    gap: float,
    has_global: bool = True,
) -> list[TransferEvent]:
    """Evaluate every downward edge independently, in hierarchy order.

    agents[0] is the global agent when has_global is true. scores[i] is
    agents[i]'s fresh evaluation score. Comparison is strict: a gap equal
    to the threshold does not fire.
    """
    if len(scores) != len(agents):
        raise ValueError(f"{len(scores)} scores for {len(agents)} agents")
    events = []
    for i in range(len(agents)):
        for j in range(i + 1, len(agents)):
            if scores[i] - scores[j] > gap:
                _execute(agents[i], agents[j], src_level=i)
                if has_global and i == 0:
                    _set_flag(flags, agents[j].role)
                events.append(TransferEvent(agents[i].name, agents[j].name, scores[i] - scores[j]))
    return events


def _execute(src, dst, src_level: int) -> None:
    if dst.kind == "cem":
        slot = min(src_level, CemAgent.TRANSFER_SLOTS - 1)
        dst.stage_transfer(slot, params_flatten(src.mean))
    else:
        dst.accept_transfer(src)


def _set_flag(flags: TransferFlags, role: str) -> None:
    if role == "local1":
        flags.a_p = True
    elif role == "local2":
        flags.a_c = True
