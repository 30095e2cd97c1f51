"""Shared agent plumbing: seed streams, episode state, env ownership.

Each agent owns its environment instance and four private RNG streams
(network init, action noise, update-time sampling, episode reset seeds),
all derived from (run_seed, slot). The slot is the agent's canonical
position in the hierarchy, so the same agent trained standalone or inside
the cooperative loop consumes identical random streams.
"""

from __future__ import annotations

import numpy as np

from cooprl.envs import Env, EnvSpec
from cooprl.memory import EpisodeBuffer, Transition
from cooprl.policy import ActionBounds

# episode reset seeds are drawn below this; evaluation seeds start at it
TRAIN_SEED_SPAN = 2**31


class AgentBase:
    kind = "base"
    pauses_mid_episode = False  # population agent finishes episodes across phases

    def __init__(self, name: str, role: str, slot: int, env_spec: EnvSpec, run_seed: int):
        self.name = name
        self.role = role
        self.slot = slot
        self.env_spec = env_spec
        self.bounds = ActionBounds.from_spec(env_spec)
        ss = np.random.SeedSequence([int(run_seed), int(slot)])
        init_ss, action_ss, update_ss, reset_ss = ss.spawn(4)
        self.init_rng = np.random.default_rng(init_ss)
        self.action_rng = np.random.default_rng(action_ss)
        self.update_rng = np.random.default_rng(update_ss)
        self.reset_rng = np.random.default_rng(reset_ss)

        self.env: Env | None = None
        self.episode = EpisodeBuffer()
        self.current_obs: np.ndarray | None = None
        self.steps_taken = 0
        # (agent step count at episode end, return, length, truncated) per episode
        self.episode_log: list[tuple[int, float, int, bool]] = []

    def begin_episode(self) -> None:
        seed = int(self.reset_rng.integers(0, TRAIN_SEED_SPAN))
        self.current_obs = self.env.reset(seed)

    def act(self, obs: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def on_transition(self, tr: Transition) -> None:
        pass

    def end_episode(self, truncated: bool, last_obs: np.ndarray) -> None:
        """Per-agent update at an episode boundary (before memory admission)."""
        raise NotImplementedError

    def eval_policy_mean(self):
        """Mean network to evaluate deterministically (a safe-to-read copy)."""
        raise NotImplementedError
