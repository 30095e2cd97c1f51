"""Built-in small continuous-control environments.

Three tasks spanning the regimes the agents differ on: a dense-reward
point mass (gradient methods strong), a sparse-reward variant (population
search strong), and a corridor whose per-step reward locally punishes the
actions that eventually pay off (deceptive gradient).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class EnvSpec:
    obs_dim: int
    act_dim: int
    act_low: np.ndarray
    act_high: np.ndarray
    horizon: int
    reward_bound: float  # |reward| never exceeds this


@dataclass
class StepResult:
    next_obs: np.ndarray
    reward: float
    done: bool


class Env:
    """Single-owner mutable environment; distinct instances are independent.

    reset(seed) is fully deterministic in the seed; step() applies the
    dynamics, re-clamps actions defensively, and sets done at a terminal
    condition or when the step horizon is reached.
    """

    spec: EnvSpec

    def __init__(self):
        self._steps = 0

    def reset(self, seed: int) -> np.ndarray:
        raise NotImplementedError

    def step(self, action: np.ndarray) -> StepResult:
        action = np.asarray(action, dtype=np.float64)
        if action.shape != (self.spec.act_dim,):
            raise ValueError(f"action shape {action.shape} != ({self.spec.act_dim},)")
        if np.isnan(action).any():
            raise ValueError("NaN action")
        action = np.clip(action, self.spec.act_low, self.spec.act_high)
        self._steps += 1
        next_obs, reward, terminal = self._dynamics(action)
        done = terminal or self._steps >= self.spec.horizon
        return StepResult(next_obs, float(reward), bool(done))

    def _dynamics(self, action: np.ndarray):
        raise NotImplementedError


class PointMassDense(Env):
    """2-D point mass, reward -||p - goal|| every step.

    State (px, py, vx, vy); force action in [-1,1]^2.
    v <- clamp(v + 0.05 a, +-1); p <- clamp(p + 0.05 v, +-2); goal (1,1).
    """

    GOAL = np.array([1.0, 1.0])

    def __init__(self):
        super().__init__()
        self.spec = EnvSpec(
            obs_dim=4,
            act_dim=2,
            act_low=np.array([-1.0, -1.0]),
            act_high=np.array([1.0, 1.0]),
            horizon=200,
            # max distance from a corner of [-2,2]^2 to the goal
            reward_bound=float(np.linalg.norm([-2.0 - 1.0, -2.0 - 1.0])) + 1e-9,
        )
        self.p = np.zeros(2)
        self.v = np.zeros(2)

    def reset(self, seed: int) -> np.ndarray:
        rng = np.random.default_rng(seed)
        self.p = rng.uniform(-0.5, 0.5, size=2)
        self.v = np.zeros(2)
        self._steps = 0
        return self._obs()

    def _obs(self) -> np.ndarray:
        return np.concatenate([self.p, self.v])

    def _dynamics(self, action):
        self.v = np.clip(self.v + 0.05 * action, -1.0, 1.0)
        self.p = np.clip(self.p + 0.05 * self.v, -2.0, 2.0)
        reward = -float(np.linalg.norm(self.p - self.GOAL))
        return self._obs(), reward, False


class PointMassSparse(PointMassDense):
    """Same dynamics; reward 0 except +10 within 0.1 of the goal (terminal)."""

    def __init__(self):
        super().__init__()
        self.spec = EnvSpec(
            obs_dim=4,
            act_dim=2,
            act_low=np.array([-1.0, -1.0]),
            act_high=np.array([1.0, 1.0]),
            horizon=200,
            reward_bound=10.0,
        )

    def _dynamics(self, action):
        self.v = np.clip(self.v + 0.05 * action, -1.0, 1.0)
        self.p = np.clip(self.p + 0.05 * self.v, -2.0, 2.0)
        if np.linalg.norm(self.p - self.GOAL) < 0.1:
            return self._obs(), 10.0, True
        return self._obs(), 0.0, False


class DeceptiveCorridor(Env):
    """1-D corridor where pushing forward is penalized until a far gate pays off.

    State (x, v), scalar action in [-1,1].
    v <- clamp(0.9 v + 0.05 a, +-1); x <- clamp(x + 0.05 v, [0,3]).
    Reward -0.01*max(a,0) while x < 2; +50 once x >= 2 (terminal).
    Start x = 0, v = 0.

    The velocity drag (0.9) is what makes the task deceptive: an undirected
    random walk almost never drifts to the gate within the horizon, so the
    only per-step gradient signal is the penalty on forward pushes, while
    any policy that pushes forward consistently reaches the gate easily.
    """

    X_GATE = 2.0
    DRAG = 0.9

    def __init__(self):
        super().__init__()
        self.spec = EnvSpec(
            obs_dim=2,
            act_dim=1,
            act_low=np.array([-1.0]),
            act_high=np.array([1.0]),
            horizon=300,
            reward_bound=50.0,
        )
        self.x = 0.0
        self.v = 0.0

    def reset(self, seed: int) -> np.ndarray:
        self.x = 0.0
        self.v = 0.0
        self._steps = 0
        return self._obs()

    def _obs(self) -> np.ndarray:
        return np.array([self.x, self.v])

    def _dynamics(self, action):
        a = float(action[0])
        self.v = float(np.clip(self.DRAG * self.v + 0.05 * a, -1.0, 1.0))
        self.x = float(np.clip(self.x + 0.05 * self.v, 0.0, 3.0))
        if self.x >= self.X_GATE:
            return self._obs(), 50.0, True
        return self._obs(), -0.01 * max(a, 0.0), False


ENV_IDS = {
    "point-dense": PointMassDense,
    "point-sparse": PointMassSparse,
    "deceptive-corridor": DeceptiveCorridor,
}


def make_env(env_id: str) -> Env:
    try:
        return ENV_IDS[env_id]()
    except KeyError:
        raise ValueError(f"unknown env id {env_id!r}; valid: {sorted(ENV_IDS)}") from None
