"""Policy representations built around a shared, transferable mean network.

Every agent owns a structurally identical pre-squash mean network
(obs -> act), which is the unit of policy transfer. Stochastic agents add
their own covariance on top: a state-independent learnable log-std vector
for the on-policy agent, a state-dependent log-std head for the off-policy
one. Both squash through tanh and correct log-probabilities with the
change-of-variables Jacobian so a transferred mean produces the same
deterministic behaviour under either agent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from cooprl.envs import EnvSpec
from cooprl.numerics import Mlp, mlp_forward, mlp_forward_batch, params_flatten, params_load

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
LOG_2PI = float(np.log(2.0 * np.pi))


def make_mean_function(obs_dim: int, act_dim: int, hidden, rng: np.random.Generator) -> Mlp:
    return Mlp.init((obs_dim, *hidden, act_dim), rng)


@dataclass(frozen=True)
class ActionBounds:
    """Affine map from tanh output to the env action box."""

    mid: np.ndarray
    scale: np.ndarray

    @classmethod
    def from_spec(cls, spec: EnvSpec) -> "ActionBounds":
        return cls(
            mid=(spec.act_high + spec.act_low) / 2.0,
            scale=(spec.act_high - spec.act_low) / 2.0,
        )

    def squash(self, pre: np.ndarray) -> np.ndarray:
        return self.mid + self.scale * np.tanh(pre)


@dataclass
class ActionSample:
    action: np.ndarray  # env-scale
    log_prob: float
    pre_squash: np.ndarray


def act_deterministic(mean: Mlp, obs: np.ndarray, bounds: ActionBounds) -> np.ndarray:
    return bounds.squash(mlp_forward(mean, obs))


def _log1m_tanh_sq(u: np.ndarray) -> np.ndarray:
    # log(1 - tanh(u)^2) = 2*(log 2 - u - softplus(-2u)), stable for large |u|
    z = -2.0 * u
    softplus = np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))
    return 2.0 * (np.log(2.0) - u - softplus)


def squashed_gaussian_logp(
    u: np.ndarray, mu: np.ndarray, log_std: np.ndarray, bounds: ActionBounds
) -> np.ndarray:
    """Log-density of the squashed-and-scaled action, evaluated at pre-squash u.

    Works on vectors or (batch, act) arrays; reduces over the last axis.
    """
    std = np.exp(log_std)
    gauss = -0.5 * ((u - mu) / std) ** 2 - log_std - 0.5 * LOG_2PI
    correction = _log1m_tanh_sq(u) + np.log(bounds.scale)
    return np.sum(gauss - correction, axis=-1)


class StateIndependentStd:
    """Learnable log-std vector (one per action dim)."""

    def __init__(self, act_dim: int, init_log_std: float = -0.5):
        self.log_std = np.full(act_dim, float(init_log_std))

    def clamped(self) -> np.ndarray:
        return np.clip(self.log_std, LOG_STD_MIN, LOG_STD_MAX)


class StateDependentStd:
    """Second MLP head producing a per-state log-std vector."""

    def __init__(self, net: Mlp):
        self.net = net

    @classmethod
    def init(cls, obs_dim: int, act_dim: int, hidden, rng: np.random.Generator):
        return cls(Mlp.init((obs_dim, *hidden, act_dim), rng))

    def log_std(self, obs: np.ndarray) -> np.ndarray:
        return np.clip(mlp_forward(self.net, obs), LOG_STD_MIN, LOG_STD_MAX)

    def log_std_batch(self, X: np.ndarray) -> np.ndarray:
        return np.clip(mlp_forward_batch(self.net, X), LOG_STD_MIN, LOG_STD_MAX)


def act_stochastic_sac(
    mean: Mlp,
    head: StateDependentStd,
    obs: np.ndarray,
    rng: np.random.Generator,
    bounds: ActionBounds,
) -> ActionSample:
    mu = mlp_forward(mean, obs)
    log_std = head.log_std(obs)
    u = mu + np.exp(log_std) * rng.standard_normal(mu.shape)
    return ActionSample(
        action=bounds.squash(u),
        log_prob=float(squashed_gaussian_logp(u, mu, log_std, bounds)),
        pre_squash=u,
    )


def act_stochastic_ppo(
    mean: Mlp,
    head: StateIndependentStd,
    obs: np.ndarray,
    rng: np.random.Generator,
    bounds: ActionBounds,
) -> ActionSample:
    mu = mlp_forward(mean, obs)
    log_std = head.clamped()
    u = mu + np.exp(log_std) * rng.standard_normal(mu.shape)
    return ActionSample(
        action=bounds.squash(u),
        log_prob=float(squashed_gaussian_logp(u, mu, log_std, bounds)),
        pre_squash=u,
    )


def transfer_mean(src: Mlp, dst: Mlp) -> None:
    """Copy src parameters into dst (deep copy, no aliasing). Heads untouched."""
    if src.layer_sizes != dst.layer_sizes:
        raise ValueError(
            f"architecture mismatch: {src.layer_sizes} vs {dst.layer_sizes}"
        )
    params_load(dst, params_flatten(src))
