"""On-policy local agent: clipped-surrogate policy gradient with a GAE critic.

Updates only from its own freshly collected episodes -- it writes into the
shared memories but never reads them. Accepts (mean, value) transfers from
the global agent and keeps exploring with its own state-independent noise.
"""

from __future__ import annotations

import numpy as np

from cooprl.base import AgentBase
from cooprl.envs import EnvSpec
from cooprl.memory import Transition
from cooprl.numerics import (
    AdamState,
    Mlp,
    MlpAdam,
    adam_apply,
    mlp_backward_batch,
    mlp_forward_batch,
    mlp_forward_cached,
    params_flatten,
    params_load,
)
from cooprl.policy import (
    LOG_STD_MAX,
    LOG_STD_MIN,
    StateIndependentStd,
    act_stochastic_ppo,
    make_mean_function,
    squashed_gaussian_logp,
    transfer_mean,
)


def clipped_surrogate(rho: np.ndarray, adv: np.ndarray, clip_ratio: float) -> np.ndarray:
    """Per-sample pessimistic surrogate min(rho A, clip(rho, 1 +- eps) A)."""
    return np.minimum(rho * adv, np.clip(rho, 1.0 - clip_ratio, 1.0 + clip_ratio) * adv)


def gae_advantages(rewards, values, dones, gamma: float, lam: float):
    """Generalized advantage estimation over one trajectory.

    `values` must carry one bootstrap entry beyond `rewards`. Returns
    (advantages, returns) with returns = advantages + values[:-1].
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    n = len(rewards)
    if len(values) != n + 1 or len(dones) != n:
        raise ValueError(
            f"length mismatch: rewards {n}, values {len(values)} (need {n + 1}), dones {len(dones)}"
        )
    adv = np.zeros(n)
    last = 0.0
    for t in range(n - 1, -1, -1):
        nonterminal = 1.0 - dones[t]
        delta = rewards[t] + gamma * nonterminal * values[t + 1] - values[t]
        last = delta + gamma * lam * nonterminal * last
        adv[t] = last
    return adv, adv + values[:-1]


class PpoAgent(AgentBase):
    kind = "ppo"

    def __init__(
        self,
        name: str,
        role: str,
        slot: int,
        env_spec: EnvSpec,
        run_seed: int,
        hidden=(64, 64),
        lr: float = 3e-4,
        gamma: float = 0.99,
        gae_lambda: float = 0.97,
        clip_ratio: float = 0.2,
        epochs: int = 10,
        minibatch_size: int = 64,
        init_log_std: float = -0.5,
    ):
        super().__init__(name, role, slot, env_spec, run_seed)
        if not 0.0 < clip_ratio < 1.0:
            raise ValueError(f"clip_ratio must be in (0, 1), got {clip_ratio}")
        self.gamma = gamma
        self.gae_lambda = gae_lambda
        self.clip_ratio = clip_ratio
        self.epochs = epochs
        self.minibatch_size = minibatch_size

        obs_dim, act_dim = env_spec.obs_dim, env_spec.act_dim
        self.mean = make_mean_function(obs_dim, act_dim, hidden, self.init_rng)
        self.head = StateIndependentStd(act_dim, init_log_std)
        self.v = Mlp.init((obs_dim, *hidden, 1), self.init_rng)

        self.adam_mean = MlpAdam(self.mean, lr)
        self.adam_v = MlpAdam(self.v, lr)
        self.adam_log_std = AdamState(size=act_dim, lr=lr)

        self._rollout = _Rollout()
        self.last_losses: dict[str, float] = {}

    def act(self, obs: np.ndarray) -> np.ndarray:
        sample = act_stochastic_ppo(self.mean, self.head, obs, self.action_rng, self.bounds)
        value = float(mlp_forward_batch(self.v, obs[None, :])[0, 0])
        self._rollout.stage(obs, sample.pre_squash, sample.log_prob, value)
        return sample.action

    def on_transition(self, tr: Transition) -> None:
        self._rollout.commit(tr.r, tr.done)

    def eval_policy_mean(self) -> Mlp:
        return self.mean.copy()

    @property
    def rollout_size(self) -> int:
        return len(self._rollout.rewards)

    def end_episode(self, truncated: bool, last_obs: np.ndarray) -> None:
        self.update(truncated, last_obs)

    def update(self, truncated: bool, last_obs: np.ndarray) -> None:
        """Clipped-surrogate update over the stored rollout, then clear it."""
        ro = self._rollout
        if not ro.rewards:
            return
        if ro.dones[-1]:
            v_boot = 0.0
        else:
            v_boot = float(mlp_forward_batch(self.v, np.asarray(last_obs)[None, :])[0, 0])
        adv, rets = gae_advantages(
            ro.rewards, ro.values + [v_boot], ro.dones, self.gamma, self.gae_lambda
        )
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)

        obs = np.stack(ro.obs)
        pre = np.stack(ro.pre_squash)
        logp_old = np.array(ro.log_probs)
        n = len(ro.rewards)

        pi_losses, v_losses = [], []
        for _ in range(self.epochs):
            order = self.update_rng.permutation(n)
            for start in range(0, n, self.minibatch_size):
                idx = order[start : start + self.minibatch_size]
                pl, vl = self._minibatch_step(
                    obs[idx], pre[idx], logp_old[idx], adv[idx], rets[idx]
                )
                pi_losses.append(pl)
                v_losses.append(vl)

        self._rollout = _Rollout()
        self.last_losses = {
            "pi": float(np.mean(pi_losses)),
            "v": float(np.mean(v_losses)),
        }

    def _minibatch_step(self, s, u, logp_old, adv, rets):
        m = s.shape[0]
        mu, mean_cache = mlp_forward_cached(self.mean, s)
        log_std = self.head.clamped()
        std = np.exp(log_std)
        logp_new = squashed_gaussian_logp(u, mu, log_std, self.bounds)

        rho = np.exp(logp_new - logp_old)
        unclipped = rho * adv
        clipped = np.clip(rho, 1.0 - self.clip_ratio, 1.0 + self.clip_ratio) * adv
        pi_loss = float(-np.mean(clipped_surrogate(rho, adv, self.clip_ratio)))

        # gradient flows through rho only where the unclipped branch is active
        active = unclipped <= clipped
        d_logp = np.where(active, -(1.0 / m) * rho * adv, 0.0)
        z = (u - mu) / std
        d_mu = d_logp[:, None] * z / std
        d_log_std = (d_logp[:, None] * (z**2 - 1.0)).sum(axis=0)
        d_log_std *= (self.head.log_std > LOG_STD_MIN) & (self.head.log_std < LOG_STD_MAX)

        v_out, v_cache = mlp_forward_cached(self.v, s)
        ev = v_out.ravel() - rets
        v_loss = float(np.mean(ev**2))

        g_mean, _ = mlp_backward_batch(self.mean, mean_cache, d_mu)
        g_v, _ = mlp_backward_batch(self.v, v_cache, (2.0 / m) * ev[:, None])
        self.adam_mean.step(g_mean)
        self.adam_v.step(g_v)
        self.head.log_std = adam_apply(self.adam_log_std, self.head.log_std, d_log_std)
        return pi_loss, v_loss

    def accept_transfer(self, src) -> None:
        """Adopt the global agent's mean and value nets; keep own log-std."""
        transfer_mean(src.mean, self.mean)
        if src.v.layer_sizes != self.v.layer_sizes:
            raise ValueError(
                f"value architecture mismatch: {src.v.layer_sizes} vs {self.v.layer_sizes}"
            )
        params_load(self.v, params_flatten(src.v))
        # fresh networks, fresh optimizer moments
        self.adam_mean.reset()
        self.adam_v.reset()


class _Rollout:
    """Per-episode on-policy store; cleared after every update."""

    def __init__(self):
        self.obs: list[np.ndarray] = []
        self.pre_squash: list[np.ndarray] = []
        self.log_probs: list[float] = []
        self.values: list[float] = []
        self.rewards: list[float] = []
        self.dones: list[bool] = []

    def stage(self, obs, pre_squash, log_prob, value) -> None:
        self.obs.append(obs)
        self.pre_squash.append(pre_squash)
        self.log_probs.append(log_prob)
        self.values.append(value)

    def commit(self, reward: float, done: bool) -> None:
        self.rewards.append(reward)
        self.dones.append(done)
