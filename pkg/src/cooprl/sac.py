"""Off-policy global agent: soft actor-critic with twin Q nets and an
explicit state-value network.

The explicit V network (rather than the Q-only variant) keeps the value
function architecturally identical to the on-policy agent's critic, so it
can be transferred directly. Updates sample batches from whatever source
the run wiring provides (mixed local/global replay, plain global replay,
or the agent's own experiences).
"""

from __future__ import annotations

import numpy as np

from cooprl.base import AgentBase
from cooprl.envs import EnvSpec
from cooprl.memory import Transition
from cooprl.numerics import (
    Mlp,
    MlpAdam,
    mlp_backward_batch,
    mlp_forward_batch,
    mlp_forward_cached,
    mlp_input_grad_batch,
    params_flatten,
    params_load,
)
from cooprl.policy import (
    LOG_2PI,
    LOG_STD_MAX,
    LOG_STD_MIN,
    StateDependentStd,
    _log1m_tanh_sq,
    make_mean_function,
    transfer_mean,
)


def batch_arrays(batch: list[Transition]):
    s = np.stack([t.s for t in batch])
    a = np.stack([t.a for t in batch])
    r = np.array([t.r for t in batch])
    s2 = np.stack([t.s_next for t in batch])
    d = np.array([1.0 if t.done else 0.0 for t in batch])
    return s, a, r, s2, d


class SacAgent(AgentBase):
    kind = "sac"

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
        tau: float = 0.005,
        alpha: float = 0.2,
        batch_size: int = 128,
        start_steps: int = 500,
    ):
        super().__init__(name, role, slot, env_spec, run_seed)
        self.gamma = gamma
        self.tau = tau
        self.alpha = alpha
        self.batch_size = batch_size
        self.start_steps = start_steps

        obs_dim, act_dim = env_spec.obs_dim, env_spec.act_dim
        self.mean = make_mean_function(obs_dim, act_dim, hidden, self.init_rng)
        self.std_head = StateDependentStd.init(obs_dim, act_dim, hidden, self.init_rng)
        self.q1 = Mlp.init((obs_dim + act_dim, *hidden, 1), self.init_rng)
        self.q2 = Mlp.init((obs_dim + act_dim, *hidden, 1), self.init_rng)
        self.v = Mlp.init((obs_dim, *hidden, 1), self.init_rng)
        self.v_target = self.v.copy()

        self.adam_mean = MlpAdam(self.mean, lr)
        self.adam_std = MlpAdam(self.std_head.net, lr)
        self.adam_q1 = MlpAdam(self.q1, lr)
        self.adam_q2 = MlpAdam(self.q2, lr)
        self.adam_v = MlpAdam(self.v, lr)

        self.sampler = None  # set by the run wiring
        self.last_losses: dict[str, float] = {}

    # -- acting ---------------------------------------------------------

    def act(self, obs: np.ndarray) -> np.ndarray:
        if self.steps_taken < self.start_steps:
            return self.action_rng.uniform(self.env_spec.act_low, self.env_spec.act_high)
        mu = mlp_forward_batch(self.mean, obs[None, :])[0]
        log_std = np.clip(
            mlp_forward_batch(self.std_head.net, obs[None, :])[0], LOG_STD_MIN, LOG_STD_MAX
        )
        u = mu + np.exp(log_std) * self.action_rng.standard_normal(mu.shape)
        return self.bounds.squash(u)

    def eval_policy_mean(self) -> Mlp:
        return self.mean.copy()

    # -- learning -------------------------------------------------------

    def end_episode(self, truncated: bool, last_obs: np.ndarray) -> None:
        # one gradient step per environment step of the finished episode
        self.update_from_memories(len(self.episode))

    def update_from_memories(self, n_steps: int) -> None:
        for _ in range(n_steps):
            if not self.sampler.ready(self.batch_size):
                break
            arrays = self.sampler.sample_arrays(self.batch_size, self.update_rng)
            self.update_step_arrays(*arrays)

    def q_targets(self, r: np.ndarray, s2: np.ndarray, d: np.ndarray) -> np.ndarray:
        vt = mlp_forward_batch(self.v_target, s2).ravel()
        return r + self.gamma * (1.0 - d) * vt

    def policy_gradients(self, s: np.ndarray, xi: np.ndarray):
        """Reparameterized policy objective mean(alpha logp - min Q) and its
        gradients w.r.t. the mean and std networks, for fixed noise xi.

        Returns (loss, g_mean, g_std, logp, q_min); Q networks are treated
        as constants except for their action-input gradient.
        """
        n = s.shape[0]
        scale = self.bounds.scale
        mu, mean_cache = mlp_forward_cached(self.mean, s)
        ls_raw, std_cache = mlp_forward_cached(self.std_head.net, s)
        ls = np.clip(ls_raw, LOG_STD_MIN, LOG_STD_MAX)
        clamp_mask = (ls_raw > LOG_STD_MIN) & (ls_raw < LOG_STD_MAX)
        std = np.exp(ls)
        u = mu + std * xi
        tanh_u = np.tanh(u)
        a_new = self.bounds.mid + scale * tanh_u
        logp = np.sum(-0.5 * xi**2 - ls - 0.5 * LOG_2PI, axis=1) - np.sum(
            _log1m_tanh_sq(u) + np.log(scale), axis=1
        )

        san = np.concatenate([s, a_new], axis=1)
        q1n, q1n_cache = mlp_forward_cached(self.q1, san)
        q2n, q2n_cache = mlp_forward_cached(self.q2, san)
        q1n = q1n.ravel()
        q2n = q2n.ravel()
        q_min = np.minimum(q1n, q2n)
        use_q1 = q1n <= q2n

        loss = float(np.mean(self.alpha * logp - q_min))
        up1 = np.where(use_q1, -1.0 / n, 0.0)[:, None]
        up2 = np.where(use_q1, 0.0, -1.0 / n)[:, None]
        d_san = mlp_input_grad_batch(self.q1, q1n_cache, up1)
        d_san += mlp_input_grad_batch(self.q2, q2n_cache, up2)
        d_a = d_san[:, s.shape[1] :]
        # d logp / du = 2 tanh(u) with xi held fixed (tanh-Jacobian term)
        d_u = (self.alpha / n) * 2.0 * tanh_u + d_a * scale * (1.0 - tanh_u**2)
        d_mu = d_u
        d_ls = (d_u * std * xi - self.alpha / n) * clamp_mask
        g_mean, _ = mlp_backward_batch(self.mean, mean_cache, d_mu)
        g_std, _ = mlp_backward_batch(self.std_head.net, std_cache, d_ls)
        return loss, g_mean, g_std, logp, q_min

    def policy_loss(self, s: np.ndarray, xi: np.ndarray) -> float:
        """Forward-only recomputation of the policy objective (for checks)."""
        loss, _, _, _, _ = self.policy_gradients(s, xi)
        return loss

    def update_step(self, batch: list[Transition]) -> dict[str, float]:
        return self.update_step_arrays(*batch_arrays(batch))

    def update_step_arrays(self, s, a, r, s2, d) -> dict[str, float]:
        n = s.shape[0]

        # Q regression to y = r + gamma (1-d) V_target(s')
        y = self.q_targets(r, s2, d)
        sa = np.concatenate([s, a], axis=1)
        q1_out, q1_cache = mlp_forward_cached(self.q1, sa)
        q2_out, q2_cache = mlp_forward_cached(self.q2, sa)
        e1 = q1_out.ravel() - y
        e2 = q2_out.ravel() - y
        q1_loss = float(np.mean(e1**2))
        q2_loss = float(np.mean(e2**2))
        gq1, _ = mlp_backward_batch(self.q1, q1_cache, (2.0 / n) * e1[:, None])
        gq2, _ = mlp_backward_batch(self.q2, q2_cache, (2.0 / n) * e2[:, None])

        xi = self.update_rng.standard_normal((n, self.env_spec.act_dim))
        pi_loss, g_mean, g_std, logp, q_min = self.policy_gradients(s, xi)

        # V regression to min-Q minus the entropy term (targets held fixed)
        v_out, v_cache = mlp_forward_cached(self.v, s)
        v_tgt = q_min - self.alpha * logp
        ev = v_out.ravel() - v_tgt
        v_loss = float(np.mean(ev**2))
        gv, _ = mlp_backward_batch(self.v, v_cache, (2.0 / n) * ev[:, None])

        losses = {"q1": q1_loss, "q2": q2_loss, "v": v_loss, "pi": pi_loss}
        if any(np.isnan(x) for x in losses.values()):
            raise RuntimeError(f"NaN loss in {self.name} update: {losses}")

        self.adam_q1.step(gq1)
        self.adam_q2.step(gq2)
        self.adam_v.step(gv)
        self.adam_mean.step(g_mean)
        self.adam_std.step(g_std)
        self.soft_update()

        self.last_losses = losses
        return losses

    def soft_update(self, tau: float | None = None) -> None:
        """V_target <- tau V + (1 - tau) V_target, componentwise."""
        t = self.tau if tau is None else tau
        for wt, w in zip(self.v_target.weights, self.v.weights):
            wt *= 1.0 - t
            wt += t * w
        for bt, b in zip(self.v_target.biases, self.v.biases):
            bt *= 1.0 - t
            bt += t * b

    def accept_transfer(self, src: "SacAgent") -> None:
        """Adopt the upper agent's mean and value nets; keep own Sigma and Qs."""
        transfer_mean(src.mean, self.mean)
        if src.v.layer_sizes != self.v.layer_sizes:
            raise ValueError(
                f"value architecture mismatch: {src.v.layer_sizes} vs {self.v.layer_sizes}"
            )
        params_load(self.v, params_flatten(src.v))
        params_load(self.v_target, params_flatten(src.v_target))
        self.adam_mean.reset()
        self.adam_v.reset()
