"""Evolutionary local agent: cross-entropy method over flat policy parameters.

Maintains a diagonal Gaussian over the mean-network parameter vector.
Each generation draws a population, evaluates every individual by episode
return (deterministic actions), refits mean and variance to the elites,
and adds a slowly decaying exploration noise floor. Individuals 0 and 1
are reserved for policies transferred from the upper-level agents; a
pending transfer overwrites the sampled individual at the next draw, so
its fitness competes within that generation.
"""

from __future__ import annotations

import numpy as np

from cooprl.base import AgentBase
from cooprl.envs import EnvSpec
from cooprl.numerics import Mlp, params_flatten, params_load
from cooprl.policy import act_deterministic, make_mean_function


def elite_indices(fitness: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k best individuals, ties broken by lower index."""
    return np.argsort(-np.asarray(fitness), kind="stable")[:k]


def refit_gaussian(population: np.ndarray, fitness: np.ndarray, k: int, eps_noise: float):
    """New (mean, var) from the k elites: uniform elite mean, componentwise
    squared deviations from that new mean, plus the exploration-noise floor."""
    elite = population[elite_indices(fitness, k)]
    mean = elite.mean(axis=0)
    var = ((elite - mean) ** 2).mean(axis=0) + eps_noise
    return mean, var


class CemAgent(AgentBase):
    kind = "cem"
    pauses_mid_episode = True  # fitness is a whole-episode statistic

    TRANSFER_SLOTS = 2  # individual 0 <- global agent, individual 1 <- mid-level agent

    def __init__(
        self,
        name: str,
        role: str,
        slot: int,
        env_spec: EnvSpec,
        run_seed: int,
        hidden=(64, 64),
        population: int = 10,
        elites: int = 5,
        noise_init: float = 1e-3,
        noise_decay: float = 0.999,
        var_init: float = 0.01,
        episodes_per_individual: int = 1,
    ):
        super().__init__(name, role, slot, env_spec, run_seed)
        if not 1 <= elites <= population:
            raise ValueError(f"need 1 <= elites <= population, got {elites}/{population}")
        self.pop_size = population
        self.n_elite = elites
        self.eps_noise = noise_init
        self.noise_decay = noise_decay
        self.episodes_per_individual = episodes_per_individual

        template = make_mean_function(env_spec.obs_dim, env_spec.act_dim, hidden, self.init_rng)
        self.layer_sizes = template.layer_sizes
        self.n_params = template.param_count
        self.dist_mean = params_flatten(template)
        self.dist_var = np.full(self.n_params, float(var_init))

        self._acting_net = Mlp.zeros(self.layer_sizes)
        self._loaded_idx = -1
        self.pending_transfers: dict[int, np.ndarray] = {}

        self.generations = 0
        self.best_params: np.ndarray | None = None  # best of last completed generation
        self.best_fitness = -np.inf

        self.population = None
        self.sample_population()

    # -- population lifecycle --------------------------------------------

    def sample_population(self) -> np.ndarray:
        """Draw a fresh population; transferred policies overwrite their slots."""
        self.population = self.dist_mean + np.sqrt(self.dist_var) * self.update_rng.standard_normal(
            (self.pop_size, self.n_params)
        )
        for idx, params in sorted(self.pending_transfers.items()):
            if idx < self.pop_size:
                self.population[idx] = params
        self.pending_transfers = {}
        self.fitness = np.zeros(self.pop_size)
        self._fitness_sum = np.zeros(self.pop_size)
        self._episodes_done = np.zeros(self.pop_size, dtype=int)
        self.current_individual = 0
        self._loaded_idx = -1
        return self.population

    def distribution_update(self) -> None:
        """Refit (mean, var) to the elite set; variance floored by eps_noise."""
        self.dist_mean, self.dist_var = refit_gaussian(
            self.population, self.fitness, self.n_elite, self.eps_noise
        )
        self.eps_noise *= self.noise_decay

    def stage_transfer(self, transfer_slot: int, flat_params: np.ndarray) -> None:
        if flat_params.shape != (self.n_params,):
            raise ValueError(
                f"architecture mismatch: got {flat_params.shape[0]} params, need {self.n_params}"
            )
        self.pending_transfers[transfer_slot] = flat_params.copy()

    # -- acting / training ------------------------------------------------

    def act(self, obs: np.ndarray) -> np.ndarray:
        if self._loaded_idx != self.current_individual:
            params_load(self._acting_net, self.population[self.current_individual])
            self._loaded_idx = self.current_individual
        return act_deterministic(self._acting_net, obs, self.bounds)

    def end_episode(self, truncated: bool, last_obs: np.ndarray) -> None:
        i = self.current_individual
        self._fitness_sum[i] += self.episode.ret
        self._episodes_done[i] += 1
        if self._episodes_done[i] < self.episodes_per_individual:
            return
        self.fitness[i] = self._fitness_sum[i] / self._episodes_done[i]
        self.current_individual += 1
        if self.current_individual == self.pop_size:
            best = int(np.argmax(self.fitness))
            self.best_params = self.population[best].copy()
            self.best_fitness = float(self.fitness[best])
            self.generations += 1
            self.distribution_update()
            self.sample_population()

    def eval_policy_mean(self) -> Mlp:
        """Best individual of the last completed generation (distribution
        mean before any generation has finished)."""
        net = Mlp.zeros(self.layer_sizes)
        params = self.best_params if self.best_params is not None else self.dist_mean
        params_load(net, params)
        return net
