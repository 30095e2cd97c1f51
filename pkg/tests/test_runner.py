"""Training-phase arithmetic, ledger exactness, variant wiring, determinism."""

import numpy as np
import pytest

from cooprl.cem import CemAgent
from cooprl.config import RunConfig, parse_config
from cooprl.envs import Env, EnvSpec
from cooprl.memory import GlobalMemory, TransferFlags
from cooprl.ppo import PpoAgent
from cooprl.runner import (
    MixedSampler,
    TimestepLedger,
    UniformSampler,
    build_wiring,
    run_experiment,
    train_phase,
)
from cooprl.sac import SacAgent


class FixedLengthEnv(Env):
    """Reward 1 per step; episodes always end at the horizon."""

    def __init__(self, horizon: int):
        super().__init__()
        self.spec = EnvSpec(
            obs_dim=2,
            act_dim=1,
            act_low=np.array([-1.0]),
            act_high=np.array([1.0]),
            horizon=horizon,
            reward_bound=1.0,
        )

    def reset(self, seed):
        self._steps = 0
        return np.zeros(2)

    def _dynamics(self, action):
        return np.zeros(2), 1.0, False


def phase_env(agent, horizon):
    agent.env = FixedLengthEnv(horizon)
    return GlobalMemory(), None, TransferFlags()


def test_phase_budget_two_episodes_plus_fragment():
    agent = PpoAgent("ppo", "local1", 1, FixedLengthEnv(4).spec, 0, hidden=(4,), epochs=1)
    gm, lm, flags = phase_env(agent, 4)
    ledger = TimestepLedger(["ppo"])
    used = train_phase(agent, 10, ledger, gm, lm, flags, float("-inf"))
    assert used == 10 and ledger.total == 10
    assert [(length, trunc) for _, _, length, trunc in agent.episode_log] == [
        (4, False),
        (4, False),
        (2, True),
    ]
    assert len(gm) == 10  # every transition committed
    assert agent.current_obs is None  # gradient agents flush at the boundary


def test_sac_runs_episode_length_many_updates_at_terminal():
    agent = SacAgent(
        "sac", "global", 0, FixedLengthEnv(7).spec, 0, hidden=(4,), batch_size=4, start_steps=0
    )
    agent.own_memory = GlobalMemory()
    agent.sampler = UniformSampler(agent.own_memory)
    gm, lm, flags = phase_env(agent, 7)
    ledger = TimestepLedger(["sac"])
    train_phase(agent, 14, ledger, gm, lm, flags, float("-inf"))
    # first episode updates before anything is stored (skipped);
    # second episode: exactly t_e = 7 update steps
    assert agent.adam_q1.state.step == 7
    assert len(agent.episode_log) == 2


def test_cem_full_generation_in_one_phase():
    agent = CemAgent(
        "cem", "local2", 2, FixedLengthEnv(20).spec, 0, hidden=(4,), population=10, elites=5
    )
    gm, lm, flags = phase_env(agent, 20)
    ledger = TimestepLedger(["cem"])
    train_phase(agent, 200, ledger, gm, lm, flags, float("-inf"))
    assert agent.generations == 1
    assert agent.current_individual == 0
    assert len(agent.episode_log) == 10
    # every individual scored one 20-step episode of reward 1 per step
    assert agent.best_fitness == 20.0
    assert ledger.total == 200


def test_cem_pauses_and_resumes_across_phase_boundary():
    agent = CemAgent(
        "cem", "local2", 2, FixedLengthEnv(20).spec, 1, hidden=(4,), population=10, elites=5
    )
    gm, lm, flags = phase_env(agent, 20)
    ledger = TimestepLedger(["cem"])
    train_phase(agent, 30, ledger, gm, lm, flags, float("-inf"))
    assert len(agent.episode_log) == 1  # one finished episode
    assert agent.current_obs is not None  # second episode paused mid-flight
    assert len(agent.episode) == 10
    train_phase(agent, 30, ledger, gm, lm, flags, float("-inf"))
    assert len(agent.episode_log) == 3  # paused episode finished plus one more
    assert ledger.total == 60


def test_ledger_exactness_constructed_run():
    cfg = RunConfig(
        env_id="point-dense",
        seed=0,
        warmup_steps=100,
        phase_steps=50,
        total_steps=400,
        hidden=(4, 4),
    )
    result = run_experiment(cfg)
    assert result.ledger.total == 400
    assert sum(result.ledger.per_agent.values()) == 400
    assert result.summary["iterations"] == 2
    assert result.ledger.per_agent == {"sac": 200, "ppo": 100, "cem": 100}


def test_disable_transfer_produces_no_events():
    cfg = RunConfig(
        warmup_steps=60,
        phase_steps=30,
        total_steps=240,
        hidden=(4, 4),
        disable_transfer=True,
        transfer_gap=0.0,
    )
    result = run_experiment(cfg)
    assert all(row["transfer_events"] == "" for row in result.rows)
    assert result.summary["transfer_count"] == 0


def test_wiring_coop_roles_and_samplers():
    w = build_wiring(RunConfig(hidden=(4, 4)))
    assert [a.name for a in w.agents] == ["sac", "ppo", "cem"]
    assert [a.role for a in w.agents] == ["global", "local1", "local2"]
    assert [a.slot for a in w.agents] == [0, 1, 2]
    assert isinstance(w.agents[0].sampler, MixedSampler)
    assert w.background and w.transfers_enabled
    assert w.lm is not None


def test_wiring_disable_global_memory_uses_own_buffer_no_background():
    w = build_wiring(RunConfig(hidden=(4, 4), disable_global_memory=True))
    assert isinstance(w.agents[0].sampler, UniformSampler)
    assert w.agents[0].sampler.mem is w.agents[0].own_memory
    assert not w.background
    assert w.lm is not None  # admission still logs into the local memory


def test_wiring_disable_local_memory_uniform_from_global():
    w = build_wiring(RunConfig(hidden=(4, 4), disable_local_memory=True))
    assert isinstance(w.agents[0].sampler, UniformSampler)
    assert w.agents[0].sampler.mem is w.gm
    assert w.lm is None
    assert w.background


def test_wiring_three_sac_shared_no_transfers_shared_replay():
    w = build_wiring(RunConfig(hidden=(4, 4), variant="three-sac-shared"))
    assert [a.kind for a in w.agents] == ["sac", "sac", "sac"]
    assert not w.transfers_enabled and not w.background
    assert w.warmup_agent is None and w.lm is None
    assert all(isinstance(a.sampler, UniformSampler) and a.sampler.mem is w.gm for a in w.agents)


def test_wiring_three_sac_coop_hierarchy():
    w = build_wiring(RunConfig(hidden=(4, 4), variant="three-sac-coop"))
    assert [a.role for a in w.agents] == ["global", "local1", "local2"]
    assert isinstance(w.agents[0].sampler, MixedSampler)
    assert isinstance(w.agents[1].sampler, UniformSampler)
    assert w.agents[1].sampler.mem is w.agents[1].own_memory
    assert w.background and w.transfers_enabled
    # a transfer between two off-policy agents copies mean and value nets
    from cooprl.numerics import params_flatten
    from cooprl.transfer import apply_transfers

    # transfers only flow down the hierarchy: sac3's high score moves nothing up
    events = apply_transfers(w.agents, [100.0, 0.0, 200.0], TransferFlags(), 10.0)
    assert [(e.src, e.dst) for e in events] == [("sac1", "sac2")]
    np.testing.assert_array_equal(
        params_flatten(w.agents[1].mean), params_flatten(w.agents[0].mean)
    )
    np.testing.assert_array_equal(
        params_flatten(w.agents[1].v), params_flatten(w.agents[0].v)
    )


def test_wiring_no_sac_promotes_ppo():
    w = build_wiring(RunConfig(hidden=(4, 4), variant="no-sac"))
    assert [a.name for a in w.agents] == ["ppo", "cem"]
    assert w.agents[0].role == "global"
    assert w.warmup_agent is w.agents[0]
    assert not w.background
    assert w.transfers_enabled


def test_wiring_solo_variants():
    w = build_wiring(RunConfig(hidden=(4, 4), variant="solo-sac"))
    assert len(w.agents) == 1 and w.warmup_agent is w.agents[0]
    assert isinstance(w.agents[0].sampler, UniformSampler)
    assert w.agents[0].sampler.mem is w.agents[0].own_memory
    assert not w.background and not w.transfers_enabled and w.lm is None

    w = build_wiring(RunConfig(hidden=(4, 4), variant="solo-ppo"))
    assert w.warmup_agent is None
    w = build_wiring(RunConfig(hidden=(4, 4), variant="solo-cem"))
    assert w.warmup_agent is None


def test_ablation_preset_variants_set_flags():
    cfg = RunConfig(hidden=(4, 4), variant="coop-no-transfer").validate()
    assert cfg.disable_transfer
    w = build_wiring(cfg)
    assert [a.name for a in w.agents] == ["sac", "ppo", "cem"]
    assert not w.transfers_enabled

    w = build_wiring(RunConfig(hidden=(4, 4), variant="coop-no-local-memory"))
    assert w.lm is None
    w = build_wiring(RunConfig(hidden=(4, 4), variant="coop-no-global-memory"))
    assert not w.background
    assert w.agents[0].sampler.mem is w.agents[0].own_memory


def test_wiring_drop_one_local_agent():
    w = build_wiring(RunConfig(hidden=(4, 4), variant="no-ppo"))
    assert [a.name for a in w.agents] == ["sac", "cem"]
    assert [a.role for a in w.agents] == ["global", "local2"]  # canonical flag slot kept
    assert w.background and w.transfers_enabled
    w = build_wiring(RunConfig(hidden=(4, 4), variant="no-cem"))
    assert [a.name for a in w.agents] == ["sac", "ppo"]
    assert [a.role for a in w.agents] == ["global", "local1"]


def test_solo_with_disable_flags_rejected():
    with pytest.raises(ValueError):
        RunConfig(variant="solo-sac", disable_transfer=True).validate()


@pytest.mark.parametrize("env_id", ["point-sparse", "deceptive-corridor"])
def test_tiny_run_on_other_envs(env_id):
    cfg = RunConfig(
        env_id=env_id, warmup_steps=40, phase_steps=20, total_steps=160, hidden=(4, 4)
    )
    cfg.sac.batch_size = 16
    cfg.sac.start_steps = 10
    result = run_experiment(cfg)
    assert result.ledger.total >= 160
    assert result.summary["iterations"] >= 1


def test_reset_flags_each_round_smoke():
    cfg = RunConfig(
        warmup_steps=40,
        phase_steps=20,
        total_steps=160,
        hidden=(4, 4),
        reset_flags_each_round=True,
        transfer_gap=1e9,  # no transfer ever fires
    )
    result = run_experiment(cfg)
    assert result.summary["transfer_count"] == 0


def test_run_is_deterministic_per_seed():
    cfg = parse_config(
        None,
        [
            "run.warmup_steps=60",
            "run.phase_steps=30",
            "run.total_steps=240",
            "run.hidden=4,4",
            "sac.batch_size=16",
            "sac.start_steps=20",
        ],
    )
    a = run_experiment(cfg)
    b = run_experiment(cfg)
    assert a.csv_text == b.csv_text
    assert a.summary == b.summary


def test_different_seeds_diverge():
    base = [
        "run.warmup_steps=60",
        "run.phase_steps=30",
        "run.total_steps=240",
        "run.hidden=4,4",
        "sac.batch_size=16",
        "sac.start_steps=20",
    ]
    a = run_experiment(parse_config(None, base + ["run.seed=0"]))
    b = run_experiment(parse_config(None, base + ["run.seed=1"]))
    assert a.csv_text != b.csv_text


def test_csv_columns_and_row_shape():
    cfg = RunConfig(warmup_steps=60, phase_steps=30, total_steps=240, hidden=(4, 4))
    result = run_experiment(cfg)
    header = result.csv_text.splitlines()[0].split(",")
    assert header == [
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
    ]
    assert len(result.csv_text.splitlines()) == 1 + result.summary["iterations"]
    first = result.rows[0]
    assert first["t"] == 60 + 3 * 30
    assert first["mem_global_size"] > 0
