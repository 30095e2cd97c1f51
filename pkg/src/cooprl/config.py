"""Run configuration: desk-scale defaults, config-file parsing, validation.

Config files are flat key-value text with one section per component
(stdlib configparser syntax). Command-line overrides use dotted keys,
e.g. ``sac.lr=1e-3`` or ``run.total_steps=5000``. Unknown keys and
out-of-range values are hard errors naming the offending key.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field

from cooprl.envs import ENV_IDS

VARIANTS = (
    "coop",  # all three agents, transfers + dual replay
    "solo-sac",
    "solo-ppo",
    "solo-cem",
    "no-ppo",  # drop the on-policy agent
    "no-cem",  # drop the population agent
    "no-sac",  # drop the global agent; on-policy agent is promoted
    "three-sac-coop",  # homogeneous hierarchy: three off-policy agents, full cooperation
    "three-sac-shared",  # three off-policy agents sharing only the global memory
    "coop-no-transfer",  # mechanism ablations of the full trio, one per mechanism
    "coop-no-local-memory",
    "coop-no-global-memory",
)

SOLO_VARIANTS = ("solo-sac", "solo-ppo", "solo-cem")

# ablation presets: named variants that set one disable flag on the full trio
VARIANT_PRESETS = {
    "coop-no-transfer": "disable_transfer",
    "coop-no-local-memory": "disable_local_memory",
    "coop-no-global-memory": "disable_global_memory",
}


@dataclass
class SacConfig:
    lr: float = 3e-4
    gamma: float = 0.99
    tau: float = 0.005
    alpha: float = 0.2
    batch_size: int = 128
    start_steps: int = 500


@dataclass
class PpoConfig:
    lr: float = 3e-4
    gamma: float = 0.99
    gae_lambda: float = 0.97
    clip_ratio: float = 0.2
    epochs: int = 10
    minibatch_size: int = 64
    init_log_std: float = -0.5


@dataclass
class CemConfig:
    population: int = 10
    elites: int = 5
    noise_init: float = 1e-3
    noise_decay: float = 0.999
    var_init: float = 0.01
    episodes_per_individual: int = 1


@dataclass
class RunConfig:
    env_id: str = "point-dense"
    seed: int = 0
    variant: str = "coop"
    warmup_steps: int = 2_000  # global-agent head start
    phase_steps: int = 1_000  # per-agent steps per iteration
    total_steps: int = 30_000  # terminate once the shared ledger reaches this
    transfer_gap: float = 5.0  # minimum score lead for a transfer to fire
    eval_episodes: int = 5
    reset_flags_each_round: bool = False
    hidden: tuple[int, ...] = (64, 64)

    local_capacity: int = 2_000
    global_capacity: int = 0  # 0 = uncapped
    local_sample_prob: float = 0.3

    disable_transfer: bool = False
    disable_local_memory: bool = False
    disable_global_memory: bool = False

    sac: SacConfig = field(default_factory=SacConfig)
    ppo: PpoConfig = field(default_factory=PpoConfig)
    cem: CemConfig = field(default_factory=CemConfig)

    def validate(self) -> "RunConfig":
        if self.env_id not in ENV_IDS:
            raise ValueError(f"run.env: unknown env id {self.env_id!r}; valid: {sorted(ENV_IDS)}")
        if self.variant not in VARIANTS:
            raise ValueError(f"run.variant: unknown variant {self.variant!r}; valid: {VARIANTS}")
        if self.variant in VARIANT_PRESETS:
            setattr(self, VARIANT_PRESETS[self.variant], True)
        if self.seed < 0:
            raise ValueError(f"run.seed: must be >= 0, got {self.seed}")
        if self.phase_steps < 1:
            raise ValueError(f"run.phase_steps: must be >= 1, got {self.phase_steps}")
        if self.warmup_steps < 0:
            raise ValueError(f"run.warmup_steps: must be >= 0, got {self.warmup_steps}")
        if self.warmup_steps > self.total_steps:
            raise ValueError(
                f"run.warmup_steps: {self.warmup_steps} exceeds run.total_steps {self.total_steps}"
            )
        if not 0.0 <= self.local_sample_prob <= 1.0:
            raise ValueError(
                f"memory.local_sample_prob: must be in [0, 1], got {self.local_sample_prob}"
            )
        if self.local_capacity < 1:
            raise ValueError(f"memory.local_capacity: must be >= 1, got {self.local_capacity}")
        if self.global_capacity < 0:
            raise ValueError(f"memory.global_capacity: must be >= 0, got {self.global_capacity}")
        if self.transfer_gap < 0.0:
            raise ValueError(f"run.transfer_gap: must be >= 0, got {self.transfer_gap}")
        if self.eval_episodes < 1:
            raise ValueError(f"run.eval_episodes: must be >= 1, got {self.eval_episodes}")
        if not 0.0 < self.ppo.clip_ratio < 1.0:
            raise ValueError(f"ppo.clip_ratio: must be in (0, 1), got {self.ppo.clip_ratio}")
        if not 1 <= self.cem.elites <= self.cem.population:
            raise ValueError(
                f"cem.elites: need 1 <= elites <= population, got "
                f"{self.cem.elites}/{self.cem.population}"
            )
        if self.variant in SOLO_VARIANTS and (
            self.disable_transfer or self.disable_local_memory or self.disable_global_memory
        ):
            raise ValueError(
                f"run.variant: disable_* flags are implied by {self.variant!r} and may not be set"
            )
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


# key -> (target, attribute, type); run./memory. map onto RunConfig itself
_SECTION_FIELDS = {
    "run": {
        "env": ("env_id", str),
        "seed": ("seed", int),
        "variant": ("variant", str),
        "warmup_steps": ("warmup_steps", int),
        "phase_steps": ("phase_steps", int),
        "total_steps": ("total_steps", int),
        "transfer_gap": ("transfer_gap", float),
        "eval_episodes": ("eval_episodes", int),
        "reset_flags_each_round": ("reset_flags_each_round", bool),
        "hidden": ("hidden", "int_tuple"),
        "disable_transfer": ("disable_transfer", bool),
        "disable_local_memory": ("disable_local_memory", bool),
        "disable_global_memory": ("disable_global_memory", bool),
    },
    "memory": {
        "local_capacity": ("local_capacity", int),
        "global_capacity": ("global_capacity", int),
        "local_sample_prob": ("local_sample_prob", float),
    },
}
_AGENT_SECTIONS = {"sac": SacConfig, "ppo": PpoConfig, "cem": CemConfig}


def _convert(key: str, raw: str, typ):
    try:
        if typ is bool:
            low = raw.strip().lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError(raw)
        if typ == "int_tuple":
            return tuple(int(x) for x in raw.split(",") if x.strip())
        return typ(raw)
    except (TypeError, ValueError):
        raise ValueError(f"{key}: cannot parse {raw!r} as {typ}") from None


def apply_setting(cfg: RunConfig, dotted_key: str, raw: str) -> None:
    """Apply one 'section.key=value' setting; unknown keys are errors."""
    if "." not in dotted_key:
        raise ValueError(f"{dotted_key}: expected 'section.key' form")
    section, key = dotted_key.split(".", 1)
    if section in _SECTION_FIELDS:
        try:
            attr, typ = _SECTION_FIELDS[section][key]
        except KeyError:
            raise ValueError(f"{dotted_key}: unknown key") from None
        setattr(cfg, attr, _convert(dotted_key, raw, typ))
        return
    if section in _AGENT_SECTIONS:
        sub = getattr(cfg, section)
        if not hasattr(sub, key):
            raise ValueError(f"{dotted_key}: unknown key")
        typ = type(getattr(sub, key))
        setattr(sub, key, _convert(dotted_key, raw, typ))
        return
    raise ValueError(f"{dotted_key}: unknown section {section!r}")


def parse_config(path: str | None = None, overrides: list[str] = ()) -> RunConfig:
    """Resolve a RunConfig from an optional file plus key=value overrides."""
    cfg = RunConfig()
    if path is not None:
        parser = configparser.ConfigParser()
        read = parser.read(path)
        if not read:
            raise ValueError(f"config file not found: {path}")
        for section in parser.sections():
            if section not in _SECTION_FIELDS and section not in _AGENT_SECTIONS:
                raise ValueError(f"{section}: unknown config section")
            for key, raw in parser.items(section):
                apply_setting(cfg, f"{section}.{key}", raw)
    for item in overrides:
        if "=" not in item:
            raise ValueError(f"override {item!r}: expected section.key=value")
        dotted, raw = item.split("=", 1)
        apply_setting(cfg, dotted.strip(), raw.strip())
    return cfg.validate()
