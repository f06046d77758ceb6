"""Flat ``key = value`` experiment configuration.

One pair per line, ``#`` starts a comment, dotted keys select a section::

    experiment = cache-sim
    seeds = 0, 1, 2, 3, 4
    rl.alpha = 0.75
    caching.sweep_dbm = 10, 15, 20, 25, 30, 35, 40

Absent keys keep their defaults; unknown keys are rejected.
"""

import dataclasses
from dataclasses import dataclass, field
from typing import Optional

from .caching import CachingConfig
from .errors import ConfigParseError, ConfigurationError
from .mec import MecConfig
from .scenario import ChannelParams, ScenarioTemplate

EXPERIMENTS = ("forecast", "cache-sim", "mec-sim")
CACHE_SCHEMES = ("laql", "q_learning", "noncoop", "random")


@dataclass
class RLSection:
    alpha: float = 0.75
    gamma: float = 0.6
    eps_start: float = 1.0
    eps_end: float = 0.05
    la_rate: float = 0.05
    episodes: int = 1000
    steps_per_episode: int = 100

    def validate(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigurationError("rl.alpha", f"must lie in (0, 1], got {self.alpha}")
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigurationError("rl.gamma", f"must lie in [0, 1), got {self.gamma}")
        for name in ("eps_start", "eps_end"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigurationError(f"rl.{name}", "must lie in [0, 1]")
        if not 0.0 < self.la_rate < 1.0:
            raise ConfigurationError("rl.la_rate", "must lie in (0, 1)")
        if self.episodes < 1:
            raise ConfigurationError("rl.episodes", "must be >= 1")
        if self.steps_per_episode < 1:
            raise ConfigurationError("rl.steps_per_episode", "must be >= 1")


@dataclass
class ForecastSection:
    cells: tuple = ("lstm",)
    hidden: int = 16
    window: int = 5
    length: int = 500
    step_bound: float = 0.05
    goal_mse: float = 0.01
    max_epochs: int = 5000
    learning_rate: float = 0.01
    optimizer: str = "adam"
    train_fraction: float = 0.7
    early_stop: bool = True  # False: spend the whole epoch budget

    def validate(self):
        for c in self.cells:
            if c not in ("dense", "rnn", "lstm"):
                raise ConfigurationError("forecast.cells", f"unknown cell {c!r}")
        if not self.cells:
            raise ConfigurationError("forecast.cells", "must name at least one cell")
        if self.hidden < 1:
            raise ConfigurationError("forecast.hidden", "must be >= 1")
        if self.window < 1:
            raise ConfigurationError("forecast.window", "must be >= 1")
        if self.length <= self.window:
            raise ConfigurationError("forecast.length", "must exceed the window")
        if self.step_bound <= 0:
            raise ConfigurationError("forecast.step_bound", "must be > 0")
        if self.goal_mse <= 0:
            raise ConfigurationError("forecast.goal_mse", "must be > 0")
        if self.max_epochs < 1:
            raise ConfigurationError("forecast.max_epochs", "must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigurationError("forecast.learning_rate", "must be > 0")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigurationError("forecast.optimizer", "must be adam or sgd")
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigurationError("forecast.train_fraction", "must lie in (0, 1)")


@dataclass
class CachingSection:
    schemes: tuple = CACHE_SCHEMES
    sweep_dbm: tuple = (10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0)
    batch_size: int = 50
    eval_batches: int = 20
    zipf_exponent: float = 0.8
    popularity_step: float = 0.0005  # random-walk bound per episode
    initial_placement: str = "empty"

    def validate(self):
        for s in self.schemes:
            if s not in CACHE_SCHEMES:
                raise ConfigurationError("caching.schemes", f"unknown scheme {s!r}")
        if not self.schemes:
            raise ConfigurationError("caching.schemes", "must name at least one scheme")
        if not self.sweep_dbm:
            raise ConfigurationError("caching.sweep_dbm", "must hold at least one power")
        if self.batch_size < 1:
            raise ConfigurationError("caching.batch_size", "must be >= 1")
        if self.eval_batches < 1:
            raise ConfigurationError("caching.eval_batches", "must be >= 1")
        if self.zipf_exponent < 0:
            raise ConfigurationError("caching.zipf_exponent", "must be >= 0")
        if self.popularity_step <= 0:
            raise ConfigurationError("caching.popularity_step", "must be > 0")
        if self.initial_placement not in ("empty", "random"):
            raise ConfigurationError("caching.initial_placement", "must be empty or random")

    def env_config(self, episode_length, power_dbm=None) -> CachingConfig:
        return CachingConfig(batch_size=self.batch_size, episode_length=episode_length,
                             transmit_power_dbm=power_dbm, initial_placement=self.initial_placement)


@dataclass
class MecSection:
    n_task_types: int = 10
    fog_cpu_freq: float = 10e9
    cloud_cpu_freq: float = 50e9
    fronthaul_rate: float = 20e6
    ue_tx_power: float = 0.1
    result_cache_capacity: int = 3
    weight_latency: float = 0.5
    weight_energy: float = 0.5
    energy_ref: float = 1.0
    deadline_penalty: float = 1.0
    zipf_exponent: float = 0.8
    uplink_rate: Optional[float] = None
    downlink_rate: Optional[float] = None
    eval_steps: int = 2000

    def validate(self):
        if self.n_task_types < 1:
            raise ConfigurationError("mec.n_task_types", "must be >= 1")
        for name in ("fog_cpu_freq", "cloud_cpu_freq", "fronthaul_rate", "ue_tx_power", "energy_ref"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"mec.{name}", "must be > 0")
        if self.cloud_cpu_freq < self.fog_cpu_freq:
            raise ConfigurationError("mec.cloud_cpu_freq", "must be >= mec.fog_cpu_freq")
        if self.result_cache_capacity < 0:
            raise ConfigurationError("mec.result_cache_capacity", "must be >= 0")
        for name in ("weight_latency", "weight_energy", "deadline_penalty", "zipf_exponent"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"mec.{name}", "must be >= 0")
        for name in ("uplink_rate", "downlink_rate"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise ConfigurationError(f"mec.{name}", "must be > 0")
        if self.eval_steps < 1:
            raise ConfigurationError("mec.eval_steps", "must be >= 1")

    def env_config(self) -> MecConfig:
        kw = {f.name: getattr(self, f.name) for f in dataclasses.fields(MecConfig) if hasattr(self, f.name)}
        return MecConfig(**kw)


@dataclass
class ExperimentConfig:
    experiment: str = "cache-sim"
    seeds: tuple = (0, 1, 2, 3, 4)
    output_dir: str = "results"
    workers: int = 1
    scenario: ScenarioTemplate = field(default_factory=ScenarioTemplate)
    rl: RLSection = field(default_factory=RLSection)
    forecast: ForecastSection = field(default_factory=ForecastSection)
    caching: CachingSection = field(default_factory=CachingSection)
    mec: MecSection = field(default_factory=MecSection)

    def validate(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigurationError("experiment", f"expected one of {EXPERIMENTS}")
        if not self.seeds:
            raise ConfigurationError("seeds", "must be non-empty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigurationError("seeds", "must be distinct")
        if self.workers < 1:
            raise ConfigurationError("workers", "must be >= 1")
        try:
            self.scenario.validate()
        except ConfigurationError as exc:
            raise ConfigurationError(f"scenario.{exc.field}", str(exc).split(": ", 1)[-1]) from None
        ch = self.scenario.channel
        if not 2.0 <= ch.path_loss_exponent <= 6.0:
            raise ConfigurationError("channel.path_loss_exponent", "must lie in [2, 6]")
        for name in ("noise_power", "bandwidth", "reference_gain"):
            if getattr(ch, name) <= 0:
                raise ConfigurationError(f"channel.{name}", "must be > 0")
        if ch.fading not in ("none", "rayleigh"):
            raise ConfigurationError("channel.fading", "must be none or rayleigh")
        for section in (self.rl, self.forecast, self.caching, self.mec):
            section.validate()
        return self


# -- parsing --------------------------------------------------------------------

_TOP_LEVEL = {"experiment": str, "seeds": "int_list", "output_dir": str, "workers": int}
_SCENARIO_SKIP = {"channel", "ap_positions"}


def _coerce(raw: str, kind, key):
    try:
        if kind == "int_list":
            return tuple(int(v) for v in _split(raw))
        if kind == "float_list":
            return tuple(float(v) for v in _split(raw))
        if kind == "str_list":
            return tuple(_split(raw))
        if kind is bool:
            low = raw.lower()
            if low in ("true", "yes", "1"):
                return True
            if low in ("false", "no", "0"):
                return False
            raise ValueError(raw)
        if kind == "opt_float":
            return None if raw.lower() == "none" else float(raw)
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        return raw
    except ValueError:
        raise ConfigurationError(key, f"cannot parse {raw!r}") from None


def _split(raw):
    return [v.strip() for v in raw.split(",") if v.strip()]


def _kind_of(default):
    if isinstance(default, bool):
        return bool
    if isinstance(default, int):
        return int
    if isinstance(default, float):
        return float
    if isinstance(default, tuple):
        if default and isinstance(default[0], str):
            return "str_list"
        return "float_list"
    if default is None:
        return "opt_float"
    return str


def _section_kinds(cls, skip=()):
    kinds = {}
    for f in dataclasses.fields(cls):
        if f.name in skip:
            continue
        default = f.default if f.default is not dataclasses.MISSING else f.default_factory()
        kinds[f.name] = _kind_of(default)
    return kinds


_SECTIONS = {
    "scenario": (ScenarioTemplate, _section_kinds(ScenarioTemplate, _SCENARIO_SKIP)),
    "channel": (ChannelParams, _section_kinds(ChannelParams)),
    "rl": (RLSection, _section_kinds(RLSection)),
    "forecast": (ForecastSection, _section_kinds(ForecastSection)),
    "caching": (CachingSection, _section_kinds(CachingSection)),
    "mec": (MecSection, _section_kinds(MecSection)),
}


def parse_config(text: str) -> ExperimentConfig:
    values = {name: {} for name in _SECTIONS}
    top = {}
    seen = set()
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigParseError(line_no, f"expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigParseError(line_no, "empty key")
        if key in seen:
            raise ConfigParseError(line_no, f"duplicate key {key!r}")
        seen.add(key)
        if "." in key:
            section, name = key.split(".", 1)
            if section not in _SECTIONS or name not in _SECTIONS[section][1]:
                raise ConfigurationError(key, "unknown key")
            values[section][name] = _coerce(raw, _SECTIONS[section][1][name], key)
        else:
            if key not in _TOP_LEVEL:
                raise ConfigurationError(key, "unknown key")
            top[key] = _coerce(raw, _TOP_LEVEL[key], key)

    try:
        channel = ChannelParams(**values["channel"])
    except ConfigurationError as exc:
        raise ConfigurationError(f"channel.{exc.field}", str(exc).split(": ", 1)[-1]) from None
    cfg = ExperimentConfig(
        scenario=ScenarioTemplate(channel=channel, **values["scenario"]),
        rl=RLSection(**values["rl"]),
        forecast=ForecastSection(**values["forecast"]),
        caching=CachingSection(**values["caching"]),
        mec=MecSection(**values["mec"]),
        **top,
    )
    return cfg.validate()


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config(fh.read())


def dump_config(cfg: ExperimentConfig) -> str:
    """Render ``cfg`` back into the flat format; ``parse_config`` round-trips it."""
    lines = []
    for key in _TOP_LEVEL:
        lines.append(f"{key} = {_fmt(getattr(cfg, key))}")
    objs = {"scenario": cfg.scenario, "channel": cfg.scenario.channel, "rl": cfg.rl,
            "forecast": cfg.forecast, "caching": cfg.caching, "mec": cfg.mec}
    for section, (_, kinds) in _SECTIONS.items():
        for name in kinds:
            lines.append(f"{section}.{name} = {_fmt(getattr(objs[section], name))}")
    return "\n".join(lines) + "\n"


def _fmt(v):
    if isinstance(v, tuple):
        return ", ".join(_fmt(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    if v is None:
        return "none"
    return str(v)
