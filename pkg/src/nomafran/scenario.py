"""Network geometry, entities and the large-scale channel model.

A :class:`Scenario` is an immutable snapshot of the simulated world: fog access
points (F-APs) with caches, fog users (F-UEs), the content catalog and the
channel constants.  Scenarios are produced from a :class:`ScenarioTemplate` and
a seed by :func:`generate_scenario`; the same pair always yields the same
scenario.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigurationError

FADING_MODES = ("none", "rayleigh")


@dataclass(frozen=True)
class Position:
    x: float
    y: float

    def distance_to(self, other: "Position") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


@dataclass(frozen=True)
class FogAccessPoint:
    id: int
    position: Position
    cache_capacity: int
    transmit_power: float  # W
    fronthaul_delay: float  # s

    def __post_init__(self):
        if self.cache_capacity < 1:
            raise ConfigurationError("cache_capacity", f"must be >= 1, got {self.cache_capacity}")
        if self.transmit_power <= 0:
            raise ConfigurationError("transmit_power", "must be > 0")
        if self.fronthaul_delay < 0:
            raise ConfigurationError("fronthaul_delay", "must be >= 0")


@dataclass(frozen=True)
class FogUser:
    id: int
    position: Position
    local_cpu_freq: float  # cycles/s
    local_energy_coeff: float  # J s^2 / cycle^3

    def __post_init__(self):
        if self.local_cpu_freq <= 0:
            raise ConfigurationError("local_cpu_freq", "must be > 0")
        if self.local_energy_coeff <= 0:
            raise ConfigurationError("local_energy_coeff", "must be > 0")


@dataclass(frozen=True)
class Content:
    id: int
    size: float  # bits

    def __post_init__(self):
        if self.size <= 0:
            raise ConfigurationError("content_size", "must be > 0")


@dataclass(frozen=True)
class ChannelParams:
    path_loss_exponent: float = 3.0
    reference_gain: float = 1e-3  # linear gain at 1 m
    noise_power: float = 4e-14  # W
    bandwidth: float = 10e6  # Hz
    fading: str = "none"

    def __post_init__(self):
        if not 2.0 <= self.path_loss_exponent <= 6.0:
            raise ConfigurationError("path_loss_exponent", "must lie in [2, 6]")
        if self.reference_gain <= 0:
            raise ConfigurationError("reference_gain", "must be > 0")
        if self.noise_power <= 0:
            raise ConfigurationError("noise_power", "must be > 0")
        if self.bandwidth <= 0:
            raise ConfigurationError("bandwidth", "must be > 0")
        if self.fading not in FADING_MODES:
            raise ConfigurationError("fading", f"expected one of {FADING_MODES}")


@dataclass(frozen=True)
class Scenario:
    region_diameter: float
    aps: tuple
    ues: tuple
    catalog: tuple
    channel: ChannelParams
    rng_seed: int

    @property
    def center(self) -> Position:
        return Position(0.0, 0.0)

    @property
    def radius(self) -> float:
        return self.region_diameter / 2.0

    def gain_matrix(self, fading_draws: Optional[np.ndarray] = None) -> np.ndarray:
        """Return the (n_aps, n_ues) matrix of large-scale channel gains."""
        gains = np.empty((len(self.aps), len(self.ues)))
        for i, ap in enumerate(self.aps):
            for j, ue in enumerate(self.ues):
                draw = 1.0 if fading_draws is None else float(fading_draws[i, j])
                gains[i, j] = channel_gain(ap, ue, self.channel, draw)
        return gains

    def distance_matrix(self) -> np.ndarray:
        return np.array([[ap.position.distance_to(ue.position) for ue in self.ues]
                         for ap in self.aps]).reshape(len(self.aps), len(self.ues))


@dataclass(frozen=True)
class ScenarioTemplate:
    """Field ranges and counts from which scenarios are drawn."""

    region_diameter: float = 4000.0
    n_aps: int = 2
    n_ues: int = 20
    n_contents: int = 10
    content_size: float = 10e6
    cache_capacity: int = 2
    transmit_power: float = 1.0
    fronthaul_delay: float = 2.0
    ue_cpu_freq: float = 1e9
    ue_energy_coeff: float = 1e-28
    ap_positions: Optional[tuple] = None
    channel: ChannelParams = field(default_factory=ChannelParams)

    def validate(self):
        if self.region_diameter <= 0:
            raise ConfigurationError("region_diameter", "must be > 0")
        if self.n_aps < 1:
            raise ConfigurationError("n_aps", "must be >= 1")
        if self.n_ues < 0:
            raise ConfigurationError("n_ues", "must be >= 0")
        if self.n_contents < 1:
            raise ConfigurationError("n_contents", "catalog must be non-empty")
        if self.content_size <= 0:
            raise ConfigurationError("content_size", "must be > 0")
        if self.cache_capacity < 1:
            raise ConfigurationError("cache_capacity", f"must be >= 1, got {self.cache_capacity}")
        if self.transmit_power <= 0:
            raise ConfigurationError("transmit_power", "must be > 0")
        if self.fronthaul_delay < 0:
            raise ConfigurationError("fronthaul_delay", "must be >= 0")
        if self.ue_cpu_freq <= 0:
            raise ConfigurationError("ue_cpu_freq", "must be > 0")
        if self.ue_energy_coeff <= 0:
            raise ConfigurationError("ue_energy_coeff", "must be > 0")
        if self.ap_positions is not None:
            if len(self.ap_positions) != self.n_aps:
                raise ConfigurationError("ap_positions", "length must equal n_aps")
            r = self.region_diameter / 2.0
            for x, y in self.ap_positions:
                if math.hypot(x, y) > r:
                    raise ConfigurationError("ap_positions", f"({x}, {y}) outside region")


def ring_positions(n: int, radius: float) -> list:
    """Evenly spaced points on a circle around the origin, first at angle 0."""
    if n == 1:
        return [Position(0.0, 0.0)]
    return [Position(radius * math.cos(2 * math.pi * k / n), radius * math.sin(2 * math.pi * k / n))
            for k in range(n)]


def uniform_disc(rng: np.random.Generator, n: int, radius: float) -> np.ndarray:
    """``n`` points uniform over a disc of the given radius, shape (n, 2)."""
    r = radius * np.sqrt(rng.random(n))
    theta = 2.0 * np.pi * rng.random(n)
    return np.column_stack([r * np.cos(theta), r * np.sin(theta)])


def generate_scenario(template: ScenarioTemplate, seed: int) -> Scenario:
    template.validate()
    rng = np.random.default_rng(seed)
    radius = template.region_diameter / 2.0
    if template.ap_positions is not None:
        ap_pos = [Position(float(x), float(y)) for x, y in template.ap_positions]
    else:
        ap_pos = ring_positions(template.n_aps, template.region_diameter / 4.0)
    aps = tuple(FogAccessPoint(i, p, template.cache_capacity, template.transmit_power,
                               template.fronthaul_delay) for i, p in enumerate(ap_pos))
    pts = uniform_disc(rng, template.n_ues, radius)
    ues = tuple(FogUser(j, Position(float(x), float(y)), template.ue_cpu_freq, template.ue_energy_coeff)
                for j, (x, y) in enumerate(pts))
    catalog = tuple(Content(f, template.content_size) for f in range(template.n_contents))
    return Scenario(template.region_diameter, aps, ues, catalog, template.channel, int(seed))


def channel_gain(ap: FogAccessPoint, ue: FogUser, channel: ChannelParams, fading_draw: float = 1.0) -> float:
    """Distance-based power gain between an AP and a UE, with the distance floored at 1 m."""
    d = max(ap.position.distance_to(ue.position), 1.0)
    return channel.reference_gain * d ** (-channel.path_loss_exponent) * fading_draw


def rayleigh_draws(rng: np.random.Generator, shape) -> np.ndarray:
    # Rayleigh amplitude -> exponential power with unit mean.
    return rng.exponential(1.0, size=shape)


def dump_scenario(scenario: Scenario) -> str:
    """Line-oriented text dump; floats in repr form so the dump is exact."""
    ch = scenario.channel
    lines = [
        f"scenario seed={scenario.rng_seed} region_diameter={scenario.region_diameter!r}",
        f"channel path_loss_exponent={ch.path_loss_exponent!r} reference_gain={ch.reference_gain!r} "
        f"noise_power={ch.noise_power!r} bandwidth={ch.bandwidth!r} fading={ch.fading}",
    ]
    for ap in scenario.aps:
        lines.append(f"ap {ap.id} x={ap.position.x!r} y={ap.position.y!r} capacity={ap.cache_capacity} "
                     f"power={ap.transmit_power!r} fronthaul_delay={ap.fronthaul_delay!r}")
    for ue in scenario.ues:
        lines.append(f"ue {ue.id} x={ue.position.x!r} y={ue.position.y!r} cpu={ue.local_cpu_freq!r} "
                     f"kappa={ue.local_energy_coeff!r}")
    for c in scenario.catalog:
        lines.append(f"content {c.id} size={c.size!r}")
    return "\n".join(lines) + "\n"
