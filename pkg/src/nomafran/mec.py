"""Cache-aided MEC: local / fog / cloud execution with result caching at the F-APs.

A task either runs on the UE, is uploaded and computed at its F-AP (fog), or
is forwarded over the fronthaul to the cloud.  Results of offloaded tasks can
be cached at the AP; a later request of the same task type is then answered by
downloading the cached result only.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .agents import QTable, TrainedAgent, train_agent
from .errors import ConfigurationError, ParameterError, SimulationError
from .noma import single_rate
from .popularity import zipf_distribution
from .scenario import Scenario

SITES = ("local", "fog", "cloud")
POLICIES = ("always-local", "always-fog", "greedy-min-cost", "q_learning")
DEFAULT_DEADLINES = (0.5, 1.0, 2.0, 5.0)


@dataclass(frozen=True)
class MecTask:
    type_id: int
    input_size: float  # bits
    cycles: float
    result_size: float  # bits
    deadline: float  # s

    def __post_init__(self):
        for name in ("input_size", "cycles", "result_size", "deadline"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(name, "must be > 0")


@dataclass(frozen=True)
class ComputeSite:
    kind: str
    cpu_freq: float
    fronthaul_rate: Optional[float] = None  # bits/s, cloud only

    def __post_init__(self):
        if self.kind not in SITES:
            raise ConfigurationError("kind", f"expected one of {SITES}")
        if self.cpu_freq <= 0:
            raise ConfigurationError("cpu_freq", "must be > 0")
        if self.kind == "cloud" and not (self.fronthaul_rate and self.fronthaul_rate > 0):
            raise ConfigurationError("fronthaul_rate", "cloud site needs a positive fronthaul rate")


@dataclass(frozen=True)
class Sites:
    fog: ComputeSite
    cloud: ComputeSite

    def __post_init__(self):
        if self.cloud.cpu_freq < self.fog.cpu_freq:
            raise ConfigurationError("cloud_cpu_freq", "cloud must be at least as fast as the fog node")


@dataclass(frozen=True)
class MecDecision:
    site: str
    cache_result: bool = False

    def __post_init__(self):
        if self.site not in SITES:
            raise SimulationError(f"unknown site {self.site!r}")
        if self.site == "local" and self.cache_result:
            raise SimulationError("local execution cannot cache a result at the AP")


ACTIONS = (
    MecDecision("local"),
    MecDecision("fog"),
    MecDecision("fog", True),
    MecDecision("cloud"),
    MecDecision("cloud", True),
)


class ResultCache:
    """LRU set of task types whose results are held at one AP."""

    def __init__(self, capacity: int):
        if capacity < 0:
            raise ConfigurationError("result_cache_capacity", "must be >= 0")
        self.capacity = capacity
        self._entries: OrderedDict = OrderedDict()

    def __contains__(self, type_id):
        return type_id in self._entries

    def __len__(self):
        return len(self._entries)

    def order(self) -> list:
        """Types from least to most recently used."""
        return list(self._entries)

    def touch(self, type_id):
        if type_id in self._entries:
            self._entries.move_to_end(type_id)

    def insert(self, type_id):
        """Insert or refresh ``type_id``; returns the evicted type, if any."""
        if self.capacity == 0:
            return None
        if type_id in self._entries:
            self._entries.move_to_end(type_id)
            return None
        evicted = None
        if len(self._entries) >= self.capacity:
            evicted, _ = self._entries.popitem(last=False)
        self._entries[type_id] = True
        return evicted

    def clear(self):
        self._entries.clear()


@dataclass
class CostBreakdown:
    latency: float
    energy: float
    phases: dict
    cache_hit: bool = False


def offload_cost(task: MecTask, decision: MecDecision, ue, uplink_rate, downlink_rate, sites: Sites,
                 cached: bool = False, ue_tx_power: float = 0.1) -> CostBreakdown:
    """Latency and UE energy of serving ``task`` under ``decision``.

    ``cached`` says whether the task type's result is held at the UE's AP.
    The reported latency is the sum of the phase entries, in insertion order.
    """
    if decision.site != "local" and (uplink_rate <= 0 or downlink_rate <= 0):
        raise ParameterError("link rates must be > 0")
    if decision.site != "local" and cached:
        phases = {"download": task.result_size / downlink_rate}
        return CostBreakdown(_total(phases), 0.0, phases, cache_hit=True)
    if decision.site == "local":
        phases = {"local_compute": task.cycles / ue.local_cpu_freq}
        energy = ue.local_energy_coeff * ue.local_cpu_freq ** 2 * task.cycles
        return CostBreakdown(_total(phases), energy, phases)
    upload = task.input_size / uplink_rate
    phases = {"offload": upload}
    if decision.site == "fog":
        phases["processing"] = task.cycles / sites.fog.cpu_freq
    else:
        fh = sites.cloud.fronthaul_rate
        phases["fronthaul_up"] = task.input_size / fh
        phases["processing"] = task.cycles / sites.cloud.cpu_freq
        phases["fronthaul_down"] = task.result_size / fh
    phases["download"] = task.result_size / downlink_rate
    return CostBreakdown(_total(phases), ue_tx_power * upload, phases)


def _total(phases: dict) -> float:
    total = 0.0
    for v in phases.values():
        total += v
    return total


def default_task_catalog(n_types=10, seed=0, deadlines=DEFAULT_DEADLINES) -> list:
    rng = np.random.default_rng(seed)
    tasks = []
    for k in range(n_types):
        tasks.append(MecTask(
            type_id=k,
            input_size=float(rng.uniform(0.5e6, 2e6)),
            cycles=float(rng.uniform(0.2e9, 1.5e9)),
            result_size=float(rng.uniform(0.05e6, 0.2e6)),
            deadline=float(deadlines[k % len(deadlines)]),
        ))
    return tasks


@dataclass
class MecConfig:
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
    uplink_rate: Optional[float] = None  # override the computed rate (bits/s)
    downlink_rate: Optional[float] = None
    catalog_seed: int = 0


class MecEnv:
    """Single-task-in-flight MEC environment.

    State ``(ue, type_id, cached)``: the arriving task, its UE and whether the
    UE's AP already holds that type's result.  Actions index :data:`ACTIONS`.
    """

    def __init__(self, scenario: Scenario, config: Optional[MecConfig] = None, seed=None,
                 arrival_probs=None, tasks=None):
        if not scenario.ues:
            raise SimulationError("MEC environment needs at least one UE")
        self.scenario = scenario
        self.config = cfg = config or MecConfig()
        self.tasks = tasks or default_task_catalog(cfg.n_task_types, cfg.catalog_seed)
        self.sites = Sites(ComputeSite("fog", cfg.fog_cpu_freq),
                           ComputeSite("cloud", cfg.cloud_cpu_freq, cfg.fronthaul_rate))
        if arrival_probs is None:
            arrival_probs = zipf_distribution(len(self.tasks), cfg.zipf_exponent)
        self.arrival_probs = np.asarray(arrival_probs, dtype=float)
        self.rng = np.random.default_rng(seed)
        self.n_actions = len(ACTIONS)
        dist = scenario.distance_matrix()
        self.ap_of = np.argmin(dist, axis=0)
        gains = scenario.gain_matrix()[self.ap_of, np.arange(len(scenario.ues))]
        ch = scenario.channel
        ap_power = np.array([scenario.aps[a].transmit_power for a in self.ap_of])
        # one task in flight: both links are single-user NOMA clusters
        self.uplink = single_rate(gains, cfg.ue_tx_power, ch) if cfg.uplink_rate is None \
            else np.full(len(gains), float(cfg.uplink_rate))
        self.downlink = single_rate(gains, ap_power, ch) if cfg.downlink_rate is None \
            else np.full(len(gains), float(cfg.downlink_rate))
        self.caches = [ResultCache(cfg.result_cache_capacity) for _ in scenario.aps]
        self.current = None

    def sample_arrival(self, rng=None):
        rng = self.rng if rng is None else rng
        ue = int(rng.integers(len(self.scenario.ues)))
        type_id = int(rng.choice(len(self.tasks), p=self.arrival_probs))
        return ue, type_id

    def arrival_trace(self, n, seed):
        rng = np.random.default_rng(seed)
        return [self.sample_arrival(rng) for _ in range(n)]

    def state_of(self, arrival):
        ue, type_id = arrival
        return ue, type_id, type_id in self.caches[self.ap_of[ue]]

    def reset(self, arrival=None):
        for c in self.caches:
            c.clear()
        self.current = self.sample_arrival() if arrival is None else arrival
        return self.state_of(self.current)

    def cost(self, arrival, decision: MecDecision) -> CostBreakdown:
        ue, type_id = arrival
        cache = self.caches[self.ap_of[ue]]
        return offload_cost(self.tasks[type_id], decision, self.scenario.ues[ue], self.uplink[ue],
                            self.downlink[ue], self.sites, type_id in cache, self.config.ue_tx_power)

    def reward_of(self, task: MecTask, cost: CostBreakdown) -> float:
        cfg = self.config
        r = -(cfg.weight_latency * cost.latency / task.deadline + cfg.weight_energy * cost.energy / cfg.energy_ref)
        if cost.latency > task.deadline:
            r -= cfg.deadline_penalty
        return r

    def apply(self, arrival, action):
        """Serve ``arrival`` with ``action``; updates the AP cache and returns (reward, cost)."""
        if isinstance(action, MecDecision):
            decision = action
        else:
            if not 0 <= action < len(ACTIONS):
                raise SimulationError(f"invalid MEC action {action}")
            decision = ACTIONS[action]
        ue, type_id = arrival
        cost = self.cost(arrival, decision)
        cache = self.caches[self.ap_of[ue]]
        if cost.cache_hit:
            cache.touch(type_id)
        elif decision.cache_result:
            cache.insert(type_id)
        return self.reward_of(self.tasks[type_id], cost), cost

    def step(self, action):
        reward, _ = self.apply(self.current, action)
        self.current = self.sample_arrival()
        return self.state_of(self.current), reward, False


def mec_step(env: MecEnv, action):
    """Serve the pending task and draw the next one: ``(next_state, reward)``."""
    state, reward, _ = env.step(action)
    return state, reward


def greedy_action(env: MecEnv, arrival) -> int:
    """Myopic minimum-cost action; ties go to the caching variant, then lower index."""
    best, best_key = 0, None
    for idx, decision in enumerate(ACTIONS):
        ue, type_id = arrival
        cost = env.cost(arrival, decision)
        key = (-env.reward_of(env.tasks[type_id], cost), not decision.cache_result, idx)
        if best_key is None or key < best_key:
            best, best_key = idx, key
    return best


@dataclass
class MecSummary:
    policy: str
    mean_latency: float
    mean_energy: float
    violation_rate: float
    mean_cost: float
    decisions: list = field(default_factory=list, repr=False)


def evaluate_mec_policy(env: MecEnv, policy, trace, name="policy") -> MecSummary:
    """Run ``policy(env, arrival) -> action`` over a fixed arrival trace from empty caches."""
    for c in env.caches:
        c.clear()
    lat, en, viol, costs, decisions = [], [], [], [], []
    for arrival in trace:
        a = policy(env, arrival)
        reward, cost = env.apply(arrival, a)
        lat.append(cost.latency)
        en.append(cost.energy)
        viol.append(cost.latency > env.tasks[arrival[1]].deadline)
        costs.append(-reward)
        decisions.append(a)
    return MecSummary(name, float(np.mean(lat)), float(np.mean(en)), float(np.mean(viol)),
                      float(np.mean(costs)), decisions)


def fixed_policy(action_index):
    return lambda env, arrival: action_index


def agent_policy(agent: TrainedAgent):
    return lambda env, arrival: agent.greedy_action(env.state_of(arrival))


def run_mec_experiment(scenario: Scenario, agent_kind="q_learning", episodes=200, seed=0,
                       config: Optional[MecConfig] = None, steps_per_episode=100, eval_steps=2000,
                       alpha=0.75, gamma=0.6, seeds=None) -> list:
    """Train the RL policy, then evaluate every policy on the same arrival trace.

    ``seeds`` optionally gives ``(train_env_seed, agent_seed, trace_seed)``;
    by default all derive from ``seed``.
    """
    if episodes < 1 or eval_steps < 1:
        raise ValueError("episodes and eval_steps must be >= 1")
    env_seed, agent_seed, trace_seed = seeds or (seed, seed + 1, seed + 2)
    train_env = MecEnv(scenario, config, seed=env_seed)
    agent = train_agent(train_env, agent_kind, episodes, steps_per_episode, seed=agent_seed,
                        alpha=alpha, gamma=gamma)
    env = MecEnv(scenario, config, seed=env_seed)
    trace = env.arrival_trace(eval_steps, trace_seed)
    policies = {
        "always-local": fixed_policy(0),
        "always-fog": fixed_policy(1),
        "greedy-min-cost": greedy_action,
        "q_learning": agent_policy(agent),
    }
    return [evaluate_mec_policy(env, fn, trace, name) for name, fn in policies.items()]

