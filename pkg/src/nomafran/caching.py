"""Cooperative caching MDP over NOMA content delivery, plus static baselines.

State: the joint placement of contents in every F-AP's cache slots, kept in a
canonical form (each AP's slots sorted, empty slots as -1) so that it can key
a Q-table.  Action: replace the content in one (ap, slot) with a catalog item.
Reward: mean MOS of a batch of requests delivered under that placement.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations, product
from typing import Optional

import numpy as np

from .errors import SimulationError
from .noma import D_BEST, D_WORST, DEFAULT_POWER_SPLIT, _mos, cluster_roles, role_rates
from .popularity import normalize_popularity
from .scenario import Scenario

EMPTY = -1


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class CachingAction:
    ap: int
    slot: int
    content: int


class CachePlacement:
    """Per-AP slot contents; ``matrix`` gives the boolean AP x content view."""

    __slots__ = ("slots", "n_contents")

    def __init__(self, slots, n_contents: int):
        self.slots = tuple(tuple(sorted(int(c) for c in row)) for row in slots)
        self.n_contents = n_contents

    @classmethod
    def from_key(cls, key, n_contents):
        return cls(key, n_contents)

    @property
    def key(self):
        return self.slots

    @property
    def matrix(self) -> np.ndarray:
        m = np.zeros((len(self.slots), self.n_contents), dtype=bool)
        for a, row in enumerate(self.slots):
            for c in row:
                if c != EMPTY:
                    m[a, c] = True
        return m

    def diversity(self) -> int:
        """Distinct contents cached anywhere in the network."""
        return len({c for row in self.slots for c in row if c != EMPTY})

    def apply(self, action: CachingAction) -> "CachePlacement":
        row = list(self.slots[action.ap])
        # a content already held elsewhere in this AP stays single-copy: no-op
        if action.content in row and row[action.slot] != action.content:
            return self
        row[action.slot] = action.content
        slots = list(self.slots)
        slots[action.ap] = tuple(row)
        return CachePlacement(slots, self.n_contents)

    def __eq__(self, other):
        return isinstance(other, CachePlacement) and self.slots == other.slots

    def __hash__(self):
        return hash(self.slots)

    def __repr__(self):
        return f"CachePlacement({self.slots})"


@dataclass
class CachingConfig:
    batch_size: int = 50
    episode_length: int = 100
    transmit_power_dbm: Optional[float] = None  # None: use each AP's own power
    power_split: float = DEFAULT_POWER_SPLIT
    d_best: float = D_BEST
    d_worst: float = D_WORST
    initial_placement: str = "empty"  # or "random"


def empty_placement(scenario: Scenario) -> CachePlacement:
    return CachePlacement([[EMPTY] * ap.cache_capacity for ap in scenario.aps], len(scenario.catalog))


def random_placement(scenario: Scenario, rng) -> CachePlacement:
    """Each AP holds ``capacity`` distinct contents drawn uniformly (or the whole catalog if smaller)."""
    F = len(scenario.catalog)
    rows = []
    for ap in scenario.aps:
        k = min(ap.cache_capacity, F)
        row = list(rng.choice(F, size=k, replace=False)) + [EMPTY] * (ap.cache_capacity - k)
        rows.append(row)
    return CachePlacement(rows, F)


def baseline_random(scenario: Scenario, seed) -> CachePlacement:
    return random_placement(scenario, np.random.default_rng(seed))


def top_k_contents(popularity, k: int) -> list:
    """Indices of the ``k`` most popular contents; lower id wins ties."""
    pop = np.asarray(popularity, dtype=float)
    order = sorted(range(len(pop)), key=lambda f: (-pop[f], f))
    return order[:k]


def baseline_noncooperative(scenario: Scenario, popularity) -> CachePlacement:
    F = len(scenario.catalog)
    rows = []
    for ap in scenario.aps:
        top = top_k_contents(popularity, min(ap.cache_capacity, F))
        rows.append(top + [EMPTY] * (ap.cache_capacity - len(top)))
    return CachePlacement(rows, F)


def placement_from_contents(scenario: Scenario, per_ap_contents) -> CachePlacement:
    rows = []
    for ap, contents in zip(scenario.aps, per_ap_contents):
        contents = list(contents)
        if len(contents) > ap.cache_capacity:
            raise SimulationError(f"AP {ap.id} holds {len(contents)} > capacity {ap.cache_capacity}")
        rows.append(contents + [EMPTY] * (ap.cache_capacity - len(contents)))
    return CachePlacement(rows, len(scenario.catalog))


class DeliveryModel:
    """Serves request batches for a fixed scenario; gains and sizes are precomputed."""

    def __init__(self, scenario: Scenario, config: CachingConfig):
        self.scenario = scenario
        self.config = config
        self.gains = scenario.gain_matrix()
        if len(scenario.ues):
            self.nearest = np.argmin(scenario.distance_matrix(), axis=0)
        else:
            self.nearest = np.zeros(0, dtype=int)
        self.sizes = np.array([c.size for c in scenario.catalog])
        self.fronthaul = np.array([ap.fronthaul_delay for ap in scenario.aps])
        self.ap_power = np.array([ap.transmit_power for ap in scenario.aps])
        self._cdf_key = None
        self._cdf_val = None
        self._memo = {}
        self.memo_limit = 20000

    def power(self, transmit_power_dbm=None) -> np.ndarray:
        dbm = self.config.transmit_power_dbm if transmit_power_dbm is None else transmit_power_dbm
        if dbm is None:
            return self.ap_power
        return np.full(len(self.scenario.aps), dbm_to_watts(dbm))

    def sample_requests(self, popularity, rng, batch_size=None):
        n = self.config.batch_size if batch_size is None else batch_size
        cdf = self._cdf(popularity)
        ues = rng.integers(len(self.scenario.ues), size=n)
        contents = np.minimum(np.searchsorted(cdf, rng.random(n), side="right"), len(cdf) - 1)
        return ues, contents

    def _cdf(self, popularity):
        key = np.asarray(popularity, dtype=float).tobytes()
        if key != self._cdf_key:
            self._cdf_key, self._cdf_val = key, np.cumsum(normalize_popularity(popularity))
        return self._cdf_val

    def tables(self, cached: np.ndarray, power):
        """Per (ue, content) serving AP, hit flag and MOS for each NOMA role.

        Returns ``(serving, gain, hit, mos)`` with ``mos`` shaped (3, U, F),
        indexed by role (strong, weak, unpaired).  Memoised per placement and
        power because training revisits the same placements many times.
        """
        key = cached.tobytes() + np.asarray(power, dtype=float).tobytes()
        hit_memo = self._memo.get(key)
        if hit_memo is not None:
            return hit_memo
        cand = self.gains[:, :, None] * cached[:, None, :]  # (A, U, F)
        best = cand.argmax(axis=0)
        hit = np.take_along_axis(cand, best[None], axis=0)[0] > 0
        serving = np.where(hit, best, self.nearest[:, None])
        u_idx = np.arange(self.gains.shape[1])[:, None]
        gain = self.gains[serving, u_idx]
        penalty = np.where(hit, 0.0, self.fronthaul[serving])
        ch = self.scenario.channel
        mos = np.empty((3,) + serving.shape)
        for role in range(3):
            rates = role_rates(np.full(serving.shape, role), gain, power[serving], ch, self.config.power_split)
            with np.errstate(divide="ignore"):
                mos[role] = _mos(self.sizes[None, :] / rates + penalty, self.config.d_best, self.config.d_worst)
        if len(self._memo) >= self.memo_limit:
            self._memo.clear()
        out = (serving, gain, hit, mos)
        self._memo[key] = out
        return out

    def serve(self, cached: np.ndarray, ues, contents, power):
        """Per-request (mos, hit) for a boolean placement matrix.

        Each request goes to the caching AP with the strongest channel to its
        UE; a request no AP caches goes to the nearest AP and pays that AP's
        fronthaul delay.  Requests landing on the same AP are NOMA-paired,
        one orthogonal resource block per cluster.
        """
        serving, gain, hit, mos = self.tables(cached, power)
        srv = serving[ues, contents]
        roles = cluster_roles(srv, gain[ues, contents])
        return mos[roles, ues, contents], hit[ues, contents]


class CachingEnv:
    """Cooperative caching MDP.

    ``popularity`` is a (T, F) matrix; episode ``e`` samples requests from
    row ``min(e, T-1)``, so a random-walk series drifts the demand from one
    episode to the next.
    """

    def __init__(self, scenario: Scenario, popularity, config: Optional[CachingConfig] = None, seed=None):
        self.scenario = scenario
        self.config = config or CachingConfig()
        pop = np.asarray(popularity, dtype=float)
        self.popularity = pop[None, :] if pop.ndim == 1 else pop
        if self.popularity.shape[1] != len(scenario.catalog):
            raise SimulationError("popularity width must equal catalog size")
        self.delivery = DeliveryModel(scenario, self.config)
        self.rng = np.random.default_rng(seed)
        self.capacities = [ap.cache_capacity for ap in scenario.aps]
        self.n_contents = len(scenario.catalog)
        self._slot_offsets = np.concatenate([[0], np.cumsum(self.capacities)])
        self.n_actions = int(self._slot_offsets[-1]) * self.n_contents
        self._power = self.delivery.power()
        self.episode = -1
        self.placement = empty_placement(scenario)

    # -- action encoding
    def decode_action(self, index: int) -> CachingAction:
        if not 0 <= index < self.n_actions:
            raise SimulationError(f"action index {index} out of range [0, {self.n_actions})")
        slot_flat, content = divmod(int(index), self.n_contents)
        ap = int(np.searchsorted(self._slot_offsets, slot_flat, side="right") - 1)
        return CachingAction(ap, slot_flat - int(self._slot_offsets[ap]), content)

    def encode_action(self, action: CachingAction) -> int:
        self._check_action(action)
        return (int(self._slot_offsets[action.ap]) + action.slot) * self.n_contents + action.content

    def _check_action(self, action: CachingAction):
        if not 0 <= action.ap < len(self.capacities):
            raise SimulationError(f"AP index {action.ap} out of range")
        if not 0 <= action.slot < self.capacities[action.ap]:
            raise SimulationError(f"slot {action.slot} out of range for AP {action.ap}")
        if not 0 <= action.content < self.n_contents:
            raise SimulationError(f"content {action.content} out of range")

    @property
    def current_popularity(self) -> np.ndarray:
        return self.popularity[min(max(self.episode, 0), len(self.popularity) - 1)]

    def set_power_dbm(self, dbm):
        self._power = self.delivery.power(dbm)

    def reset(self, initial=None):
        self.episode += 1
        mode = initial or self.config.initial_placement
        if mode == "empty":
            self.placement = empty_placement(self.scenario)
        elif mode == "random":
            self.placement = random_placement(self.scenario, self.rng)
        else:
            raise SimulationError(f"unknown initial placement {mode!r}")
        return self.placement.key

    def transition(self, state_key, action_index: int):
        """Placement reached from ``state_key`` by an action, without sampling a reward."""
        return CachePlacement(state_key, self.n_contents).apply(self.decode_action(action_index)).key

    def reward(self, placement: CachePlacement, rng=None, popularity=None) -> float:
        rng = self.rng if rng is None else rng
        pop = self.current_popularity if popularity is None else popularity
        ues, contents = self.delivery.sample_requests(pop, rng)
        mos, _ = self.delivery.serve(placement.matrix, ues, contents, self._power)
        return float(mos.mean())

    def step(self, action):
        if isinstance(action, CachingAction):
            self._check_action(action)
            act = action
        else:
            act = self.decode_action(action)
        self.placement = self.placement.apply(act)
        return self.placement.key, self.reward(self.placement), False

    def step_placement(self, placement: CachePlacement, action: CachingAction, popularity, rng):
        """Functional form of ``step``: returns (new placement, reward)."""
        self._check_action(action)
        new = placement.apply(action)
        return new, self.reward(new, rng, popularity)


@dataclass
class MosEstimate:
    mean: float
    std: float
    hit_ratio: float
    placement: CachePlacement


def greedy_rollout(agent, env: CachingEnv, start: CachePlacement, max_steps: int = 200) -> CachePlacement:
    """Follow the agent's greedy actions until the placement stops changing or repeats."""
    key = start.key
    seen = {key}
    for _ in range(max_steps):
        nxt = env.transition(key, agent.greedy_action(key))
        if nxt == key or nxt in seen:
            key = nxt
            break
        seen.add(nxt)
        key = nxt
    return CachePlacement(key, env.n_contents)


def evaluate_policy_mos(placement_or_agent, env: CachingEnv, popularity, transmit_power_dbm,
                        eval_batches: int = 20, seed=0, start: Optional[CachePlacement] = None) -> MosEstimate:
    """Mean and std (over batches) of per-batch mean MOS for a fixed placement.

    The request batches depend only on ``seed``, so different placements and
    powers are compared on identical demand.
    """
    if eval_batches < 1:
        raise ValueError("eval_batches must be >= 1")
    if isinstance(placement_or_agent, CachePlacement):
        placement = placement_or_agent
    else:
        if start is None:
            # roll out from the same kind of placement the agent trained from
            if env.config.initial_placement == "empty":
                start = empty_placement(env.scenario)
            else:
                start = random_placement(env.scenario, np.random.default_rng(seed))
        placement = greedy_rollout(placement_or_agent, env, start)
    rng = np.random.default_rng(seed)
    power = env.delivery.power(transmit_power_dbm)
    cached = placement.matrix
    means, hits = [], []
    for _ in range(eval_batches):
        ues, contents = env.delivery.sample_requests(popularity, rng)
        mos, hit = env.delivery.serve(cached, ues, contents, power)
        means.append(mos.mean())
        hits.append(hit.mean())
    return MosEstimate(float(np.mean(means)), float(np.std(means)), float(np.mean(hits)), placement)


def hit_ratio(placement: CachePlacement, popularity) -> float:
    """Expected fraction of requests served from some cache."""
    probs = normalize_popularity(popularity)
    return float(probs[placement.matrix.any(axis=0)].sum())


def all_single_ap_placements(n_contents: int, capacity: int):
    """Every capacity-saturating content set for one AP."""
    return [list(c) for c in combinations(range(n_contents), capacity)]


def enumerate_placements(env: CachingEnv):
    """All capacity-saturating joint placements (for brute-force checks on small instances)."""
    per_ap = [all_single_ap_placements(env.n_contents, min(c, env.n_contents)) for c in env.capacities]
    for combo in product(*per_ap):
        yield placement_from_contents(env.scenario, combo)
