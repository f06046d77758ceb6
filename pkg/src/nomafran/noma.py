"""Two-user downlink NOMA with SIC, delivery delay and the MOS score."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ParameterError
from .scenario import ChannelParams, FogUser

DEFAULT_POWER_SPLIT = 0.8
D_BEST = 0.01
D_WORST = 10.0
INFINITE_DELAY = math.inf


@dataclass(frozen=True)
class NomaCluster:
    strong_user: FogUser
    weak_user: Optional[FogUser]
    strong_gain: float
    weak_gain: Optional[float] = None
    power_split: float = DEFAULT_POWER_SPLIT  # share of power given to the weak user

    @property
    def size(self) -> int:
        return 1 if self.weak_user is None else 2


@dataclass(frozen=True)
class RateReport:
    strong_rate: float
    weak_rate: Optional[float]
    sic_feasible: bool


def pair_indices(gains):
    """Strongest-with-weakest pairing over a gain vector.

    Returns ``(strong, weak, single)`` index arrays; ``single`` holds the
    middle user when the count is odd.
    """
    gains = np.asarray(gains)
    order = np.argsort(-gains, kind="stable")
    n = len(order)
    half = n // 2
    strong = order[:half]
    weak = order[n - 1:n - 1 - half:-1] if half else order[:0]
    single = order[half:half + 1] if n % 2 else order[:0]
    return strong, weak, single


def cluster_users(users_with_gains, power_split: float = DEFAULT_POWER_SPLIT) -> list:
    if not users_with_gains:
        return []
    gains = [g for _, g in users_with_gains]
    if any(g <= 0 for g in gains):
        raise ParameterError("channel gains must be positive")
    strong, weak, single = pair_indices(gains)
    clusters = []
    for s, w in zip(strong, weak):
        clusters.append(NomaCluster(users_with_gains[s][0], users_with_gains[w][0],
                                    gains[s], gains[w], power_split))
    for s in single:
        clusters.append(NomaCluster(users_with_gains[s][0], None, gains[s], None, power_split))
    return clusters


def noma_rates(cluster: NomaCluster, total_power: float, channel: ChannelParams) -> RateReport:
    if total_power <= 0:
        raise ParameterError("total_power must be > 0")
    b, n = channel.bandwidth, channel.noise_power
    if cluster.weak_user is None:
        return RateReport(b * math.log2(1.0 + total_power * cluster.strong_gain / n), None, True)
    beta = cluster.power_split
    if not 0.0 < beta < 1.0:
        raise ParameterError(f"power_split must lie in (0, 1), got {beta}")
    g_s, g_w = cluster.strong_gain, cluster.weak_gain
    p_w, p_s = beta * total_power, (1.0 - beta) * total_power
    weak_sinr = p_w * g_w / (p_s * g_w + n)
    sic_sinr = p_w * g_s / (p_s * g_s + n)
    return RateReport(
        strong_rate=b * math.log2(1.0 + p_s * g_s / n),
        weak_rate=b * math.log2(1.0 + weak_sinr),
        sic_feasible=sic_sinr >= weak_sinr,
    )


def pair_rates(strong_gain, weak_gain, total_power, channel: ChannelParams, power_split=DEFAULT_POWER_SPLIT):
    """Vectorised NOMA pair rates; returns ``(strong_rate, weak_rate)`` arrays."""
    b, n = channel.bandwidth, channel.noise_power
    p_w, p_s = power_split * total_power, (1.0 - power_split) * total_power
    strong = b * np.log2(1.0 + p_s * strong_gain / n)
    weak = b * np.log2(1.0 + p_w * weak_gain / (p_s * weak_gain + n))
    return strong, weak


def single_rate(gain, total_power, channel: ChannelParams):
    return channel.bandwidth * np.log2(1.0 + total_power * gain / channel.noise_power)


def cluster_roles(groups, gains):
    """Vectorised strongest-with-weakest pairing within each group.

    ``groups`` labels every user with its serving AP (non-negative ints).  Returns an int array of
    roles: 0 strong, 1 weak, 2 unpaired (odd user out).  Matches
    :func:`pair_indices` applied per group.
    """
    groups = np.asarray(groups)
    n = len(groups)
    roles = np.empty(n, dtype=np.int8)
    if n == 0:
        return roles
    order = np.lexsort((-np.asarray(gains), groups))  # stable: equal gains keep index order
    counts = np.bincount(groups)
    starts = np.cumsum(counts) - counts
    g_sorted = groups[order]
    rank = np.arange(n) - starts[g_sorted]
    size = counts[g_sorted]
    role = (rank >= size // 2).astype(np.int8)
    role[(size % 2 == 1) & (rank == size // 2)] = 2
    roles[order] = role
    return roles


def role_rates(roles, gains, power, channel: ChannelParams, power_split=DEFAULT_POWER_SPLIT):
    """Achievable rate per user from its role; NOMA rates need only the user's own gain."""
    b, n = channel.bandwidth, channel.noise_power
    p_w, p_s = power_split * power, (1.0 - power_split) * power
    sinr = np.where(roles == 0, p_s * gains / n,
                    np.where(roles == 1, p_w * gains / (p_s * gains + n), power * gains / n))
    return b * np.log2(1.0 + sinr)


def delivery_delay(content_size: float, rate: float, miss_penalty: float = 0.0) -> float:
    if content_size <= 0:
        raise ParameterError("content_size must be > 0")
    if miss_penalty < 0:
        raise ParameterError("miss_penalty must be >= 0")
    if rate <= 0:
        return INFINITE_DELAY
    return content_size / rate + miss_penalty


def mos_score(delay, d_best: float = D_BEST, d_worst: float = D_WORST):
    """Map a delay in seconds to a score in [1, 5] by log-linear interpolation.

    ``d_best`` and faster earn 5, ``d_worst`` and slower earn 1.  Accepts a
    scalar or an array; an infinite delay scores 1.
    """
    if not 0 < d_best < d_worst:
        raise ParameterError("need 0 < d_best < d_worst")
    d = np.asarray(delay, dtype=float)
    if np.any(d <= 0) or np.any(np.isnan(d)):
        raise ParameterError("delay must be > 0")
    score = _mos(d, d_best, d_worst)
    return float(score) if score.ndim == 0 else score


def _mos(d, d_best, d_worst):
    with np.errstate(divide="ignore"):
        frac = (math.log(d_worst) - np.log(d)) / (math.log(d_worst) - math.log(d_best))
    return 1.0 + 4.0 * np.clip(frac, 0.0, 1.0)
