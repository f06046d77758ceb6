"""Tabular Q-learning, pursuit learning automata, LA-driven Q-learning (LAQL) and a small DQN.

Environments follow a minimal protocol::

    env.n_actions            -> int
    env.reset()              -> hashable state
    env.step(action)         -> (next_state, reward, done)
    env.state_features(s)    -> 1-D float array   (DQN only)

Episodes end on ``done`` or after ``steps_per_episode`` steps.  A terminal
state's Q-row is never updated, so it reads as zero when bootstrapping.
"""

from __future__ import annotations

import csv
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import SimulationError, TrainingError
from .neural import MLP, Adam

AGENT_KINDS = ("q_learning", "laql", "dqn")


# -- explicit MDPs and the value-iteration oracle ----------------------------------

@dataclass
class ExplicitMDP:
    transitions: np.ndarray  # (S, A, S) probabilities
    rewards: np.ndarray  # (S, A) expected immediate reward
    start: int = 0
    terminal: frozenset = frozenset()
    blocked: frozenset = frozenset()  # unreachable cells, never used as starts

    @property
    def n_states(self) -> int:
        return self.transitions.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transitions.shape[1]


def value_iteration(mdp: ExplicitMDP, gamma: float, tol: float = 1e-12, max_iter: int = 100000) -> np.ndarray:
    """Optimal Q-table by Bellman optimality iteration (terminal states hold value 0)."""
    if not 0.0 <= gamma < 1.0:
        raise ValueError("gamma must lie in [0, 1)")
    P, R = mdp.transitions, mdp.rewards
    live = np.ones(mdp.n_states)
    live[list(mdp.terminal)] = 0.0
    Q = np.zeros_like(R, dtype=float)
    for _ in range(max_iter):
        V = Q.max(axis=1) * live
        Q_new = R + gamma * P @ V
        Q_new[list(mdp.terminal)] = 0.0
        delta = np.max(np.abs(Q_new - Q))
        Q = Q_new
        if delta < tol:
            break
    return Q


def two_state_mdp() -> ExplicitMDP:
    """s0: a0 stays (r=0), a1 moves to s1 (r=1); s1 is absorbing with r=0."""
    P = np.zeros((2, 2, 2))
    P[0, 0, 0] = 1.0
    P[0, 1, 1] = 1.0
    P[1, :, 1] = 1.0
    R = np.array([[0.0, 1.0], [0.0, 0.0]])
    return ExplicitMDP(P, R, start=0, terminal=frozenset({1}))


GRID_MOVES = ((-1, 0), (1, 0), (0, -1), (0, 1))  # up, down, left, right


SERPENTINE_WALLS = ((1, 0), (1, 1), (1, 2), (1, 3), (3, 1), (3, 2), (3, 3), (3, 4))


def gridworld_mdp(rows=5, cols=5, goal=None, start=(0, 0), walls=()) -> ExplicitMDP:
    """Deterministic gridworld: reward 1 on entering the goal, which is terminal.

    Moves into walls or off the grid leave the agent in place.  States are
    numbered row-major.
    """
    goal = (rows - 1, cols - 1) if goal is None else goal
    walls = set(walls)
    S, A = rows * cols, len(GRID_MOVES)
    P = np.zeros((S, A, S))
    R = np.zeros((S, A))
    for r in range(rows):
        for c in range(cols):
            s = r * cols + c
            for a, (dr, dc) in enumerate(GRID_MOVES):
                nr, nc = r + dr, c + dc
                if not (0 <= nr < rows and 0 <= nc < cols) or (nr, nc) in walls:
                    nr, nc = r, c
                P[s, a, nr * cols + nc] = 1.0
                if (nr, nc) == goal and (r, c) != goal:
                    R[s, a] = 1.0
    return ExplicitMDP(P, R, start=start[0] * cols + start[1], terminal=frozenset({goal[0] * cols + goal[1]}),
                       blocked=frozenset(r * cols + c for r, c in walls))


class MDPEnv:
    """Sampled-transition environment over an :class:`ExplicitMDP`.

    With ``random_start`` the episode starts from a uniformly drawn
    non-terminal state (exploring starts).
    """

    def __init__(self, mdp: ExplicitMDP, seed=None, random_start=False):
        self.mdp = mdp
        self.n_actions = mdp.n_actions
        self.rng = np.random.default_rng(seed)
        self.random_start = random_start
        self._starts = [s for s in range(mdp.n_states) if s not in mdp.terminal and s not in mdp.blocked]
        self.state = mdp.start

    def reset(self):
        if self.random_start:
            self.state = int(self._starts[self.rng.integers(len(self._starts))])
        else:
            self.state = self.mdp.start
        return self.state

    def step(self, action):
        if not 0 <= action < self.n_actions:
            raise SimulationError(f"invalid action {action}")
        s = self.state
        probs = self.mdp.transitions[s, action]
        nxt = int(np.flatnonzero(probs)[0]) if probs.max() == 1.0 else int(self.rng.choice(len(probs), p=probs))
        self.state = nxt
        return nxt, float(self.mdp.rewards[s, action]), nxt in self.mdp.terminal

    @property
    def n_features(self) -> int:
        return self.mdp.n_states

    def state_features(self, state):
        x = np.zeros(self.mdp.n_states)
        x[state] = 1.0
        return x


# -- tabular Q-learning --------------------------------------------------------------

class QTable:
    """Sparse Q-table; rows appear on first write, unseen entries read 0."""

    def __init__(self, n_actions: int, alpha: float = 0.75, gamma: float = 0.6):
        if not 0.0 < alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")
        if not 0.0 <= gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        self.n_actions = n_actions
        self.alpha = alpha
        self.gamma = gamma
        self.table: dict = {}

    def row(self, state) -> np.ndarray:
        r = self.table.get(state)
        return np.zeros(self.n_actions) if r is None else r

    def value(self, state, action) -> float:
        return float(self.row(state)[action])

    def __contains__(self, state):
        return state in self.table

    def greedy(self, state) -> int:
        return int(np.argmax(self.row(state)))

    def update(self, s, a, r, s_next) -> float:
        row = self.table.get(s)
        if row is None:
            row = self.table[s] = np.zeros(self.n_actions)
        target = r + self.gamma * float(self.row(s_next).max())
        row[a] += self.alpha * (target - row[a])
        return float(row[a])


def q_update(table: QTable, s, a, r, s_next) -> float:
    return table.update(s, a, r, s_next)


def epsilon_greedy_select(table: QTable, s, epsilon: float, rng) -> int:
    if rng.random() < epsilon:
        return int(rng.integers(table.n_actions))
    return table.greedy(s)


def linear_epsilon(episode, episodes, start=1.0, end=0.05) -> float:
    if episodes <= 1:
        return end
    return start + (end - start) * episode / (episodes - 1)


# -- pursuit learning automaton ------------------------------------------------------

class PursuitAutomaton:
    """Per-state action probability vectors updated by the pursuit rule.

    Each state keeps a probability simplex ``p``, running-mean reward
    estimates and visit counts per action.  Unseen states start uniform with
    zero estimates.
    """

    def __init__(self, n_actions: int, rate: float = 0.1):
        if not 0.0 < rate < 1.0:
            raise ValueError("pursuit rate must lie in (0, 1)")
        self.n_actions = n_actions
        self.rate = rate
        self.probs: dict = {}
        self.estimates: dict = {}
        self.counts: dict = {}
        self._state_reward_mean: dict = {}
        self._state_visits: dict = {}

    def vector(self, state) -> np.ndarray:
        p = self.probs.get(state)
        return np.full(self.n_actions, 1.0 / self.n_actions) if p is None else p

    def __contains__(self, state):
        return state in self.probs

    def _ensure(self, state):
        if state not in self.probs:
            self.probs[state] = np.full(self.n_actions, 1.0 / self.n_actions)
            self.estimates[state] = np.zeros(self.n_actions)
            self.counts[state] = np.zeros(self.n_actions, dtype=np.int64)

    def set_vector(self, state, p):
        self._ensure(state)
        self.probs[state] = np.asarray(p, dtype=float).copy()

    def best_action(self, state) -> int:
        est = self.estimates.get(state)
        return 0 if est is None else int(np.argmax(est))

    def update(self, state, action, signal) -> np.ndarray:
        self._ensure(state)
        counts, est = self.counts[state], self.estimates[state]
        counts[action] += 1
        est[action] += (signal - est[action]) / counts[action]
        best = int(np.argmax(est))
        p = self.probs[state]
        p *= 1.0 - self.rate
        p[best] += self.rate
        return p

    def select(self, state, rng) -> int:
        p = self.vector(state)
        # inverse-CDF draw; searchsorted keeps it exact for degenerate vectors
        u = rng.random() * p.sum()
        return int(min(np.searchsorted(np.cumsum(p), u, side="right"), self.n_actions - 1))

    def binarize(self, state, reward) -> int:
        """1 if ``reward`` beats the running mean reward seen in ``state``, else 0."""
        mean = self._state_reward_mean.get(state, 0.0)
        n = self._state_visits.get(state, 0) + 1
        self._state_visits[state] = n
        self._state_reward_mean[state] = mean + (reward - mean) / n
        return 1 if reward > mean else 0


def la_update(automaton: PursuitAutomaton, s, a, reward_signal) -> np.ndarray:
    return automaton.update(s, a, reward_signal)


def la_select(automaton: PursuitAutomaton, s, rng) -> int:
    return automaton.select(s, rng)


# -- DQN -------------------------------------------------------------------------------

class ReplayBuffer:
    def __init__(self, capacity: int, seed=None):
        self.buffer = deque(maxlen=capacity)
        self.rng = np.random.default_rng(seed)

    def push(self, s, a, r, s_next, done):
        self.buffer.append((s, a, r, s_next, done))

    def sample(self, batch_size):
        idx = self.rng.integers(len(self.buffer), size=batch_size)
        s, a, r, s2, d = zip(*(self.buffer[i] for i in idx))
        return np.array(s), np.array(a), np.array(r, dtype=float), np.array(s2), np.array(d, dtype=float)

    def __len__(self):
        return len(self.buffer)


def dqn_loss_and_grads(batch, q_net: MLP, target_net: MLP, gamma: float):
    """TD loss ``mean (Q(s,a) - (r + gamma * max Q_target(s')))^2`` and its gradient w.r.t. ``q_net``."""
    s, a, r, s_next, done = batch
    a = np.asarray(a, dtype=int)
    q_out, cache = q_net._forward(s)
    next_q = target_net.predict(s_next).max(axis=1)
    target = r + gamma * (1.0 - done) * next_q
    rows = np.arange(len(a))
    diff = q_out[rows, a] - target
    loss = float(np.mean(diff ** 2))
    dout = np.zeros_like(q_out)
    dout[rows, a] = 2.0 * diff / len(a)
    return loss, q_net.backward(cache, dout)


def dqn_update(batch, q_net: MLP, target_net: MLP, optimizer, gamma: float) -> float:
    loss, grads = dqn_loss_and_grads(batch, q_net, target_net, gamma)
    if not math.isfinite(loss):
        raise TrainingError(-1, "non-finite DQN loss")
    optimizer.step(grads)
    return loss


@dataclass
class DQNConfig:
    hidden: tuple = (32,)
    learning_rate: float = 1e-3
    batch_size: int = 32
    buffer_size: int = 10000
    target_sync: int = 100
    warmup: int = 64


# -- training loop ---------------------------------------------------------------------

@dataclass
class TrainedAgent:
    kind: str
    n_actions: int
    history: list
    q_table: Optional[QTable] = None
    automaton: Optional[PursuitAutomaton] = None
    network: Optional[MLP] = None
    featurize: Optional[object] = field(default=None, repr=False)

    def greedy_action(self, state) -> int:
        if self.kind == "dqn":
            return int(np.argmax(self.network.predict(self.featurize(state))[0]))
        if self.kind == "laql" and state in self.automaton:
            return int(np.argmax(self.automaton.vector(state)))
        return self.q_table.greedy(state)

    def q_values(self, state) -> np.ndarray:
        if self.kind == "dqn":
            return self.network.predict(self.featurize(state))[0]
        return self.q_table.row(state)

    def write_history_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["episode", "sum_reward"])
            for ep, total in enumerate(self.history):
                w.writerow([ep, repr(float(total))])

    def policy_dump(self, states) -> str:
        return "".join(f"{s!r} -> {self.greedy_action(s)}\n" for s in states)


def train_agent(env, agent_kind: str, episodes: int, steps_per_episode: int, seed=None,
                alpha: float = 0.75, gamma: float = 0.6, la_rate: float = 0.1,
                eps_start: float = 1.0, eps_end: float = 0.05,
                dqn: Optional[DQNConfig] = None) -> TrainedAgent:
    if agent_kind not in AGENT_KINDS:
        raise ValueError(f"unknown agent kind {agent_kind!r}")
    if episodes < 1 or steps_per_episode < 1:
        raise ValueError("episodes and steps_per_episode must be >= 1")
    rng = np.random.default_rng(seed)
    n_actions = env.n_actions
    history = []
    agent = TrainedAgent(agent_kind, n_actions, history)

    if agent_kind == "dqn":
        cfg = dqn or DQNConfig()
        net_seed, buf_seed = rng.integers(2 ** 63, size=2)
        sizes = [env.n_features, *cfg.hidden, n_actions]
        q_net = MLP(sizes, "relu", "identity", seed=int(net_seed))
        target_net = MLP(sizes, "relu", "identity")
        target_net.copy_params_from(q_net)
        opt = Adam(q_net.params, cfg.learning_rate)
        buffer = ReplayBuffer(cfg.buffer_size, seed=int(buf_seed))
        agent.network, agent.featurize = q_net, env.state_features
        updates = 0
    else:
        agent.q_table = QTable(n_actions, alpha, gamma)
        if agent_kind == "laql":
            agent.automaton = PursuitAutomaton(n_actions, la_rate)

    for ep in range(episodes):
        eps = linear_epsilon(ep, episodes, eps_start, eps_end)
        s = env.reset()
        total = 0.0
        for t in range(steps_per_episode):
            if agent_kind == "laql":
                a = agent.automaton.select(s, rng)
            elif agent_kind == "q_learning":
                a = epsilon_greedy_select(agent.q_table, s, eps, rng)
            else:
                if rng.random() < eps:
                    a = int(rng.integers(n_actions))
                else:
                    a = int(np.argmax(q_net.predict(env.state_features(s))[0]))
            try:
                s_next, r, done = env.step(a)
            except Exception as exc:
                raise SimulationError(f"environment step failed: {exc}", ep, t) from exc
            total += r
            if agent_kind == "dqn":
                buffer.push(env.state_features(s), a, r, env.state_features(s_next), done)
                if len(buffer) >= max(cfg.warmup, cfg.batch_size):
                    dqn_update(buffer.sample(cfg.batch_size), q_net, target_net, opt, gamma)
                    updates += 1
                    if updates % cfg.target_sync == 0:
                        target_net.copy_params_from(q_net)
            else:
                agent.q_table.update(s, a, r, s_next)
                if agent_kind == "laql":
                    agent.automaton.update(s, a, agent.automaton.binarize(s, r))
            s = s_next
            if done:
                break
        history.append(total)
    if agent_kind == "dqn":
        q_net.trained = True
    return agent
