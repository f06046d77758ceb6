import numpy as np
import pytest
from hypothesis import given, strategies as st

from nomafran.agents import (MDPEnv, PursuitAutomaton, QTable, ReplayBuffer, dqn_loss_and_grads, dqn_update,
                             epsilon_greedy_select, gridworld_mdp, la_select, la_update, linear_epsilon,
                             q_update, train_agent, two_state_mdp, value_iteration)
from nomafran.errors import SimulationError
from nomafran.neural import MLP, Adam, finite_difference_gradients, max_relative_error


def test_q_update_examples():
    t = QTable(2, alpha=0.75, gamma=0.6)
    assert q_update(t, "s", 0, 1.0, "s2") == pytest.approx(0.75)
    t2 = QTable(2, alpha=0.75, gamma=0.6)
    t2.table["s"] = np.array([1.0, 0.0])
    t2.table["n"] = np.array([1.0, 0.0])
    assert q_update(t2, "s", 0, 0.0, "n") == pytest.approx(0.7)
    t3 = QTable(2)
    assert q_update(t3, "s", 1, 0.0, "s") == 0.0


def test_qtable_ranges():
    with pytest.raises(ValueError):
        QTable(2, alpha=0.0)
    with pytest.raises(ValueError):
        QTable(2, gamma=1.0)


def test_epsilon_greedy_examples():
    rng = np.random.default_rng(0)
    t = QTable(3)
    t.table["s"] = np.array([0.1, 0.9, 0.3])
    assert epsilon_greedy_select(t, "s", 0.0, rng) == 1
    t.table["u"] = np.array([0.5, 0.5, 0.0])
    assert epsilon_greedy_select(t, "u", 0.0, rng) == 0


def test_epsilon_one_is_uniform():
    rng = np.random.default_rng(1)
    t = QTable(4)
    counts = np.bincount([epsilon_greedy_select(t, "s", 1.0, rng) for _ in range(100000)], minlength=4)
    assert np.all(np.abs(counts / 100000 - 0.25) < 0.02)


def test_linear_epsilon_schedule():
    assert linear_epsilon(0, 11) == 1.0
    assert linear_epsilon(10, 11) == pytest.approx(0.05)
    assert linear_epsilon(5, 11) == pytest.approx(0.525)


def test_la_update_examples():
    la = PursuitAutomaton(2, rate=0.1)
    p = la_update(la, "s", 0, 1)
    assert np.allclose(p, [0.55, 0.45])
    la.set_vector("t", [1.0, 0.0])
    assert np.allclose(la_update(la, "t", 0, 1), [1.0, 0.0])


def test_la_closed_form_recurrence():
    la = PursuitAutomaton(2, rate=0.1)
    for k in range(1, 30):
        p = la_update(la, "s", 0, 1)
        assert p[0] == pytest.approx(1 - 0.5 * 0.9 ** k, abs=1e-12)


def test_la_tie_goes_to_lowest_index():
    la = PursuitAutomaton(3, rate=0.2)
    p = la_update(la, "s", 2, 0)  # all estimates zero: action 0 is pursued
    assert np.argmax(p) == 0


def test_la_select_examples():
    rng = np.random.default_rng(0)
    la = PursuitAutomaton(3)
    la.set_vector("s", [1.0, 0.0, 0.0])
    assert all(la_select(la, "s", rng) == 0 for _ in range(1000))
    la2 = PursuitAutomaton(2)
    la2.set_vector("s", [0.55, 0.45])
    freq = np.bincount([la_select(la2, "s", rng) for _ in range(100000)], minlength=2) / 100000
    assert np.all(np.abs(freq - [0.55, 0.45]) < 0.02)
    assert np.allclose(la.vector("fresh"), 1 / 3)


@given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 1)), min_size=1, max_size=200),
       st.floats(0.001, 0.999))
def test_la_simplex_and_pursuit_monotone(updates, rate):
    la = PursuitAutomaton(5, rate)
    for a, signal in updates:
        before = la.vector("s").copy()
        p = la_update(la, "s", a, signal)
        best = la.best_action("s")
        assert p[best] >= before[best]
        assert abs(p.sum() - 1.0) < 1e-9 and np.all(p >= 0)


def test_binarize_against_running_mean():
    la = PursuitAutomaton(2)
    assert la.binarize("s", 1.0) == 1  # nothing to compare with yet: mean starts at 0
    assert la.binarize("s", 0.5) == 0
    assert la.binarize("s", 0.9) == 1  # mean of (1.0, 0.5) is 0.75


def test_value_iteration_examples():
    Q = value_iteration(two_state_mdp(), 0.5)
    assert Q[0, 1] == pytest.approx(1.0)
    assert Q[0, 0] == pytest.approx(0.5)
    assert np.allclose(Q[1], 0.0)
    mdp = gridworld_mdp(3, 3)
    assert np.allclose(value_iteration(mdp, 0.0), mdp.rewards * (np.arange(9) != 8)[:, None])
    mdp.rewards[:] = 0.0
    assert np.allclose(value_iteration(mdp, 0.9), 0.0)


def _shortest_path_lengths(rows, cols, goal, walls=()):
    from collections import deque
    dist = {goal: 0}
    queue = deque([goal])
    while queue:
        r, c = queue.popleft()
        for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            n = (r + dr, c + dc)
            if 0 <= n[0] < rows and 0 <= n[1] < cols and n not in walls and n not in dist:
                dist[n] = dist[(r, c)] + 1
                queue.append(n)
    return dist


def test_gridworld_greedy_reaches_goal_in_minimum_steps():
    mdp = gridworld_mdp(5, 5)
    agent = train_agent(MDPEnv(mdp, seed=0, random_start=True), "q_learning", 1500, 50, seed=1, gamma=0.9)
    env = MDPEnv(mdp, seed=0)
    s, steps, done = env.reset(), 0, False
    while not done and steps < 50:
        s, _, done = env.step(agent.greedy_action(s))
        steps += 1
    assert done and steps == _shortest_path_lengths(5, 5, (4, 4))[(0, 0)]


def test_two_state_mdp_learned():
    for kind in ("q_learning", "laql"):
        agent = train_agent(MDPEnv(two_state_mdp(), seed=0), kind, 500, 10, seed=2, gamma=0.5)
        assert agent.q_values(0)[1] == pytest.approx(1.0, abs=1e-3)
        assert agent.greedy_action(0) == 1


def test_train_agent_rejects_zero_episodes():
    with pytest.raises(ValueError):
        train_agent(MDPEnv(two_state_mdp()), "q_learning", 0, 10)
    with pytest.raises(ValueError):
        train_agent(MDPEnv(two_state_mdp()), "sarsa", 1, 10)


def test_history_and_determinism(tmp_path):
    runs = [train_agent(MDPEnv(gridworld_mdp(3, 3), seed=5), "laql", 20, 15, seed=9) for _ in range(2)]
    assert len(runs[0].history) == 20
    assert runs[0].history == runs[1].history
    runs[0].write_history_csv(tmp_path / "h.csv")
    assert (tmp_path / "h.csv").read_text().splitlines()[0] == "episode,sum_reward"
    assert runs[0].policy_dump([0, 1]).count("->") == 2


class _Broken:
    n_actions = 2

    def reset(self):
        return 0

    def step(self, a):
        raise SimulationError("boom")


def test_step_failure_carries_indices():
    with pytest.raises(SimulationError) as err:
        train_agent(_Broken(), "q_learning", 3, 4, seed=0)
    assert err.value.episode == 0 and err.value.step == 0


def _consistent_batch(q_net, gamma):
    s = np.eye(3)
    a = np.array([0, 1, 2])
    s2 = np.eye(3)[[1, 2, 0]]
    q = q_net.predict(s)[np.arange(3), a]
    r = q - gamma * q_net.predict(s2).max(axis=1)
    return s, a, r, s2, np.zeros(3)


def test_dqn_consistent_batch_zero_loss():
    q_net = MLP([3, 5, 3], "relu", "identity", seed=0)
    target = MLP([3, 5, 3], "relu", "identity")
    target.copy_params_from(q_net)
    loss, grads = dqn_loss_and_grads(_consistent_batch(q_net, 0.9), q_net, target, 0.9)
    assert loss == pytest.approx(0.0, abs=1e-24)
    assert all(np.allclose(g, 0.0) for g in grads.values())


def test_dqn_gradient_check():
    rng = np.random.default_rng(3)
    q_net = MLP([4, 6, 3], "tanh", "identity", seed=1)
    target = MLP([4, 6, 3], "tanh", "identity", seed=2)
    batch = (rng.normal(size=(5, 4)), rng.integers(3, size=5), rng.normal(size=5), rng.normal(size=(5, 4)),
             np.array([0, 1, 0, 0, 1.0]))
    loss_fn = lambda: dqn_loss_and_grads(batch, q_net, target, 0.9)[0]
    analytic = dqn_loss_and_grads(batch, q_net, target, 0.9)[1]
    assert max_relative_error(analytic, finite_difference_gradients(loss_fn, q_net.params)) < 1e-4


def test_dqn_update_reduces_loss_and_buffer():
    buf = ReplayBuffer(3, seed=0)
    for i in range(5):
        buf.push(np.ones(2) * i, 0, 1.0, np.zeros(2), True)
    assert len(buf) == 3
    q_net = MLP([2, 4, 2], "relu", "identity", seed=0)
    target = MLP([2, 4, 2], "relu", "identity")
    target.copy_params_from(q_net)
    opt = Adam(q_net.params, 0.01)
    batch = buf.sample(8)
    first = dqn_update(batch, q_net, target, opt, 0.9)
    for _ in range(200):
        last = dqn_update(batch, q_net, target, opt, 0.9)
    assert last < first


def test_dqn_two_state_policy():
    agent = train_agent(MDPEnv(two_state_mdp(), seed=0), "dqn", 300, 10, seed=0, gamma=0.5)
    assert agent.greedy_action(0) == 1
