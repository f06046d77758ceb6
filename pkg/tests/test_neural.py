import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nomafran.errors import ShapeError, TrainingError, UntrainedModelError
from nomafran.neural import (MLP, SGD, Adam, RecurrentNet, TrainConfig, TrainReport, build_forecaster,
                             bptt_gradients, finite_difference_gradients, forward, max_relative_error,
                             predict_next, train_to_goal)
from nomafran.popularity import random_walk_series, window_dataset

GOLDEN_X = np.linspace(0.0, 1.0, 10).reshape(2, 5, 1)


def _sig(z):
    return 1.0 / (1.0 + math.exp(-z))


def lstm_reference(params, seq):
    """Scalar-loop LSTM forward, gates ordered (input, forget, output, candidate)."""
    Wx, Wh, b, Wy, by = (params[k] for k in ("Wx", "Wh", "b", "Wy", "by"))
    H = Wh.shape[0]
    h = [0.0] * H
    c = [0.0] * H
    for x_t in seq:
        z = [sum(x_t[i] * Wx[i, j] for i in range(len(x_t))) + sum(h[k] * Wh[k, j] for k in range(H)) + b[j]
             for j in range(4 * H)]
        new_c = [_sig(z[H + j]) * c[j] + _sig(z[j]) * math.tanh(z[3 * H + j]) for j in range(H)]
        h = [_sig(z[2 * H + j]) * math.tanh(new_c[j]) for j in range(H)]
        c = new_c
    return [sum(h[k] * Wy[k, o] for k in range(H)) + by[o] for o in range(Wy.shape[1])]


def test_lstm_matches_scalar_reference():
    m = build_forecaster("lstm", window=5, hidden=4, seed=0)
    out = m.predict(GOLDEN_X)
    for n in range(2):
        assert out[n, 0] == pytest.approx(lstm_reference(m.params, GOLDEN_X[n])[0], abs=1e-14)


def test_lstm_golden_output():
    m = build_forecaster("lstm", window=5, hidden=4, seed=0)
    assert m.predict(GOLDEN_X).ravel().tolist() == pytest.approx([0.01731565531803895, 0.06911373107063772],
                                                                 abs=1e-15)


def test_zero_network_predicts_zero():
    for cell in ("dense", "rnn", "lstm"):
        m = build_forecaster(cell, window=5, hidden=3, seed=1)
        for v in m.params.values():
            v[...] = 0.0
        assert np.all(forward(m, np.random.default_rng(0).random((4, 5))) == 0.0)


def test_identity_dense_layer():
    m = MLP([1, 1], output_activation="identity")
    m.params["W0"][...] = 1.0
    m.params["b0"][...] = 0.0
    assert m.predict([0.7])[0, 0] == pytest.approx(0.7)


def test_window_length_mismatch():
    m = build_forecaster("lstm", window=5, hidden=3, seed=1)
    with pytest.raises(ShapeError):
        m.predict(np.zeros((2, 4)))


def test_perfect_fit_has_zero_gradients():
    m = build_forecaster("rnn", window=3, hidden=2, seed=2)
    x = np.random.default_rng(0).random((6, 3))
    grads, mse = bptt_gradients(m, x, m.predict(x))
    assert mse == 0.0
    assert all(np.all(g == 0.0) for g in grads.values())


def test_scalar_dense_gradient_closed_form():
    m = MLP([1, 1])
    m.params["W0"][...] = 1.5
    m.params["b0"][...] = 0.0
    grads, _ = bptt_gradients(m, np.array([[2.0]]), np.array([[1.0]]))
    assert grads["W0"][0, 0] == pytest.approx(2 * (1.5 * 2.0 - 1.0) * 2.0)


@pytest.mark.parametrize("cell", ["dense", "rnn", "lstm"])
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_gradient_check(cell, seed):
    rng = np.random.default_rng(100 + seed)
    m = build_forecaster(cell, window=4, hidden=3, seed=seed)
    x, y = rng.random((5, 4)), rng.random((5, 1))
    analytic, _ = bptt_gradients(m, x, y)
    numeric = finite_difference_gradients(lambda: m.mse(x, y), m.params)
    assert max_relative_error(analytic, numeric) < 1e-4


def test_lstm_gates_in_range():
    m = build_forecaster("lstm", window=5, hidden=4, seed=3)
    x = np.random.default_rng(0).normal(scale=50.0, size=(8, 5))
    for i, f, o, g in m.gate_activations(x):
        for gate in (i, f, o):
            assert np.all((gate >= 0) & (gate <= 1))
        assert np.all((g >= -1) & (g <= 1))


def test_sgd_and_adam_step():
    p = {"w": np.array([1.0])}
    SGD(p, lr=0.1).step({"w": np.array([2.0])})
    assert p["w"][0] == pytest.approx(0.8)
    q = {"w": np.array([1.0])}
    Adam(q, lr=0.01).step({"w": np.array([5.0])})
    assert q["w"][0] == pytest.approx(0.99)  # first Adam step moves by lr


def test_constant_series_learned():
    data = window_dataset(np.full(60, 0.4), 5, shuffle_seed=0)
    m = build_forecaster("lstm", window=5, hidden=8, seed=0)
    rep = train_to_goal(m, data, TrainConfig(goal_mse=1e-4, max_epochs=2000))
    assert rep.goal_reached
    assert rep.test_mse < 1e-3
    assert abs(predict_next(m, np.full(5, 0.4)) - 0.4) < 0.05


def test_untrained_model_rejected_and_clamp():
    m = build_forecaster("dense", window=2, hidden=2, seed=0)
    with pytest.raises(UntrainedModelError):
        predict_next(m, [0.1, 0.2])
    m.trained = True
    m.params["W1"][...] = 0.0
    m.params["b1"][...] = 1.3
    assert predict_next(m, [0.1, 0.2]) == 1.0
    assert predict_next(m, [0.1, 0.2], clamp=False) == pytest.approx(1.3)


def test_divergence_raises_training_error():
    data = window_dataset(random_walk_series(40, seed=0), 5, shuffle_seed=0)
    m = build_forecaster("dense", window=5, hidden=4, seed=0)
    with pytest.raises(TrainingError) as err, np.errstate(all="ignore"):
        train_to_goal(m, data, TrainConfig(goal_mse=1e-12, max_epochs=200, learning_rate=1e6, optimizer="sgd"))
    assert err.value.epoch >= 1


def test_training_deterministic_and_improves():
    data = window_dataset(random_walk_series(120, seed=4), 5, shuffle_seed=4)
    reports = []
    for _ in range(2):
        m = build_forecaster("rnn", window=5, hidden=6, seed=4)
        reports.append(train_to_goal(m, data, TrainConfig(goal_mse=1e-4, max_epochs=60)))
    assert reports[0].to_json() == reports[1].to_json()
    assert reports[0].final_train_mse <= reports[0].loss_history[0]


def test_no_early_stop_spends_budget():
    data = window_dataset(random_walk_series(80, seed=1), 5, shuffle_seed=1)
    m = build_forecaster("lstm", window=5, hidden=4, seed=1)
    rep = train_to_goal(m, data, TrainConfig(goal_mse=0.5, max_epochs=25, stop_at_goal=False))
    assert rep.epochs_used == 25 and rep.goal_reached


def test_report_outputs(tmp_path):
    rep = TrainReport(0.1, 0.2, 2, False, [0.3, 0.1])
    rep.write_history_csv(tmp_path / "h.csv")
    assert (tmp_path / "h.csv").read_text().splitlines() == ["epoch,train_mse", "1,0.3", "2,0.1"]
    assert '"epochs_used": 2' in rep.to_json()


def test_tighter_goal_gives_no_worse_median_test_mse():
    loose, tight = [], []
    for seed in range(5):
        data = window_dataset(random_walk_series(500, seed=seed), 5, shuffle_seed=seed)
        for goal, out in ((0.01, loose), (0.001, tight)):
            m = build_forecaster("lstm", window=5, hidden=16, seed=seed)
            rep = train_to_goal(m, data, TrainConfig(goal_mse=goal, max_epochs=5000))
            assert rep.final_train_mse <= goal
            out.append(rep.test_mse)
    assert np.median(tight) <= np.median(loose)


@given(st.integers(0, 10 ** 6))
def test_mlp_gradient_property(seed):
    rng = np.random.default_rng(seed)
    m = MLP([3, 4, 2], "tanh", "identity", seed=seed)
    x, y = rng.normal(size=(3, 3)), rng.normal(size=(3, 2))
    analytic = m.loss_and_grads(x, y)[1]
    numeric = finite_difference_gradients(lambda: m.mse(x, y), m.params)
    assert max_relative_error(analytic, numeric) < 1e-4
