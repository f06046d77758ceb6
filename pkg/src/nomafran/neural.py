"""Dense, vanilla-RNN and LSTM networks in numpy with hand-written backprop.

Every model keeps its weights in ``model.params`` (name -> float64 array) and
exposes ``predict(x)`` and ``loss_and_grads(x, y)``.  Recurrent models read
inputs shaped ``(batch, window, features)``; the MLP reads ``(batch, n_in)``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ShapeError, TrainingError, UntrainedModelError

ACTIVATIONS = ("tanh", "sigmoid", "relu", "identity")
CELL_TYPES = ("dense", "rnn", "lstm")


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _activate(name, z):
    if name == "tanh":
        return np.tanh(z)
    if name == "sigmoid":
        return sigmoid(z)
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "identity":
        return z
    raise ValueError(f"unknown activation {name!r}")


def _activation_grad(name, z, a):
    """Derivative of the activation given pre-activation ``z`` and output ``a``."""
    if name == "tanh":
        return 1.0 - a * a
    if name == "sigmoid":
        return a * (1.0 - a)
    if name == "relu":
        return (z > 0).astype(float)
    return np.ones_like(z)


def _uniform_init(rng, fan_in, shape):
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Model:
    params: dict
    trained: bool = False

    def mse(self, x, y) -> float:
        pred = self.predict(x)
        return float(np.mean((pred - np.asarray(y).reshape(pred.shape)) ** 2))

    def copy_params_from(self, other: "Model"):
        self.params = {k: v.copy() for k, v in other.params.items()}

    def n_params(self) -> int:
        return sum(v.size for v in self.params.values())


class MLP(Model):
    """Fully connected network; ``sizes`` includes input and output widths."""

    def __init__(self, sizes, hidden_activation="tanh", output_activation="identity", seed=None):
        if len(sizes) < 2 or min(sizes) < 1:
            raise ShapeError(f"invalid layer sizes {sizes}")
        for act in (hidden_activation, output_activation):
            if act not in ACTIVATIONS:
                raise ValueError(f"unknown activation {act!r}")
        self.sizes = list(sizes)
        self.activations = [hidden_activation] * (len(sizes) - 2) + [output_activation]
        rng = np.random.default_rng(seed)
        self.params = {}
        for k in range(len(sizes) - 1):
            self.params[f"W{k}"] = _uniform_init(rng, sizes[k], (sizes[k], sizes[k + 1]))
            self.params[f"b{k}"] = np.zeros(sizes[k + 1])
        self.trained = False

    @property
    def n_layers(self) -> int:
        return len(self.sizes) - 1

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[None, :]
        if x.shape[-1] != self.sizes[0]:
            raise ShapeError(f"expected {self.sizes[0]} input features, got {x.shape[-1]}")
        return x.reshape(x.shape[0], -1)

    def _forward(self, x):
        a = self._check(x)
        cache = [(None, a)]
        for k in range(self.n_layers):
            z = a @ self.params[f"W{k}"] + self.params[f"b{k}"]
            a = _activate(self.activations[k], z)
            cache.append((z, a))
        return a, cache

    def predict(self, x):
        return self._forward(x)[0]

    def backward(self, cache, dout):
        """Gradients of a scalar loss given ``dout`` = dL/d(output)."""
        grads = {}
        delta = dout
        for k in reversed(range(self.n_layers)):
            z, a = cache[k + 1]
            dz = delta * _activation_grad(self.activations[k], z, a)
            a_prev = cache[k][1]
            grads[f"W{k}"] = a_prev.T @ dz
            grads[f"b{k}"] = dz.sum(axis=0)
            delta = dz @ self.params[f"W{k}"].T
        return grads

    def loss_and_grads(self, x, y):
        out, cache = self._forward(x)
        y = np.asarray(y, dtype=float).reshape(out.shape)
        diff = out - y
        loss = float(np.mean(diff ** 2))
        return loss, self.backward(cache, 2.0 * diff / diff.size)


class WindowMLP(MLP):
    """Dense forecaster: flattens a ``(batch, window, features)`` input."""

    def __init__(self, window, input_size=1, hidden=16, output_size=1, activation="tanh", seed=None):
        self.window = window
        self.input_size = input_size
        super().__init__([window * input_size, hidden, output_size], activation, "identity", seed)

    def _check(self, x):
        x = _as_sequence_batch(x, self.window, self.input_size)
        return x.reshape(x.shape[0], -1)


def _as_sequence_batch(x, window, input_size):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x.reshape(1, -1, 1) if input_size == 1 else x.reshape(1, 1, -1)
    elif x.ndim == 2:
        # (batch, window) for scalar series, (window, features) otherwise
        x = x[:, :, None] if input_size == 1 else x[None, :, :]
    if x.ndim != 3 or x.shape[1] != window or x.shape[2] != input_size:
        raise ShapeError(f"expected input of shape (batch, {window}, {input_size}), got {x.shape}")
    return x


class RecurrentNet(Model):
    """Single-layer RNN or LSTM over a fixed window with a linear head on the last hidden state."""

    def __init__(self, cell="lstm", window=5, input_size=1, hidden=16, output_size=1, seed=None):
        if cell not in ("rnn", "lstm"):
            raise ValueError(f"unknown recurrent cell {cell!r}")
        if min(window, input_size, hidden, output_size) < 1:
            raise ShapeError("all sizes must be >= 1")
        self.cell = cell
        self.window = window
        self.input_size = input_size
        self.hidden = hidden
        self.output_size = output_size
        rng = np.random.default_rng(seed)
        gates = 4 * hidden if cell == "lstm" else hidden
        self.params = {
            "Wx": _uniform_init(rng, input_size, (input_size, gates)),
            "Wh": _uniform_init(rng, hidden, (hidden, gates)),
            "b": np.zeros(gates),
            "Wy": _uniform_init(rng, hidden, (hidden, output_size)),
            "by": np.zeros(output_size),
        }
        self.trained = False

    def _forward(self, x):
        x = _as_sequence_batch(x, self.window, self.input_size)
        B, H = x.shape[0], self.hidden
        Wx, Wh, b = self.params["Wx"], self.params["Wh"], self.params["b"]
        h = np.zeros((B, H))
        c = np.zeros((B, H))
        steps = []
        for t in range(self.window):
            z = x[:, t, :] @ Wx + h @ Wh + b
            if self.cell == "rnn":
                h_new = np.tanh(z)
                steps.append((x[:, t, :], h, h_new))
            else:
                i = sigmoid(z[:, :H])
                f = sigmoid(z[:, H:2 * H])
                o = sigmoid(z[:, 2 * H:3 * H])
                g = np.tanh(z[:, 3 * H:])
                c_new = f * c + i * g
                tc = np.tanh(c_new)
                h_new = o * tc
                steps.append((x[:, t, :], h, c, i, f, o, g, tc))
                c = c_new
            h = h_new
        out = h @ self.params["Wy"] + self.params["by"]
        return out, (steps, h)

    def predict(self, x):
        return self._forward(x)[0]

    def gate_activations(self, x):
        """Per-step (i, f, o, g) arrays for an LSTM; used to check gate ranges."""
        if self.cell != "lstm":
            raise ValueError("gate activations exist only for LSTM cells")
        steps = self._forward(x)[1][0]
        return [(s[3], s[4], s[5], s[6]) for s in steps]

    def backward(self, cache, dout):
        steps, h_last = cache
        H = self.hidden
        Wh = self.params["Wh"]
        grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        grads["Wy"] = h_last.T @ dout
        grads["by"] = dout.sum(axis=0)
        dh = dout @ self.params["Wy"].T
        dc = np.zeros_like(dh)
        for step in reversed(steps):
            if self.cell == "rnn":
                x_t, h_prev, h_t = step
                dz = dh * (1.0 - h_t * h_t)
            else:
                x_t, h_prev, c_prev, i, f, o, g, tc = step
                do = dh * tc
                dc = dc + dh * o * (1.0 - tc * tc)
                dz = np.concatenate([
                    dc * g * i * (1.0 - i),
                    dc * c_prev * f * (1.0 - f),
                    do * o * (1.0 - o),
                    dc * i * (1.0 - g * g),
                ], axis=1)
                dc = dc * f
            grads["Wx"] += x_t.T @ dz
            grads["Wh"] += h_prev.T @ dz
            grads["b"] += dz.sum(axis=0)
            dh = dz @ Wh.T
        return grads

    def loss_and_grads(self, x, y):
        out, cache = self._forward(x)
        y = np.asarray(y, dtype=float).reshape(out.shape)
        diff = out - y
        return float(np.mean(diff ** 2)), self.backward(cache, 2.0 * diff / diff.size)


def build_forecaster(cell, window=5, input_size=1, hidden=16, output_size=1, seed=None) -> Model:
    if cell == "dense":
        return WindowMLP(window, input_size, hidden, output_size, seed=seed)
    if cell in ("rnn", "lstm"):
        return RecurrentNet(cell, window, input_size, hidden, output_size, seed)
    raise ValueError(f"unknown cell type {cell!r}; expected one of {CELL_TYPES}")


def forward(model: Model, x):
    return model.predict(x)


def bptt_gradients(model: Model, inputs, labels):
    """Return ``(grads, mse)`` for a non-empty batch."""
    if len(inputs) == 0:
        raise ShapeError("empty batch")
    mse, grads = model.loss_and_grads(inputs, labels)
    return grads, mse


# -- optimisers ---------------------------------------------------------------

class SGD:
    def __init__(self, params, lr=0.01):
        self.params = params
        self.lr = lr

    def step(self, grads):
        for k, g in grads.items():
            self.params[k] -= self.lr * g


class Adam:
    def __init__(self, params, lr=0.01, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        lr_t = self.lr * math.sqrt(1 - b2 ** self.t) / (1 - b1 ** self.t)
        for k, g in grads.items():
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            self.params[k] -= lr_t * self.m[k] / (np.sqrt(self.v[k]) + self.eps)


def make_optimizer(name, params, lr):
    if name == "adam":
        return Adam(params, lr)
    if name == "sgd":
        return SGD(params, lr)
    raise ValueError(f"unknown optimizer {name!r}")


# -- training -------------------------------------------------------------------

@dataclass
class TrainConfig:
    goal_mse: float = 0.01
    max_epochs: int = 5000
    learning_rate: float = 0.01
    optimizer: str = "adam"
    batch_size: int = 0  # 0 = full batch
    seed: int = 0
    stop_at_goal: bool = True  # False spends the whole epoch budget

    def __post_init__(self):
        if self.goal_mse <= 0:
            raise ValueError("goal_mse must be > 0")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class TrainReport:
    final_train_mse: float
    test_mse: float
    epochs_used: int
    goal_reached: bool
    loss_history: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    def write_history_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "train_mse"])
            for epoch, mse in enumerate(self.loss_history, start=1):
                w.writerow([epoch, repr(mse)])


def train_to_goal(model: Model, dataset, cfg: TrainConfig) -> TrainReport:
    """Gradient descent on the training split until train MSE <= goal or the epoch budget runs out.

    The MSE recorded for an epoch is measured before that epoch's update, and
    no update follows the final recorded value, so ``final_train_mse`` always
    describes the returned weights.
    """
    x_train, y_train = dataset.train
    x_test, y_test = dataset.test
    if len(y_train) == 0:
        raise ValueError("empty training split")
    opt = make_optimizer(cfg.optimizer, model.params, cfg.learning_rate)
    rng = np.random.default_rng(cfg.seed)
    history = []
    for epoch in range(1, cfg.max_epochs + 1):
        mse, grads = model.loss_and_grads(x_train, y_train)
        if not math.isfinite(mse):
            raise TrainingError(epoch)
        history.append(mse)
        if mse <= cfg.goal_mse and cfg.stop_at_goal:
            break
        if epoch == cfg.max_epochs:
            break
        if cfg.batch_size and cfg.batch_size < len(y_train):
            perm = rng.permutation(len(y_train))
            for start in range(0, len(perm), cfg.batch_size):
                idx = perm[start:start + cfg.batch_size]
                _, g = model.loss_and_grads(x_train[idx], y_train[idx])
                opt.step(g)
        else:
            opt.step(grads)
    model.trained = True
    test_mse = model.mse(x_test, y_test) if len(y_test) else float("nan")
    return TrainReport(history[-1], test_mse, len(history), history[-1] <= cfg.goal_mse, history)


def predict_next(model: Model, window, clamp=True):
    """Forecast the slot after ``window``; clamps to [0, 1] unless told otherwise."""
    if not getattr(model, "trained", False):
        raise UntrainedModelError("model has not been trained")
    out = model.predict(window)[0]
    if clamp:
        out = np.clip(out, 0.0, 1.0)
    return float(out[0]) if out.size == 1 else out


def finite_difference_gradients(loss_fn, params, h=1e-5):
    """Central-difference gradient of ``loss_fn()`` w.r.t. every entry of ``params``."""
    grads = {}
    for name, arr in params.items():
        g = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = arr[idx]
            arr[idx] = orig + h
            up = loss_fn()
            arr[idx] = orig - h
            down = loss_fn()
            arr[idx] = orig
            g[idx] = (up - down) / (2 * h)
        grads[name] = g
    return grads


def max_relative_error(analytic, numeric, floor=1e-6):
    """Largest elementwise ``|a - n| / max(|a|, |n|, floor)`` over all parameters."""
    worst = 0.0
    for k in analytic:
        a, n = analytic[k], numeric[k]
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst
