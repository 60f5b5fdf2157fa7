"""Multilayer perceptron regressor: sigmoid hidden layers, linear output.

Inputs and the target are min-max scaled to [0, 1] on the training data.
Training is per-instance stochastic gradient descent with momentum on the
squared error, one full shuffled sweep per epoch. The per-instance update
runs in a numba kernel; `mlp_gradient` is a separate vectorised numpy
implementation of the batch gradient used for verification.
"""

from __future__ import annotations

import numba
import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .base import ContractError, MinMaxFeatureScaler, ModelError, decode_array, encode_array


class DivergenceError(ModelError):
    def __init__(self, epoch: int):
        super().__init__(f"training diverged at epoch {epoch}: non-finite loss or weights")
        self.epoch = epoch


def layer_layout(sizes) -> tuple[np.ndarray, np.ndarray, np.ndarray, int]:
    """Offsets of each layer's weight matrix and bias inside one flat vector."""
    sizes = np.asarray(sizes, dtype=np.int64)
    n_layers = len(sizes) - 1
    woff = np.empty(n_layers, dtype=np.int64)
    boff = np.empty(n_layers, dtype=np.int64)
    pos = 0
    for layer in range(n_layers):
        woff[layer] = pos
        pos += sizes[layer + 1] * sizes[layer]
        boff[layer] = pos
        pos += sizes[layer + 1]
    return sizes, woff, boff, pos


@numba.njit(cache=True, nogil=True)
def _instance_gradient(theta, sizes, woff, boff, x, target, acts, aoff, deltas, grad):
    """Forward/backward pass for one instance of 0.5 * (out - target)^2.

    Writes the gradient into `grad` and returns the signed output error.
    """
    n_layers = sizes.shape[0] - 1
    for i in range(sizes[0]):
        acts[i] = x[i]
    for layer in range(n_layers):
        n_in = sizes[layer]
        n_out = sizes[layer + 1]
        a_in = aoff[layer]
        a_out = aoff[layer + 1]
        last = layer == n_layers - 1
        for j in range(n_out):
            s = theta[boff[layer] + j]
            row = woff[layer] + j * n_in
            for i in range(n_in):
                s += theta[row + i] * acts[a_in + i]
            if last:
                acts[a_out + j] = s
            else:
                acts[a_out + j] = 1.0 / (1.0 + np.exp(-s))
    err = acts[aoff[n_layers]] - target
    deltas[aoff[n_layers]] = err
    for layer in range(n_layers - 1, -1, -1):
        n_in = sizes[layer]
        n_out = sizes[layer + 1]
        a_in = aoff[layer]
        a_out = aoff[layer + 1]
        for j in range(n_out):
            d = deltas[a_out + j]
            grad[boff[layer] + j] = d
            row = woff[layer] + j * n_in
            for i in range(n_in):
                grad[row + i] = d * acts[a_in + i]
        if layer > 0:
            for i in range(n_in):
                s = 0.0
                for j in range(n_out):
                    s += theta[woff[layer] + j * n_in + i] * deltas[a_out + j]
                a = acts[a_in + i]
                deltas[a_in + i] = s * a * (1.0 - a)
    return err


@numba.njit(cache=True, nogil=True)
def _sgd_epoch(theta, velocity, sizes, woff, boff, X, y, order, lr, momentum):
    total = 0
    for s in sizes:
        total += s
    aoff = np.zeros(sizes.shape[0] + 1, dtype=np.int64)
    for layer in range(sizes.shape[0]):
        aoff[layer + 1] = aoff[layer] + sizes[layer]
    acts = np.empty(total)
    deltas = np.empty(total)
    grad = np.empty(theta.shape[0])
    sse = 0.0
    for k in range(order.shape[0]):
        idx = order[k]
        err = _instance_gradient(theta, sizes, woff, boff, X[idx], y[idx], acts, aoff, deltas, grad)
        sse += err * err
        for p in range(theta.shape[0]):
            velocity[p] = momentum * velocity[p] - lr * grad[p]
            theta[p] += velocity[p]
    return sse / order.shape[0]


def instance_gradient(theta, sizes, x, target) -> np.ndarray:
    """Kernel gradient of ``0.5 * (out - target)^2`` for one scaled instance."""
    sizes, woff, boff, _ = layer_layout(sizes)
    aoff = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    acts = np.empty(int(sizes.sum()))
    deltas = np.empty_like(acts)
    grad = np.empty_like(theta)
    _instance_gradient(np.ascontiguousarray(theta, dtype=float), sizes, woff, boff,
                       np.ascontiguousarray(x, dtype=float), float(target), acts, aoff, deltas, grad)
    return grad


def _sigmoid(z):
    return expit(z)


class MLPRegressor(RegressorMixin, BaseEstimator):
    """Single-output feed-forward network.

    ``hidden_layer_sizes=()`` degenerates to one linear unit. With
    ``decay=True`` the step size in epoch ``e`` is ``learning_rate / e``.
    """

    def __init__(self, hidden_layer_sizes=(10,), learning_rate=0.3, momentum=0.2, epochs=500,
                 seed=0, shuffle=True, decay=False):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.learning_rate = learning_rate
        self.decay = decay
        self.momentum = momentum
        self.epochs = epochs
        self.seed = seed
        self.shuffle = shuffle

    # flat parameter vector <-> per-layer views
    def _unpack(self, theta):
        Ws, bs = [], []
        for layer in range(len(self.sizes_) - 1):
            n_in, n_out = self.sizes_[layer], self.sizes_[layer + 1]
            Ws.append(theta[self.woff_[layer]: self.woff_[layer] + n_out * n_in].reshape(n_out, n_in))
            bs.append(theta[self.boff_[layer]: self.boff_[layer] + n_out])
        return Ws, bs

    @property
    def coefs_(self):
        return self._unpack(self.theta_)[0]

    @property
    def intercepts_(self):
        return self._unpack(self.theta_)[1]

    def _init(self, n_features: int, rng: np.random.Generator) -> None:
        hidden = tuple(int(h) for h in self.hidden_layer_sizes)
        if any(h < 1 for h in hidden):
            raise ContractError(f"hidden layer sizes must be >= 1, got {hidden}")
        self.sizes_, self.woff_, self.boff_, n_params = layer_layout((n_features, *hidden, 1))
        self.theta_ = rng.uniform(-0.5, 0.5, size=n_params)
        self.n_features_in_ = n_features

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float, y_numeric=True)
        rng = np.random.default_rng(self.seed)
        self._init(X.shape[1], rng)
        self.x_scaler_ = MinMaxFeatureScaler().fit(X)
        self.y_scaler_ = MinMaxFeatureScaler().fit(y)
        Xs = np.ascontiguousarray(self.x_scaler_.transform(X))
        ys = np.ascontiguousarray(self.y_scaler_.transform(y))
        velocity = np.zeros_like(self.theta_)
        self.loss_curve_ = []
        order = np.arange(len(Xs), dtype=np.int64)
        for epoch in range(1, int(self.epochs) + 1):
            if self.shuffle:
                order = rng.permutation(len(Xs)).astype(np.int64)
            lr = self.learning_rate / epoch if self.decay else self.learning_rate
            loss = _sgd_epoch(self.theta_, velocity, self.sizes_, self.woff_, self.boff_, Xs, ys, order,
                              float(lr), float(self.momentum))
            if not (np.isfinite(loss) and np.all(np.isfinite(self.theta_))):
                raise DivergenceError(epoch)
            self.loss_curve_.append(loss)
        return self

    def _forward_scaled(self, Xs, theta=None):
        Ws, bs = self._unpack(self.theta_ if theta is None else theta)
        acts = [Xs]
        a = Xs
        for layer, (W, b) in enumerate(zip(Ws, bs)):
            z = a @ W.T + b
            a = z if layer == len(Ws) - 1 else _sigmoid(z)
            acts.append(a)
        return acts

    def predict(self, X):
        check_is_fitted(self, "theta_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ContractError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        out = self._forward_scaled(self.x_scaler_.transform(X))[-1][:, 0]
        return self.y_scaler_.inverse_transform(out)

    def predict_row(self, x: np.ndarray) -> float:
        # same arithmetic as `predict` without per-call validation, for the serving path
        out = self._forward_scaled(self.x_scaler_.transform(x.reshape(1, -1)))[-1][:, 0]
        return float(self.y_scaler_.inverse_transform(out)[0])

    def scaled_loss(self, X, y, theta=None) -> float:
        """Mean squared error in scaled space, optionally at alternative weights."""
        Xs = self.x_scaler_.transform(np.asarray(X, dtype=float))
        ys = self.y_scaler_.transform(np.asarray(y, dtype=float))
        out = self._forward_scaled(Xs, theta)[-1][:, 0]
        return float(np.mean((out - ys) ** 2))

    def get_state(self) -> dict:
        check_is_fitted(self, "theta_")
        return {
            "params": {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.get_params().items()},
            "sizes": [int(s) for s in self.sizes_],
            "theta": encode_array(self.theta_),
            "x_scaler": self.x_scaler_.get_state(),
            "y_scaler": self.y_scaler_.get_state(),
        }

    @classmethod
    def from_state(cls, state: dict) -> "MLPRegressor":
        params = dict(state["params"])
        params["hidden_layer_sizes"] = tuple(params["hidden_layer_sizes"])
        m = cls(**params)
        m.sizes_, m.woff_, m.boff_, _ = layer_layout(state["sizes"])
        m.theta_ = decode_array(state["theta"])
        m.x_scaler_ = MinMaxFeatureScaler.from_state(state["x_scaler"])
        m.y_scaler_ = MinMaxFeatureScaler.from_state(state["y_scaler"])
        m.n_features_in_ = int(m.sizes_[0])
        return m


def mlp_gradient(model: MLPRegressor, X, y, theta=None) -> list[tuple[np.ndarray, np.ndarray]]:
    """Exact gradient of the scaled-space mean squared error over a batch.

    Returns ``[(dW, db), ...]`` per layer, matching ``model.coefs_`` and
    ``model.intercepts_`` shapes.
    """
    check_is_fitted(model, "theta_")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim != 2 or X.shape[1] != model.n_features_in_:
        raise ContractError(f"batch must have shape (n, {model.n_features_in_}), got {X.shape}")
    if len(X) == 0 or len(X) != len(y):
        raise ContractError("batch must be non-empty with one target per row")
    theta = model.theta_ if theta is None else theta
    Ws, _ = model._unpack(theta)
    acts = model._forward_scaled(model.x_scaler_.transform(X), theta)
    ys = model.y_scaler_.transform(y)
    n = len(X)
    delta = (2.0 / n) * (acts[-1][:, 0] - ys)[:, None]
    grads = []
    for layer in range(len(Ws) - 1, -1, -1):
        grads.append((delta.T @ acts[layer], delta.sum(axis=0)))
        if layer > 0:
            a = acts[layer]
            delta = (delta @ Ws[layer]) * a * (1.0 - a)
    return grads[::-1]


def flatten_gradient(model: MLPRegressor, grads) -> np.ndarray:
    flat = np.empty_like(model.theta_)
    Wv, bv = model._unpack(flat)
    for (dW, db), W, b in zip(grads, Wv, bv):
        W[...] = dW
        b[...] = db
    return flat
