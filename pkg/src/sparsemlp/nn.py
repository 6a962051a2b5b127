"""Layers, loss, and optimizer steps composed from the sparse kernels.

Data layout convention: activations are (features x batch), one example per
column. A sparse linear layer holds its weights as a CsrMatrix whose
gradient and momentum buffer share the exact same pattern, so every
optimizer update is a raw-value ``sparse_combine``. The masked dense layer
is the reference baseline: full dense storage plus a 0/1 mask applied to
gradients and momentum before each step.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidArgumentError, StateError
from .tensor_core import (
    SparsityPattern,
    row_sums,
    sddmm,
    sparse_combine,
    spmm,
    spmm_transposed,
)

__all__ = [
    "GradientDescent",
    "Momentum",
    "ReLU",
    "NoActivation",
    "SparseLinearLayer",
    "DenseLinearLayer",
    "ActivationLayer",
    "BatchNormLayer",
    "DropoutLayer",
    "SoftmaxCrossEntropyLoss",
    "softmax_columns",
    "softmax_ce_loss",
    "softmax_ce_gradient",
]


class GradientDescent:
    """Plain SGD step: w <- w - eta * g."""

    mu = 0.0
    nesterov = False
    uses_velocity = False

    def __repr__(self):
        return "GradientDescent()"

    def to_dict(self):
        return {"kind": "gd"}


class Momentum:
    """Momentum step: v <- mu*v + g, then w <- w - eta*v, or the Nesterov
    form w <- w - eta*(g + mu*v) with the refreshed v."""

    uses_velocity = True

    def __init__(self, mu: float, nesterov: bool = False):
        if not 0.0 <= mu < 1.0:
            raise InvalidArgumentError(f"momentum coefficient must be in [0, 1), got {mu}")
        self.mu = float(mu)
        self.nesterov = bool(nesterov)

    def __repr__(self):
        return f"Momentum({self.mu}, nesterov={self.nesterov})"

    def to_dict(self):
        return {"kind": "momentum", "mu": self.mu, "nesterov": self.nesterov}


def optimizer_from_dict(d: dict):
    if d["kind"] == "gd":
        return GradientDescent()
    if d["kind"] == "momentum":
        return Momentum(d["mu"], d.get("nesterov", False))
    raise InvalidArgumentError(f"unknown optimizer kind {d['kind']!r}")


class ReLU:
    name = "relu"

    def forward(self, x):
        return np.maximum(x, 0)

    def backward(self, d_out, x_cached):
        # subgradient at exactly 0 is 0
        return d_out * (x_cached > 0)

    def __repr__(self):
        return "ReLU()"


class NoActivation:
    name = "none"

    def forward(self, x):
        return x

    def backward(self, d_out, x_cached):
        return d_out

    def __repr__(self):
        return "NoActivation()"


def activation_from_name(name: str):
    if name == "relu":
        return ReLU()
    if name == "none":
        return NoActivation()
    raise InvalidArgumentError(f"unknown activation {name!r}")


def _step_vector(param, grad, velocity, optimizer, eta, dtype):
    """Shared scalar arithmetic for dense parameter updates. Mirrors the
    sparse_combine decomposition exactly so backends stay comparable."""
    scalar = dtype.type
    if optimizer.uses_velocity:
        velocity *= scalar(optimizer.mu)
        velocity += grad
        if optimizer.nesterov:
            param += scalar(-eta * optimizer.mu) * velocity
            param += scalar(-eta) * grad
        else:
            param += scalar(-eta) * velocity
    else:
        param += scalar(-eta) * grad


class SparseLinearLayer:
    """Linear layer with truly sparse weights on a fixed pattern.

    weights, grad, and velocity share one SparsityPattern for the whole
    training run; the bias is dense and never sparsified.
    """

    kind = "sparse"

    def __init__(self, pattern: SparsityPattern, values, bias, optimizer=None):
        self.n_out = pattern.nrows
        self.n_in = pattern.ncols
        if len(values) != pattern.nnz:
            raise InvalidArgumentError("values length must equal pattern nnz")
        self.weights = pattern.with_values(np.ascontiguousarray(values))
        self.bias = np.ascontiguousarray(bias, dtype=self.weights.dtype)
        if self.bias.shape != (self.n_out,):
            raise InvalidArgumentError(f"bias must have shape ({self.n_out},)")
        self.grad = pattern.zeros(dtype=self.weights.dtype)
        self.grad_bias = np.zeros(self.n_out, dtype=self.weights.dtype)
        self.optimizer = optimizer or GradientDescent()
        self.velocity = pattern.zeros(dtype=self.weights.dtype) if self.optimizer.uses_velocity else None
        self.velocity_bias = (
            np.zeros(self.n_out, dtype=self.weights.dtype) if self.optimizer.uses_velocity else None
        )
        self._cached_input = None

    @property
    def dtype(self):
        return self.weights.dtype

    @property
    def density(self):
        return self.weights.nnz / (self.n_in * self.n_out)

    def forward(self, x, training=True):
        if x.shape[0] != self.n_in:
            raise InvalidArgumentError(f"expected {self.n_in} input rows, got {x.shape[0]}")
        y = spmm(self.weights, x)
        y += self.bias[:, None]
        if training:
            self._cached_input = x
        return y

    def backward(self, d_out):
        x = self._cached_input
        if x is None:
            raise StateError("backward called before forward")
        # grad(i, j) = sum_k d_out[i, k] * x[j, k]: SDDMM on the weight pattern
        sddmm(self.weights.pattern, d_out, x, out=self.grad)
        self.grad_bias = row_sums(d_out)
        return spmm_transposed(self.weights, d_out)

    def optimize(self, eta):
        opt = self.optimizer
        if opt.uses_velocity:
            sparse_combine(opt.mu, self.velocity, 1.0, self.grad, checked=False)
            if opt.nesterov:
                sparse_combine(1.0, self.weights, -eta * opt.mu, self.velocity, checked=False)
                sparse_combine(1.0, self.weights, -eta, self.grad, checked=False)
            else:
                sparse_combine(1.0, self.weights, -eta, self.velocity, checked=False)
        else:
            sparse_combine(1.0, self.weights, -eta, self.grad, checked=False)
        _step_vector(self.bias, self.grad_bias, self.velocity_bias, opt, eta, self.dtype)


class DenseLinearLayer:
    """Dense linear layer; with a mask it becomes the masked-sparse baseline.

    The mask multiplies gradients and momentum before each step and the
    weights are re-masked after, so masked positions hold exact zeros.
    """

    kind = "dense"

    def __init__(self, weights, bias, optimizer=None, mask=None):
        self.weights = np.ascontiguousarray(weights)
        self.n_out, self.n_in = self.weights.shape
        self.bias = np.ascontiguousarray(bias, dtype=self.weights.dtype)
        if self.bias.shape != (self.n_out,):
            raise InvalidArgumentError(f"bias must have shape ({self.n_out},)")
        self.mask = None if mask is None else np.ascontiguousarray(mask, dtype=self.weights.dtype)
        if self.mask is not None and self.mask.shape != self.weights.shape:
            raise InvalidArgumentError("mask shape must match weights")
        self.grad = np.zeros_like(self.weights)
        self.grad_bias = np.zeros(self.n_out, dtype=self.weights.dtype)
        self.optimizer = optimizer or GradientDescent()
        self.velocity = np.zeros_like(self.weights) if self.optimizer.uses_velocity else None
        self.velocity_bias = (
            np.zeros(self.n_out, dtype=self.weights.dtype) if self.optimizer.uses_velocity else None
        )
        self._cached_input = None

    @property
    def dtype(self):
        return self.weights.dtype

    @property
    def density(self):
        if self.mask is None:
            return 1.0
        return float(np.count_nonzero(self.mask)) / (self.n_in * self.n_out)

    def forward(self, x, training=True):
        if x.shape[0] != self.n_in:
            raise InvalidArgumentError(f"expected {self.n_in} input rows, got {x.shape[0]}")
        y = self.weights @ x
        y += self.bias[:, None]
        if training:
            self._cached_input = x
        return y

    def backward(self, d_out):
        x = self._cached_input
        if x is None:
            raise StateError("backward called before forward")
        self.grad = d_out @ x.T
        if self.mask is not None:
            self.grad *= self.mask
        self.grad_bias = row_sums(d_out)
        return self.weights.T @ d_out

    def optimize(self, eta):
        opt = self.optimizer
        if self.mask is not None and opt.uses_velocity:
            self.velocity *= self.mask
        _step_vector(self.weights, self.grad, self.velocity, opt, eta, self.dtype)
        if self.mask is not None:
            self.weights *= self.mask
        _step_vector(self.bias, self.grad_bias, self.velocity_bias, opt, eta, self.dtype)


class ActivationLayer:
    kind = "activation"

    def __init__(self, fn):
        self.fn = fn
        self._cached_input = None

    def forward(self, x, training=True):
        if training:
            self._cached_input = x
        return self.fn.forward(x)

    def backward(self, d_out):
        if self._cached_input is None:
            raise StateError("backward called before forward")
        return self.fn.backward(d_out, self._cached_input)

    def optimize(self, eta):
        pass


class BatchNormLayer:
    """Per-feature batch normalization over the batch (column) axis."""

    kind = "batchnorm"

    def __init__(self, n_features, eps=1e-5, stats_momentum=0.1, optimizer=None, dtype=np.float32):
        self.n_features = int(n_features)
        self.eps = float(eps)
        self.stats_momentum = float(stats_momentum)
        dt = np.dtype(dtype)
        self.gamma = np.ones(self.n_features, dtype=dt)
        self.beta = np.zeros(self.n_features, dtype=dt)
        self.running_mean = np.zeros(self.n_features, dtype=dt)
        self.running_var = np.ones(self.n_features, dtype=dt)
        self.grad_gamma = np.zeros(self.n_features, dtype=dt)
        self.grad_beta = np.zeros(self.n_features, dtype=dt)
        self.optimizer = optimizer or GradientDescent()
        self.velocity_gamma = np.zeros(self.n_features, dtype=dt) if self.optimizer.uses_velocity else None
        self.velocity_beta = np.zeros(self.n_features, dtype=dt) if self.optimizer.uses_velocity else None
        self._cache = None

    @property
    def dtype(self):
        return self.gamma.dtype

    def forward(self, x, training=True):
        if x.shape[0] != self.n_features:
            raise InvalidArgumentError(f"expected {self.n_features} features, got {x.shape[0]}")
        if training:
            batch = x.shape[1]
            if batch < 2:
                raise InvalidArgumentError("batch norm in training mode needs batch size >= 2")
            mean = x.mean(axis=1)
            var = x.var(axis=1)
            inv_std = 1.0 / np.sqrt(var + self.dtype.type(self.eps))
            x_hat = (x - mean[:, None]) * inv_std[:, None]
            self._cache = (x_hat, inv_std)
            m = self.dtype.type(self.stats_momentum)
            self.running_mean = (1 - m) * self.running_mean + m * mean
            unbiased = var * (batch / (batch - 1))
            self.running_var = (1 - m) * self.running_var + m * unbiased
        else:
            inv_std = 1.0 / np.sqrt(self.running_var + self.dtype.type(self.eps))
            x_hat = (x - self.running_mean[:, None]) * inv_std[:, None]
        return self.gamma[:, None] * x_hat + self.beta[:, None]

    def backward(self, d_out):
        if self._cache is None:
            raise StateError("backward called before a training-mode forward")
        x_hat, inv_std = self._cache
        batch = d_out.shape[1]
        self.grad_gamma = (d_out * x_hat).sum(axis=1)
        self.grad_beta = d_out.sum(axis=1)
        d_hat = d_out * self.gamma[:, None]
        return (inv_std[:, None] / batch) * (
            batch * d_hat
            - d_hat.sum(axis=1, keepdims=True)
            - x_hat * (d_hat * x_hat).sum(axis=1, keepdims=True)
        )

    def optimize(self, eta):
        _step_vector(self.gamma, self.grad_gamma, self.velocity_gamma, self.optimizer, eta, self.dtype)
        _step_vector(self.beta, self.grad_beta, self.velocity_beta, self.optimizer, eta, self.dtype)


class DropoutLayer:
    """Inverted dropout: survivors scale by 1/(1-p); inference is identity."""

    kind = "dropout"

    def __init__(self, p: float, rng: np.random.Generator | None = None):
        if not 0.0 <= p < 1.0:
            raise InvalidArgumentError(f"drop probability must be in [0, 1), got {p}")
        self.p = float(p)
        self.rng = rng
        self._scaled_mask = None

    def forward(self, x, training=True):
        if not training or self.p == 0.0:
            self._scaled_mask = None
            return x
        if self.rng is None:
            raise StateError("dropout layer has no rng stream; compile the model first")
        keep = self.rng.random(x.shape) >= self.p
        scale = 1.0 / (1.0 - self.p)
        self._scaled_mask = keep.astype(x.dtype) * x.dtype.type(scale)
        return x * self._scaled_mask

    def backward(self, d_out):
        if self._scaled_mask is None:
            return d_out
        return d_out * self._scaled_mask

    def optimize(self, eta):
        pass


def softmax_columns(y: np.ndarray) -> np.ndarray:
    """Columnwise softmax with max subtraction for stability."""
    z = y - y.max(axis=0, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=0, keepdims=True)


def _check_one_hot(t):
    if not (np.all((t == 0) | (t == 1)) and np.all(t.sum(axis=0) == 1)):
        raise InvalidArgumentError("target columns must be one-hot")


def softmax_ce_loss(y: np.ndarray, t: np.ndarray, check_targets: bool = False) -> float:
    """Softmax cross-entropy summed over the batch (columns).

    The training loop divides by the batch size, not this function.
    """
    if y.shape != t.shape:
        raise InvalidArgumentError(f"shape mismatch: {y.shape} vs {t.shape}")
    if check_targets:
        _check_one_hot(t)
    z = y - y.max(axis=0, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=0))
    return float(np.sum(log_norm - (z * t).sum(axis=0)))


def softmax_ce_gradient(y: np.ndarray, t: np.ndarray, check_targets: bool = False) -> np.ndarray:
    """Gradient of the summed loss wrt y: softmax(y) - t, columnwise."""
    if y.shape != t.shape:
        raise InvalidArgumentError(f"shape mismatch: {y.shape} vs {t.shape}")
    if check_targets:
        _check_one_hot(t)
    return softmax_columns(y) - t


class SoftmaxCrossEntropyLoss:
    """Object form of the loss, matching the scripting interface."""

    def __call__(self, y, t):
        return softmax_ce_loss(y, t)

    loss = __call__

    def gradient(self, y, t):
        return softmax_ce_gradient(y, t)

    def __repr__(self):
        return "SoftmaxCrossEntropyLoss()"
