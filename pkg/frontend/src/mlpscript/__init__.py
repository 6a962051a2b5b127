"""Keras-style scripting surface for the sparsemlp library.

Scripts look like this:

    dataset = load_cifar10()
    loss = SoftmaxCrossEntropyLoss()
    learning_rate_scheduler = ConstantScheduler(0.01)
    manual_seed(1234567)
    density = 0.05

    model = Sequential()
    model.add(BatchNormalization())
    model.add(Sparse(1000, density, ReLU(), GradientDescent(), Xavier()))
    model.add(Dense(128, ReLU(), Momentum(0.9), Xavier()))
    model.add(Dense(64, ReLU(), GradientDescent(), Xavier()))
    model.add(Dropout(0.3))
    model.add(Dense(10, NoActivation(), GradientDescent(), Xavier()))

    model.compile(input_size=3072, batch_size=100)
    stochastic_gradient_descent(model, dataset, loss, learning_rate_scheduler,
                                epochs=10, batch_size=100, shuffle=True)

No training math lives here: every step composes the native library's
feedforward / backpropagate / optimize, so a script run is bit-identical
to the native training loop under the same seed.
"""

from __future__ import annotations

import os

import numpy as np

import sparsemlp as _native
from sparsemlp import StateError
from sparsemlp.errors import InvalidArgumentError
from sparsemlp.nn import (
    GradientDescent,
    Momentum,
    NoActivation,
    ReLU,
    SoftmaxCrossEntropyLoss,
)
from sparsemlp.train import ConstantSchedule as _ConstantSchedule
from sparsemlp.train import evaluate as _evaluate

__version__ = _native.__version__

__all__ = [
    "Sequential",
    "Sparse",
    "Dense",
    "BatchNormalization",
    "Dropout",
    "ReLU",
    "NoActivation",
    "GradientDescent",
    "Momentum",
    "Xavier",
    "SoftmaxCrossEntropyLoss",
    "ConstantScheduler",
    "manual_seed",
    "load_cifar10",
    "stochastic_gradient_descent",
    "__version__",
]

_seed_state = {"seed": 0}


def manual_seed(seed: int) -> None:
    """Fix the seed used by the next ``model.compile`` (patterns, weights,
    shuffling, dropout all derive from it)."""
    _seed_state["seed"] = int(seed)


class Xavier:
    """Uniform(-a, a) weight init with a = sqrt(6 / (fan_in + fan_out));
    the only initializer the native library ships."""

    def __repr__(self):
        return "Xavier()"


class ConstantScheduler(_ConstantSchedule):
    """Callable learning-rate schedule: ``scheduler(epoch) -> lr``."""


def _check_init(weight_initializer):
    if weight_initializer is not None and not isinstance(weight_initializer, Xavier):
        raise InvalidArgumentError(
            f"unsupported weight initializer {weight_initializer!r}; use Xavier()"
        )


class Sparse:
    """Sparse(units, density, activation, optimizer, weight_initializer)."""

    def __init__(self, units, density, activation=None, optimizer=None, weight_initializer=None):
        _check_init(weight_initializer)
        self._spec = _native.Sparse(units, density, activation=activation, optimizer=optimizer)

    def to_native(self):
        return self._spec


class Dense:
    """Dense(units, activation, optimizer, weight_initializer)."""

    def __init__(self, units, activation=None, optimizer=None, weight_initializer=None):
        _check_init(weight_initializer)
        self._spec = _native.Dense(units, activation=activation, optimizer=optimizer)

    def to_native(self):
        return self._spec


class BatchNormalization:
    def __init__(self):
        self._spec = _native.BatchNormalization()

    def to_native(self):
        return self._spec


class Dropout:
    def __init__(self, p):
        self._spec = _native.Dropout(p)

    def to_native(self):
        return self._spec


_LAYER_TYPES = (Sparse, Dense, BatchNormalization, Dropout)


class Sequential:
    """Layer stack bound to a native model at ``compile`` time.

    ``self.native`` holds the compiled sparsemlp Sequential; everything
    this class does after compile is delegation.
    """

    def __init__(self):
        self._layers = []
        self.native = None

    def add(self, layer) -> "Sequential":
        if self.native is not None:
            raise StateError("cannot add layers after compile")
        if not isinstance(layer, _LAYER_TYPES):
            raise InvalidArgumentError(
                f"unsupported layer {type(layer).__name__}; use Sparse/Dense/"
                "BatchNormalization/Dropout"
            )
        self._layers.append(layer)
        return self

    def compile(self, input_size: int, batch_size: int) -> "Sequential":
        if self.native is not None:
            raise StateError("model is already compiled")
        native = _native.Sequential()
        for layer in self._layers:
            native.add(layer.to_native())
        native.compile(input_size=input_size, batch_size=batch_size, seed=_seed_state["seed"])
        self.native = native
        return self

    def _require_native(self):
        if self.native is None:
            raise StateError("model is not compiled; call compile(input_size, batch_size)")
        return self.native

    def feedforward(self, x):
        return self._require_native().feedforward(x)

    def backpropagate(self, y, d_y):
        return self._require_native().backpropagate(y, d_y)

    def optimize(self, eta):
        return self._require_native().optimize(eta)

    def weights(self) -> list[np.ndarray]:
        """Parameter tensors in layer order (weights-inspection hook)."""
        return [arr.copy() for _, arr in self._require_native().parameters()]

    def densities(self) -> list[float]:
        """Realized per-layer weight densities."""
        return _native.density_report(self._require_native()).layer_densities


def load_cifar10(path: str | None = None):
    """Load the CIFAR-10 binary batches; the directory comes from ``path``
    or the CIFAR10_DIR environment variable."""
    path = path or os.environ.get("CIFAR10_DIR")
    if not path:
        raise InvalidArgumentError(
            "no dataset directory: pass load_cifar10(path) or set CIFAR10_DIR"
        )
    return _native.load_cifar10(path)


def stochastic_gradient_descent(model, dataset, loss, learning_rate,
                                epochs, batch_size, shuffle):
    """Mini-batch SGD driving the native primitives, one column block at a
    time; the trailing partial batch is dropped. Returns per-epoch metrics.

    Under a shared seed this produces bit-identical weights to the native
    training loop: both shuffle with the model's own stream and perform the
    same feedforward / scaled-gradient / backpropagate / optimize calls.
    """
    native = model._require_native() if isinstance(model, Sequential) else model
    n = dataset.Xtrain.shape[1]
    if n == 0:
        raise InvalidArgumentError("training dataset is empty")
    indices = np.arange(n)
    k_batches = n // batch_size
    shuffle_rng = native.rng.stream("shuffle")
    metrics = []
    for epoch in range(epochs):
        if shuffle:
            shuffle_rng.shuffle(indices)
        eta = learning_rate(epoch)
        native.train_mode()
        for k in range(k_batches):
            batch = indices[k * batch_size : (k + 1) * batch_size]
            x = dataset.Xtrain[:, batch]
            t = dataset.Ttrain[:, batch]
            y = native.feedforward(x)
            d_y = loss.gradient(y, t) / batch_size
            native.backpropagate(y, d_y)
            native.optimize(eta)
        train_loss, train_acc = _evaluate(native, dataset.Xtrain, dataset.Ttrain, batch_size)
        if dataset.Xtest is not None and dataset.Xtest.shape[1]:
            _, test_acc = _evaluate(native, dataset.Xtest, dataset.Ttest, batch_size)
        else:
            test_acc = None
        metrics.append({
            "epoch": epoch,
            "lr": eta,
            "train_loss": train_loss,
            "train_acc": train_acc,
            "test_acc": test_acc,
        })
    return metrics
