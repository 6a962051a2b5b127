"""Sequential model container, learning-rate schedules, and the SGD loop.

A model is declared as a stack of layer specs and materialized by
``compile``: patterns are sampled, weights Xavier-initialized, and optimizer
state allocated, all from per-purpose streams of one seeded Rng, so a seed
fully determines the run. The training loop slices column blocks, divides
the loss gradient by the batch size, and drops the trailing partial batch
(K = N // batch_size batches per epoch).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, InvalidArgumentError
from .nn import (
    ActivationLayer,
    BatchNormLayer,
    DenseLinearLayer,
    DropoutLayer,
    GradientDescent,
    NoActivation,
    SoftmaxCrossEntropyLoss,
    SparseLinearLayer,
    softmax_ce_loss,
)
from .sparsity import Rng, sample_pattern, xavier_init

__all__ = [
    "Sparse",
    "Dense",
    "MaskedDense",
    "BatchNormalization",
    "Dropout",
    "Sequential",
    "ConstantSchedule",
    "MultiStepSchedule",
    "lr_at",
    "TrainConfig",
    "EpochRecord",
    "sgd_train",
    "evaluate",
]


class Sparse:
    """Spec for a sparse linear layer: ``units`` outputs at ``density``.

    ``nnz`` overrides the rounded count when an allocation plan already
    fixed it. ``density=1`` still builds a truly sparse (full-pattern)
    layer; use Dense for dense storage.
    """

    def __init__(self, units, density, activation=None, optimizer=None, nnz=None):
        if units <= 0:
            raise ConfigurationError(f"units must be positive, got {units}")
        if not 0.0 < density <= 1.0:
            raise ConfigurationError(f"density must be in (0, 1], got {density}")
        self.units = int(units)
        self.density = float(density)
        self.activation = activation or NoActivation()
        self.optimizer = optimizer or GradientDescent()
        self.nnz = nnz


class Dense:
    def __init__(self, units, activation=None, optimizer=None):
        if units <= 0:
            raise ConfigurationError(f"units must be positive, got {units}")
        self.units = int(units)
        self.activation = activation or NoActivation()
        self.optimizer = optimizer or GradientDescent()


class MaskedDense:
    """Dense storage emulating a sparse layer through a binary mask; the
    reference baseline the truly sparse layer is benchmarked against."""

    def __init__(self, units, density, activation=None, optimizer=None, nnz=None):
        if units <= 0:
            raise ConfigurationError(f"units must be positive, got {units}")
        if not 0.0 < density <= 1.0:
            raise ConfigurationError(f"density must be in (0, 1], got {density}")
        self.units = int(units)
        self.density = float(density)
        self.activation = activation or NoActivation()
        self.optimizer = optimizer or GradientDescent()
        self.nnz = nnz


class BatchNormalization:
    def __init__(self, optimizer=None):
        self.optimizer = optimizer or GradientDescent()


class Dropout:
    def __init__(self, p):
        if not 0.0 <= p < 1.0:
            raise ConfigurationError(f"drop probability must be in [0, 1), got {p}")
        self.p = float(p)


def _resolve_nnz(spec, n_in):
    size = spec.units * n_in
    nnz = spec.nnz if spec.nnz is not None else int(round(spec.density * size))
    if not 0 <= nnz <= size:
        raise ConfigurationError(f"nnz {nnz} out of range for a {spec.units}x{n_in} layer")
    return nnz


class Sequential:
    """Ordered layer stack: add specs, compile once, then
    feedforward / backpropagate / optimize."""

    def __init__(self):
        self._specs = []
        self.layers = []
        self.input_size = None
        self.batch_size = None
        self.compiled = False
        self.training = True
        self.rng = None
        self.dtype = None

    def add(self, spec) -> "Sequential":
        if self.compiled:
            raise ConfigurationError("cannot add layers after compile")
        if not isinstance(spec, (Sparse, Dense, MaskedDense, BatchNormalization, Dropout)):
            raise ConfigurationError(f"unsupported layer spec {type(spec).__name__}")
        self._specs.append(spec)
        return self

    def compile(self, input_size, batch_size, seed=0, rng=None, dtype=np.float32) -> "Sequential":
        if self.compiled:
            raise ConfigurationError("model is already compiled")
        if input_size <= 0 or batch_size <= 0:
            raise ConfigurationError("input_size and batch_size must be positive")
        if not any(isinstance(s, (Sparse, Dense, MaskedDense)) for s in self._specs):
            raise ConfigurationError("model needs at least one parameterized layer")
        self.rng = rng if rng is not None else Rng(seed)
        self.dtype = np.dtype(dtype)
        pattern_rng = self.rng.stream("pattern")
        init_rng = self.rng.stream("init")
        dropout_rng = self.rng.stream("dropout")

        n_in = int(input_size)
        for spec in self._specs:
            if isinstance(spec, Sparse):
                nnz = _resolve_nnz(spec, n_in)
                pattern = sample_pattern(spec.units, n_in, nnz, pattern_rng)
                values = xavier_init(n_in, spec.units, init_rng, nnz=nnz, dtype=self.dtype)
                bias = np.zeros(spec.units, dtype=self.dtype)
                self.layers.append(SparseLinearLayer(pattern, values, bias, spec.optimizer))
                self._append_activation(spec.activation)
                n_in = spec.units
            elif isinstance(spec, MaskedDense):
                # consume pattern/init draws exactly like the sparse layer so
                # both backends start from bit-identical weights
                nnz = _resolve_nnz(spec, n_in)
                pattern = sample_pattern(spec.units, n_in, nnz, pattern_rng)
                values = xavier_init(n_in, spec.units, init_rng, nnz=nnz, dtype=self.dtype)
                weights = np.zeros((spec.units, n_in), dtype=self.dtype)
                weights[pattern.row_indices(), pattern.col_idx] = values
                mask = pattern.dense_mask(dtype=self.dtype)
                bias = np.zeros(spec.units, dtype=self.dtype)
                self.layers.append(DenseLinearLayer(weights, bias, spec.optimizer, mask=mask))
                self._append_activation(spec.activation)
                n_in = spec.units
            elif isinstance(spec, Dense):
                weights = xavier_init(n_in, spec.units, init_rng, dtype=self.dtype).reshape(
                    spec.units, n_in
                )
                bias = np.zeros(spec.units, dtype=self.dtype)
                self.layers.append(DenseLinearLayer(weights, bias, spec.optimizer))
                self._append_activation(spec.activation)
                n_in = spec.units
            elif isinstance(spec, BatchNormalization):
                self.layers.append(BatchNormLayer(n_in, optimizer=spec.optimizer, dtype=self.dtype))
            elif isinstance(spec, Dropout):
                self.layers.append(DropoutLayer(spec.p, rng=dropout_rng))
        self.input_size = int(input_size)
        self.batch_size = int(batch_size)
        self.output_size = n_in
        self.compiled = True
        return self

    def _append_activation(self, activation):
        if not isinstance(activation, NoActivation):
            self.layers.append(ActivationLayer(activation))

    def _require_compiled(self):
        if not self.compiled:
            raise ConfigurationError("model must be compiled first")

    def train_mode(self):
        self.training = True

    def eval_mode(self):
        self.training = False

    def feedforward(self, x) -> np.ndarray:
        self._require_compiled()
        if x.shape[0] != self.input_size:
            raise InvalidArgumentError(
                f"expected {self.input_size} input rows, got {x.shape[0]}"
            )
        if x.dtype != self.dtype:
            x = x.astype(self.dtype)
        for layer in self.layers:
            x = layer.forward(x, training=self.training)
        return x

    def backpropagate(self, y, d_y) -> np.ndarray:
        self._require_compiled()
        for layer in reversed(self.layers):
            d_y = layer.backward(d_y)
        return d_y

    def optimize(self, eta: float) -> None:
        self._require_compiled()
        for layer in self.layers:
            layer.optimize(eta)

    def parameters(self):
        """Yield (name, array) for every trainable parameter tensor."""
        for i, layer in enumerate(self.layers):
            if isinstance(layer, SparseLinearLayer):
                yield f"layer{i}.values", layer.weights.values
                yield f"layer{i}.bias", layer.bias
            elif isinstance(layer, DenseLinearLayer):
                yield f"layer{i}.weights", layer.weights
                yield f"layer{i}.bias", layer.bias
            elif isinstance(layer, BatchNormLayer):
                yield f"layer{i}.gamma", layer.gamma
                yield f"layer{i}.beta", layer.beta


class ConstantSchedule:
    """Fixed learning rate; callable on the epoch index."""

    kind = "constant"

    def __init__(self, lr: float):
        if lr <= 0:
            raise InvalidArgumentError(f"learning rate must be positive, got {lr}")
        self.base_lr = float(lr)

    def __call__(self, epoch: int, total_epochs: int | None = None) -> float:
        return self.base_lr

    def to_dict(self):
        return {"kind": self.kind, "base_lr": self.base_lr}


class MultiStepSchedule:
    """Decay by ``gamma`` at fractional milestones of the total epochs."""

    kind = "multistep"

    def __init__(self, base_lr: float, milestones=(0.5, 0.75), gamma: float = 0.1):
        if base_lr <= 0:
            raise InvalidArgumentError(f"learning rate must be positive, got {base_lr}")
        if gamma <= 0:
            raise InvalidArgumentError(f"gamma must be positive, got {gamma}")
        milestones = tuple(float(m) for m in milestones)
        if any(not 0.0 < m < 1.0 for m in milestones):
            raise InvalidArgumentError("milestones must lie strictly inside (0, 1)")
        if any(b <= a for a, b in zip(milestones, milestones[1:])):
            raise InvalidArgumentError("milestones must be strictly increasing")
        self.base_lr = float(base_lr)
        self.milestones = milestones
        self.gamma = float(gamma)

    def __call__(self, epoch: int, total_epochs: int) -> float:
        passed = sum(1 for m in self.milestones if epoch >= int(m * total_epochs))
        return self.base_lr * self.gamma**passed

    def to_dict(self):
        return {
            "kind": self.kind,
            "base_lr": self.base_lr,
            "milestones": list(self.milestones),
            "gamma": self.gamma,
        }


def lr_at(schedule, epoch: int, total_epochs: int) -> float:
    if not 0 <= epoch < max(total_epochs, 1):
        raise InvalidArgumentError(f"epoch {epoch} outside [0, {total_epochs})")
    return schedule(epoch, total_epochs)


@dataclass
class TrainConfig:
    epochs: int
    batch_size: int
    schedule: object
    shuffle: bool = True
    seed: int = 0
    loss: object = field(default_factory=SoftmaxCrossEntropyLoss)
    augment: bool = False
    eval_metrics: bool = True

    def __post_init__(self):
        if self.epochs < 0:
            raise InvalidArgumentError("epochs must be >= 0")
        if self.batch_size <= 0:
            raise InvalidArgumentError("batch_size must be positive")


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    train_loss: float | None
    train_acc: float | None
    test_acc: float | None
    epoch_seconds: float

    def to_dict(self):
        return {
            "epoch": self.epoch,
            "lr": self.lr,
            "train_loss": self.train_loss,
            "train_acc": self.train_acc,
            "test_acc": self.test_acc,
            "epoch_seconds": self.epoch_seconds,
        }


def evaluate(model, x, t, batch_size=None, loss=None):
    """Mean per-example loss and accuracy in inference mode (rng-free)."""
    n = x.shape[1]
    if n == 0:
        raise InvalidArgumentError("cannot evaluate on an empty dataset")
    batch_size = batch_size or model.batch_size or n
    was_training = model.training
    model.eval_mode()
    total_loss = 0.0
    correct = 0
    try:
        for start in range(0, n, batch_size):
            xb = x[:, start : start + batch_size]
            tb = t[:, start : start + batch_size]
            y = model.feedforward(xb)
            total_loss += softmax_ce_loss(y, tb) if loss is None else loss(y, tb)
            correct += int(np.sum(np.argmax(y, axis=0) == np.argmax(tb, axis=0)))
    finally:
        if was_training:
            model.train_mode()
    return total_loss / n, correct / n


def sgd_train(model, dataset, config: TrainConfig, augment_fn=None) -> list[EpochRecord]:
    """Mini-batch SGD over the dataset's training split.

    Per epoch: optionally shuffle the example order, walk K = N // batch
    column blocks, feedforward, divide the loss gradient by the batch size,
    backpropagate, and step with the epoch's learning rate (resolved once
    at the epoch start). Records per-epoch metrics in inference mode;
    ``epoch_seconds`` covers compute only, never data augmentation or
    metric evaluation.
    """
    model._require_compiled()
    n = dataset.Xtrain.shape[1]
    if n == 0:
        raise InvalidArgumentError("training dataset is empty")
    if dataset.Xtrain.shape[0] != model.input_size:
        raise InvalidArgumentError(
            f"dataset has {dataset.Xtrain.shape[0]} features, model expects {model.input_size}"
        )
    loss = config.loss
    batch_size = config.batch_size
    k_batches = n // batch_size
    shuffle_rng = model.rng.stream("shuffle")
    augment_rng = model.rng.stream("augment")
    indices = np.arange(n)
    records: list[EpochRecord] = []

    for epoch in range(config.epochs):
        if config.shuffle:
            shuffle_rng.shuffle(indices)
        eta = lr_at(config.schedule, epoch, config.epochs)
        model.train_mode()
        elapsed = 0.0
        for k in range(k_batches):
            batch = indices[k * batch_size : (k + 1) * batch_size]
            if config.augment and augment_fn is not None:
                xb = augment_fn(batch, augment_rng)
                tb = dataset.Ttrain[:, batch]
            else:
                xb = dataset.Xtrain[:, batch]
                tb = dataset.Ttrain[:, batch]
            t0 = time.perf_counter()
            y = model.feedforward(xb)
            d_y = loss.gradient(y, tb) / batch_size
            model.backpropagate(y, d_y)
            model.optimize(eta)
            elapsed += time.perf_counter() - t0

        if config.eval_metrics:
            train_loss, train_acc = evaluate(model, dataset.Xtrain, dataset.Ttrain, batch_size)
            _, test_acc = (
                evaluate(model, dataset.Xtest, dataset.Ttest, batch_size)
                if dataset.Xtest is not None and dataset.Xtest.shape[1]
                else (None, None)
            )
        else:
            train_loss = train_acc = test_acc = None
        records.append(
            EpochRecord(
                epoch=epoch,
                lr=eta,
                train_loss=train_loss,
                train_acc=train_acc,
                test_acc=test_acc,
                epoch_seconds=elapsed,
            )
        )
    return records
