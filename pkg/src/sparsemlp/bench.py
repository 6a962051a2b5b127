"""Experiment configs, backend builders, and benchmark harnesses.

Reproduces the library's headline comparisons: training-time and
inference-time of the truly sparse backend against the masked-dense
baseline, depth/width scalability sweeps, and on-disk size reports.
Timing uses a monotonic clock around compute phases only; data loading,
augmentation, and metric evaluation are never inside a timed region.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from ._version import __version__
from .data_io import Dataset, load_cifar10, model_size_report, synthetic_blobs
from .errors import ConfigurationError, InvalidArgumentError
from .nn import Momentum, ReLU
from .sparsity import Rng, density_report, er_densities, layer_pairs_from_chain
from .tensor_core import get_num_threads, set_num_threads, warmup_kernels
from .train import (
    Dense,
    MaskedDense,
    MultiStepSchedule,
    Sequential,
    Sparse,
    TrainConfig,
    sgd_train,
)

__all__ = [
    "TABLE_LR_DEFAULTS",
    "default_learning_rate",
    "ExperimentConfig",
    "RunReport",
    "build_model",
    "load_dataset",
    "run_training",
    "bench_epoch_seconds",
    "sweep_depth",
    "sweep_width",
    "bench_inference",
    "weights_fingerprint",
]

# Density -> initial learning rate defaults for the benchmark experiments.
TABLE_LR_DEFAULTS = {
    1.0: 0.01,
    0.5: 0.01,
    0.2: 0.01,
    0.1: 0.03,
    0.05: 0.03,
    0.01: 0.1,
    0.005: 0.1,
    0.001: 0.1,
}


def default_learning_rate(density: float) -> float:
    """Exact table match, else the nearest table density in log space."""
    if density in TABLE_LR_DEFAULTS:
        return TABLE_LR_DEFAULTS[density]
    keys = sorted(TABLE_LR_DEFAULTS)
    nearest = min(keys, key=lambda k: abs(np.log10(k) - np.log10(density)))
    return TABLE_LR_DEFAULTS[nearest]


@dataclass
class ExperimentConfig:
    layer_dims: list[int] = field(default_factory=lambda: [3072, 1024, 512, 10])
    density: float = 1.0
    backend: str = "sparse"  # "sparse" | "masked"
    epochs: int = 10
    batch_size: int = 100
    lr: float | None = None
    lr_milestones: tuple = (0.5, 0.75)
    lr_gamma: float = 0.1
    momentum: float = 0.9
    nesterov: bool = True
    seed: int = 0
    dataset: str = "synthetic:classes=10,features=3072,per_class=100,spread=1.0"
    threads: int | None = None
    out: str | None = None
    eval_metrics: bool = True
    shuffle: bool = True
    augment: bool = False

    def __post_init__(self):
        if not 0.0 < self.density <= 1.0:
            raise ConfigurationError(f"density must be in (0, 1], got {self.density}")
        if self.backend not in ("sparse", "masked"):
            raise ConfigurationError(f"backend must be 'sparse' or 'masked', got {self.backend!r}")
        if len(self.layer_dims) < 2:
            raise ConfigurationError("layer_dims needs input and output sizes at least")

    def resolved_lr(self) -> float:
        return self.lr if self.lr is not None else default_learning_rate(self.density)

    def schedule(self):
        return MultiStepSchedule(self.resolved_lr(), self.lr_milestones, self.lr_gamma)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lr"] = self.resolved_lr()
        d["lr_milestones"] = list(self.lr_milestones)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        kwargs = {k: v for k, v in d.items() if k in known}
        if "lr_milestones" in kwargs:
            kwargs["lr_milestones"] = tuple(kwargs["lr_milestones"])
        return cls(**kwargs)


def apply_threads(threads: int | None) -> int:
    if threads is not None:
        set_num_threads(int(threads))
    return get_num_threads()


def build_model(config: ExperimentConfig):
    """Build the configured backend's model plus its sparsity plan.

    Layers whose ER density saturates at 1 become plain dense layers in
    both backends; masked layers emulate the sparse ones through binary
    masks over dense storage.
    """
    plan = er_densities(layer_pairs_from_chain(config.layer_dims), config.density)
    model = Sequential()
    n_layers = len(plan.layer_dims)
    for i, ((n_in, n_out), dens, nnz) in enumerate(
        zip(plan.layer_dims, plan.layer_densities, plan.layer_nnz)
    ):
        activation = ReLU() if i < n_layers - 1 else None
        optimizer = Momentum(config.momentum, nesterov=config.nesterov)
        if dens >= 1.0:
            model.add(Dense(n_out, activation=activation, optimizer=optimizer))
        elif config.backend == "sparse":
            model.add(Sparse(n_out, dens, activation=activation, optimizer=optimizer, nnz=nnz))
        else:
            model.add(MaskedDense(n_out, dens, activation=activation, optimizer=optimizer, nnz=nnz))
    model.compile(
        input_size=config.layer_dims[0], batch_size=config.batch_size, seed=config.seed
    )
    return model, plan


def _parse_kv_spec(body: str, defaults: dict) -> dict:
    params = dict(defaults)
    if body:
        for part in body.split(","):
            if not part:
                continue
            if "=" not in part:
                raise InvalidArgumentError(f"bad dataset parameter {part!r}, expected key=value")
            key, value = part.split("=", 1)
            if key not in params:
                raise InvalidArgumentError(f"unknown dataset parameter {key!r}")
            params[key] = type(defaults[key])(value)
    return params


def load_dataset(spec: str, seed: int, keep_raw: bool = False) -> Dataset:
    """Parse "cifar10:DIR" or "synthetic:key=value,..." dataset specs."""
    if spec.startswith("cifar10:"):
        return load_cifar10(spec.split(":", 1)[1], keep_raw=keep_raw)
    if spec == "synthetic" or spec.startswith("synthetic:"):
        body = spec.split(":", 1)[1] if ":" in spec else ""
        params = _parse_kv_spec(
            body,
            {
                "classes": 10,
                "features": 3072,
                "per_class": 100,
                "spread": 1.0,
                "test_per_class": 0,
                "seed": seed,
            },
        )
        return synthetic_blobs(
            params["classes"],
            params["features"],
            params["per_class"],
            params["spread"],
            params["seed"],
            n_test_per_class=params["test_per_class"] or None,
        )
    raise InvalidArgumentError(f"unknown dataset spec {spec!r}; use cifar10:DIR or synthetic:...")


def weights_fingerprint(model) -> str:
    """SHA-256 over every parameter tensor's raw bytes, in layer order."""
    digest = hashlib.sha256()
    for name, arr in model.parameters():
        digest.update(name.encode())
        digest.update(np.ascontiguousarray(arr).tobytes())
    return digest.hexdigest()


@dataclass
class RunReport:
    config: dict
    threads: int
    library_version: str
    plan: dict
    epochs: list[dict]
    summary: dict

    def to_dict(self):
        return {
            "config": self.config,
            "threads": self.threads,
            "library_version": self.library_version,
            "plan": self.plan,
            "epochs": self.epochs,
            "summary": self.summary,
        }

    def write(self, out_prefix: str, csv: bool = False):
        """JSON-lines per-epoch records plus one summary JSON."""
        epochs_path = f"{out_prefix}_epochs.jsonl"
        with open(epochs_path, "w") as fh:
            for record in self.epochs:
                fh.write(json.dumps(record) + "\n")
        summary_path = f"{out_prefix}_summary.json"
        with open(summary_path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)
        written = [epochs_path, summary_path]
        if csv:
            csv_path = f"{out_prefix}_epochs.csv"
            cols = ["epoch", "lr", "train_loss", "train_acc", "test_acc", "epoch_seconds"]
            with open(csv_path, "w") as fh:
                fh.write(",".join(cols) + "\n")
                for record in self.epochs:
                    fh.write(",".join("" if record[c] is None else str(record[c]) for c in cols) + "\n")
            written.append(csv_path)
        return written


def run_training(config: ExperimentConfig, dataset: Dataset | None = None) -> tuple:
    """Build, train, and report one experiment. Returns (report, model)."""
    threads = apply_threads(config.threads)
    if dataset is None:
        dataset = load_dataset(config.dataset, config.seed, keep_raw=config.augment)
    augment_fn = None
    if config.augment:
        from .data_io import make_augmenter

        augment_fn = make_augmenter(dataset)  # raises if no raw pixels
    model, plan = build_model(config)
    warmup_kernels((model.dtype.type,))
    train_config = TrainConfig(
        epochs=config.epochs,
        batch_size=config.batch_size,
        schedule=config.schedule(),
        shuffle=config.shuffle,
        seed=config.seed,
        eval_metrics=config.eval_metrics,
        augment=config.augment,
    )
    records = sgd_train(model, dataset, train_config, augment_fn=augment_fn)
    report_density = density_report(model)
    size = model_size_report(model)
    test_accs = [r.test_acc for r in records if r.test_acc is not None]
    summary = {
        "best_test_acc": max(test_accs) if test_accs else None,
        "final_train_loss": records[-1].train_loss if records else None,
        "total_train_seconds": sum(r.epoch_seconds for r in records),
        "param_count": report_density.param_count,
        "nnz_count": report_density.nnz_count,
        "archive_bytes": size.weight_bytes,
        "archive_bytes_with_biases": size.total_bytes,
        "weights_fingerprint": weights_fingerprint(model),
    }
    report = RunReport(
        config=config.to_dict(),
        threads=threads,
        library_version=__version__,
        plan=plan.to_dict(),
        epochs=[r.to_dict() for r in records],
        summary=summary,
    )
    return report, model


def bench_epoch_seconds(
    config: ExperimentConfig,
    n_epochs: int,
    dataset: Dataset | None = None,
    warmup_epochs: int = 1,
) -> list[float]:
    """Per-epoch compute seconds for ``n_epochs`` measured epochs.

    Metrics evaluation is disabled; ``warmup_epochs`` extra epochs run
    first (JIT, cache warm) and are discarded.
    """
    apply_threads(config.threads)
    if dataset is None:
        dataset = load_dataset(config.dataset, config.seed)
    model, _ = build_model(config)
    warmup_kernels((model.dtype.type,))
    train_config = TrainConfig(
        epochs=warmup_epochs + n_epochs,
        batch_size=config.batch_size,
        schedule=config.schedule(),
        shuffle=config.shuffle,
        seed=config.seed,
        eval_metrics=False,
    )
    records = sgd_train(model, dataset, train_config)
    return [r.epoch_seconds for r in records[warmup_epochs:]]


def _sweep_point(config: ExperimentConfig, dims, n_epochs, dataset, label):
    point = ExperimentConfig.from_dict({**config.to_dict(), "layer_dims": list(dims)})
    record = {
        "sweep": label,
        "layer_dims": list(dims),
        "density": config.density,
        "backend": config.backend,
        "status": "ok",
    }
    try:
        seconds = bench_epoch_seconds(point, n_epochs, dataset=dataset)
        record["epoch_seconds"] = seconds
        record["mean_epoch_seconds"] = float(np.mean(seconds))
    except MemoryError:
        record["status"] = "oom"
    return record


def sweep_depth(
    config: ExperimentConfig, depths, width: int = 1024, n_epochs: int = 3, dataset=None
) -> list[dict]:
    """N hidden layers of ``width`` for each N in ``depths``."""
    if dataset is None:
        dataset = load_dataset(config.dataset, config.seed)
    records = []
    in_dim, out_dim = config.layer_dims[0], config.layer_dims[-1]
    for n in depths:
        dims = [in_dim] + [width] * int(n) + [out_dim]
        records.append(_sweep_point(config, dims, n_epochs, dataset, f"depth={n}"))
    return records


def sweep_width(
    config: ExperimentConfig, widths, hidden_layers: int = 3, n_epochs: int = 1, dataset=None
) -> list[dict]:
    """``hidden_layers`` equally sized hidden layers for each width."""
    if dataset is None:
        dataset = load_dataset(config.dataset, config.seed)
    records = []
    in_dim, out_dim = config.layer_dims[0], config.layer_dims[-1]
    for m in widths:
        dims = [in_dim] + [int(m)] * hidden_layers + [out_dim]
        records.append(_sweep_point(config, dims, n_epochs, dataset, f"width={m}"))
    return records


def bench_inference(
    config: ExperimentConfig, n_repeats: int = 100, warmup: int = 10, model=None
) -> dict:
    """Latency of a single-example (batch size 1) forward pass.

    The first ``warmup`` iterations are discarded; at least 100 measured
    repeats by default. Returns milliseconds statistics.
    """
    if n_repeats < 1:
        raise InvalidArgumentError("n_repeats must be >= 1")
    apply_threads(config.threads)
    if model is None:
        model, _ = build_model(config)
    warmup_kernels((model.dtype.type,))
    model.eval_mode()
    x = Rng(config.seed).stream("data").standard_normal((model.input_size, 1)).astype(model.dtype)
    for _ in range(warmup):
        model.feedforward(x)
    times = np.empty(n_repeats)
    for i in range(n_repeats):
        t0 = time.perf_counter()
        model.feedforward(x)
        times[i] = time.perf_counter() - t0
    times *= 1e3
    return {
        "backend": config.backend,
        "density": config.density,
        "layer_dims": list(config.layer_dims),
        "repeats": n_repeats,
        "mean_ms": float(times.mean()),
        "median_ms": float(np.median(times)),
        "min_ms": float(times.min()),
        "max_ms": float(times.max()),
    }
