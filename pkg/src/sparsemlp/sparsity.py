"""Sparsity allocation, pattern sampling, weight init, and seeded RNG streams.

Layer densities follow the Erdos-Renyi rule: d_l proportional to
(n_in + n_out) / (n_in * n_out), so larger layers end up sparser. A single
scale factor is solved so the whole model hits the requested global density;
layers whose solved density reaches 1 are frozen dense and the factor is
re-solved over the rest.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError
from .tensor_core import SparsityPattern

__all__ = [
    "Rng",
    "SparsityPlan",
    "er_densities",
    "layer_pairs_from_chain",
    "sample_pattern",
    "xavier_limit",
    "xavier_init",
    "density_report",
    "DensityReport",
]

# Fixed purpose -> subseed mapping. Order is part of the on-disk/golden
# contract: reordering would change every seeded result.
_STREAMS = ("pattern", "init", "shuffle", "dropout", "augment", "data")


class Rng:
    """Seeded random source with independent per-purpose streams.

    Streams are derived from the 64-bit seed via SeedSequence spawn keys
    (PCG64 generators), so e.g. toggling shuffling never perturbs weight
    initialization. Identical seed, identical streams, on any platform.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._generators: dict[str, np.random.Generator] = {}

    def stream(self, purpose: str) -> np.random.Generator:
        if purpose not in _STREAMS:
            raise InvalidArgumentError(f"unknown rng stream {purpose!r}; one of {_STREAMS}")
        if purpose not in self._generators:
            key = _STREAMS.index(purpose)
            seq = np.random.SeedSequence(entropy=self.seed, spawn_key=(key,))
            self._generators[purpose] = np.random.Generator(np.random.PCG64(seq))
        return self._generators[purpose]


@dataclass
class SparsityPlan:
    """Solved per-layer densities and nonzero budgets for one model."""

    global_density: float
    layer_dims: list[tuple[int, int]]
    layer_densities: list[float]
    layer_nnz: list[int]
    layer_sizes: list[int] = field(default_factory=list)

    @property
    def global_sparsity(self) -> float:
        return 1.0 - self.global_density

    @property
    def total_size(self) -> int:
        return sum(self.layer_sizes)

    @property
    def total_nnz(self) -> int:
        return sum(self.layer_nnz)

    @property
    def realized_density(self) -> float:
        return self.total_nnz / self.total_size

    def to_dict(self) -> dict:
        return {
            "global_density": self.global_density,
            "global_sparsity": self.global_sparsity,
            "layer_dims": [list(d) for d in self.layer_dims],
            "layer_densities": self.layer_densities,
            "layer_nnz": self.layer_nnz,
            "total_nnz": self.total_nnz,
        }


def layer_pairs_from_chain(dims) -> list[tuple[int, int]]:
    """[3072, 1024, 512, 10] -> [(3072, 1024), (1024, 512), (512, 10)]."""
    dims = list(dims)
    if len(dims) < 2:
        raise InvalidArgumentError("a layer chain needs at least two sizes")
    return list(zip(dims[:-1], dims[1:]))


def er_densities(layer_dims, global_density: float) -> SparsityPlan:
    """Solve Erdos-Renyi layer densities for a requested global density.

    ``layer_dims`` is a list of (n_in, n_out) pairs, or a flat chain of
    sizes. Each unsaturated layer gets d_l = eps*(n_in+n_out)/(n_in*n_out)
    with a common eps balancing sum(d_l * size_l) = global_density * total.
    Layers that saturate (d_l >= 1) are frozen dense and eps is re-solved
    over the remainder until a fixpoint. Per-layer nonzero counts are
    round-half-even of d_l * size_l, then nudged by at most one so the
    summed count equals round(global_density * total) exactly.
    """
    if not 0.0 < global_density <= 1.0:
        raise InvalidArgumentError(f"global density must be in (0, 1], got {global_density}")
    pairs = list(layer_dims)
    if pairs and not hasattr(pairs[0], "__len__"):
        pairs = layer_pairs_from_chain(pairs)
    pairs = [(int(a), int(b)) for a, b in pairs]
    if not pairs:
        raise InvalidArgumentError("layer_dims must not be empty")
    for n_in, n_out in pairs:
        if n_in <= 0 or n_out <= 0:
            raise InvalidArgumentError(f"layer dims must be positive, got ({n_in}, {n_out})")

    sizes = [n_in * n_out for n_in, n_out in pairs]
    ratios = [(n_in + n_out) / (n_in * n_out) for n_in, n_out in pairs]
    total = sum(sizes)
    target_mass = global_density * total

    saturated = [False] * len(pairs)
    densities = [0.0] * len(pairs)
    while True:
        remaining_mass = target_mass - sum(s for s, sat in zip(sizes, saturated) if sat)
        denom = sum(
            (n_in + n_out) for (n_in, n_out), sat in zip(pairs, saturated) if not sat
        )
        if denom == 0:
            break
        eps = remaining_mass / denom
        newly_saturated = False
        for i, sat in enumerate(saturated):
            if not sat and eps * ratios[i] >= 1.0:
                saturated[i] = True
                densities[i] = 1.0
                newly_saturated = True
        if newly_saturated:
            continue
        for i, sat in enumerate(saturated):
            if not sat:
                densities[i] = eps * ratios[i]
        break

    nnz = [
        size if sat else int(round(d * size))
        for d, size, sat in zip(densities, sizes, saturated)
    ]

    # Per-layer rounding may drift the total by up to L/2; redistribute
    # +-1 at a time (largest layers first) so the realized global density
    # is within 1/total of the request.
    drift = int(round(target_mass)) - sum(nnz)
    order = sorted(range(len(pairs)), key=lambda i: -sizes[i])
    step = 1 if drift > 0 else -1
    while drift != 0:
        for i in order:
            if 0 <= nnz[i] + step <= sizes[i]:
                nnz[i] += step
                drift -= step
                break
        else:
            break

    return SparsityPlan(
        global_density=float(global_density),
        layer_dims=pairs,
        layer_densities=densities,
        layer_nnz=nnz,
        layer_sizes=sizes,
    )


def sample_pattern(n_out: int, n_in: int, nnz: int, rng: np.random.Generator) -> SparsityPattern:
    """Sample exactly ``nnz`` distinct positions uniformly over the
    n_out x n_in grid and return them CSR-sorted.

    Row occupancies are drawn from the exact multivariate hypergeometric
    marginal, then each row picks that many distinct columns; this is
    uniform over all size-nnz subsets without ever allocating the full grid.
    """
    if n_out <= 0 or n_in <= 0:
        raise InvalidArgumentError("pattern dimensions must be positive")
    grid = n_out * n_in
    if grid >= 2**31:
        raise InvalidArgumentError("pattern grid must stay below 2**31 positions")
    if not 0 <= nnz <= grid:
        raise InvalidArgumentError(f"nnz must be in [0, {grid}], got {nnz}")

    if nnz == 0:
        return SparsityPattern(
            n_out, n_in, np.zeros(n_out + 1, dtype=np.int32), np.zeros(0, dtype=np.int32),
            validate=False,
        )

    counts = rng.multivariate_hypergeometric([n_in] * n_out, nnz)
    row_ptr = np.zeros(n_out + 1, dtype=np.int64)
    np.cumsum(counts, out=row_ptr[1:])
    col_idx = np.empty(nnz, dtype=np.int32)
    for i in range(n_out):
        k = counts[i]
        if k == 0:
            continue
        cols = rng.choice(n_in, size=k, replace=False, shuffle=False)
        cols.sort()
        col_idx[row_ptr[i] : row_ptr[i + 1]] = cols
    return SparsityPattern(n_out, n_in, row_ptr.astype(np.int32), col_idx, validate=False)


def xavier_limit(n_in: int, n_out: int) -> float:
    return float(np.sqrt(6.0 / (n_in + n_out)))


def xavier_init(
    n_in: int,
    n_out: int,
    rng: np.random.Generator,
    nnz: int | None = None,
    dtype=np.float32,
) -> np.ndarray:
    """Uniform(-a, a) weights with a = sqrt(6 / (n_in + n_out)).

    The limit always uses the layer's full dimensions, also for sparse
    layers where only ``nnz`` stored values are drawn (in CSR order).
    """
    a = xavier_limit(n_in, n_out)
    size = n_out * n_in if nnz is None else nnz
    return rng.uniform(-a, a, size=size).astype(dtype)


@dataclass
class DensityReport:
    layer_densities: list[float]
    layer_nnz: list[int]
    layer_sizes: list[int]
    param_count: int
    nnz_count: int

    @property
    def global_density(self) -> float:
        return sum(self.layer_nnz) / sum(self.layer_sizes)

    @property
    def global_sparsity(self) -> float:
        return 1.0 - self.global_density

    def to_dict(self) -> dict:
        return {
            "layer_densities": self.layer_densities,
            "layer_nnz": self.layer_nnz,
            "layer_sizes": self.layer_sizes,
            "param_count": self.param_count,
            "nnz_count": self.nnz_count,
            "global_density": self.global_density,
            "global_sparsity": self.global_sparsity,
        }


def density_report(model) -> DensityReport:
    """Per-layer and global density of a compiled model.

    Dense layers report density 1. ``param_count`` counts every trainable
    parameter including biases; the global density follows the weight-only
    definition sum(nnz) / sum(n_in * n_out) over linear layers.
    """
    from .nn import DenseLinearLayer, SparseLinearLayer, BatchNormLayer

    densities, nnzs, sizes = [], [], []
    params = 0
    for layer in model.layers:
        if isinstance(layer, SparseLinearLayer):
            size = layer.n_in * layer.n_out
            densities.append(layer.weights.nnz / size)
            nnzs.append(layer.weights.nnz)
            sizes.append(size)
            params += layer.weights.nnz + layer.n_out
        elif isinstance(layer, DenseLinearLayer):
            size = layer.n_in * layer.n_out
            densities.append(1.0)
            nnzs.append(size)
            sizes.append(size)
            params += size + layer.n_out
        elif isinstance(layer, BatchNormLayer):
            params += 2 * layer.n_features
    return DensityReport(
        layer_densities=densities,
        layer_nnz=nnzs,
        layer_sizes=sizes,
        param_count=params,
        nnz_count=sum(nnzs),
    )
