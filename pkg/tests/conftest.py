"""Shared fixtures and independent oracles.

The matmul oracles are deliberately naive pure-Python triple loops over
float64 lists: they share no code path with the kernels they check.
"""

import numpy as np
import pytest

from sparsemlp import csr_from_dense, warmup_kernels


@pytest.fixture(scope="session", autouse=True)
def _compiled_kernels():
    # pay the JIT cost once, up front
    warmup_kernels((np.float32, np.float64))


def dense_matmul_oracle(a, b):
    """Triple-loop A @ B in float64."""
    m, k = a.shape
    k2, n = b.shape
    assert k == k2
    al = np.asarray(a, dtype=np.float64).tolist()
    bl = np.asarray(b, dtype=np.float64).tolist()
    out = [[0.0] * n for _ in range(m)]
    for i in range(m):
        row_a = al[i]
        row_o = out[i]
        for t in range(k):
            v = row_a[t]
            if v != 0.0:
                row_b = bl[t]
                for j in range(n):
                    row_o[j] += v * row_b[j]
    return np.array(out, dtype=np.float64).reshape(m, n)


def random_csr(rng, m, k, density, dtype=np.float32):
    """Random CSR plus its exact dense counterpart."""
    mask = rng.random((m, k)) < density
    dense = np.where(mask, rng.standard_normal((m, k)), 0.0).astype(dtype)
    return csr_from_dense(dense), dense


def rel_err(actual, expected):
    """Max elementwise |actual - expected| / max(1, |expected|)."""
    actual = np.asarray(actual, dtype=np.float64)
    expected = np.asarray(expected, dtype=np.float64)
    denom = np.maximum(1.0, np.abs(expected))
    if actual.size == 0:
        return 0.0
    return float(np.max(np.abs(actual - expected) / denom))
