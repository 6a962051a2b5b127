"""The four kernels everything else is built from.

Weights live in compressed sparse row (CSR) form: row pointers, column
indices, and one value per stored position. Training an MLP on such
weights needs exactly four sparse operations; this script walks through
each and checks it against a plain dense computation.
"""

import numpy as np

from sparsemlp import (
    csr_from_dense,
    csr_to_dense,
    sddmm,
    sparse_combine,
    spmm,
    spmm_transposed,
)

rng = np.random.default_rng(0)

# A small sparse matrix and a dense batch (columns are examples).
dense_w = np.where(rng.random((6, 8)) < 0.3, rng.standard_normal((6, 8)), 0.0)
w = csr_from_dense(dense_w.astype(np.float32))
x = rng.standard_normal((8, 4)).astype(np.float32)
print(f"W: {w}    X: {x.shape[0]}x{x.shape[1]} dense")

# 1. spmm: the forward pass Y = W @ X.
y = spmm(w, x)
print("\n1. spmm (feedforward)            max |err| =",
      np.max(np.abs(y - csr_to_dense(w) @ x)))

# 2. spmm_transposed: the input gradient dX = W.T @ dY, computed without
#    ever materializing W.T.
dy = rng.standard_normal((6, 4)).astype(np.float32)
dx = spmm_transposed(w, dy)
print("2. spmm_transposed (backprop)    max |err| =",
      np.max(np.abs(dx - csr_to_dense(w).T @ dy)))

# 3. sddmm: the weight gradient dW = dY @ X.T, evaluated only at W's
#    stored positions. The full dense product never exists in memory,
#    which is the whole point: at 1% density that is 100x less work.
grad = sddmm(w.pattern, dy, x)
dense_grad = (dy @ x.T) * (csr_to_dense(w) != 0)
print("3. sddmm (weight gradient)       max |err| =",
      np.max(np.abs(csr_to_dense(grad) - dense_grad)))

# 4. sparse_combine: S = alpha*S + beta*T on the raw value arrays of two
#    matrices with identical structure. This is the momentum update; no
#    general sparse-plus-sparse machinery, just an axpy over values.
velocity = w.pattern.zeros()
sparse_combine(0.9, velocity, 1.0, grad)          # v = 0.9 v + g
sparse_combine(1.0, w, -0.1, velocity)            # w = w - 0.1 v
print("4. sparse_combine (momentum)     values updated in place, structure shared:",
      velocity.row_ptr is w.row_ptr)

print("\nDeterminism: every kernel accumulates each output element in a fixed")
print("order, so results are bit-identical for any thread count:")
import sparsemlp

sparsemlp.set_num_threads(1)
a = spmm(w, x).tobytes()
sparsemlp.set_num_threads(min(4, sparsemlp.max_num_threads()))
b = spmm(w, x).tobytes()
print("  spmm with 1 thread == spmm with 4 threads:", a == b)
