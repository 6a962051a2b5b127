"""Compiled CSR kernels.

Every kernel accumulates each output element in a fixed order (ascending
source index), and each output element is written by exactly one parallel
task. Results are therefore bit-identical for any thread count. fastmath
stays off: LLVM must not reassociate float additions.
"""

import os

# Raise the numba thread cap before the first numba import so thread-count
# experiments (1..4) work even on single-core machines, and pin the
# threading layer to the always-available one (no TBB/OMP probing).
# Both are no-ops if the user already set them.
os.environ.setdefault("NUMBA_NUM_THREADS", str(max(8, os.cpu_count() or 1)))
os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

import numba
from numba import njit, prange

# default to real hardware parallelism; the cap above only sets the maximum
numba.set_num_threads(max(1, min(os.cpu_count() or 1, numba.config.NUMBA_NUM_THREADS)))


@njit(parallel=True, cache=True)
def spmm_kernel(row_ptr, col_idx, values, dense, out):
    # out[i, :] = sum over nonzeros (i, c): values * dense[c, :].
    # One task owns one output row; accumulation runs in ascending nonzero
    # index, vectorized only across the independent j axis.
    m = row_ptr.shape[0] - 1
    n = dense.shape[1]
    for i in prange(m):
        for p in range(row_ptr[i], row_ptr[i + 1]):
            c = col_idx[p]
            v = values[p]
            for j in range(n):
                out[i, j] += v * dense[c, j]


@njit(parallel=True, cache=True)
def spmm_t_kernel(row_ptr, col_idx, values, dense, out, nblocks):
    # out[c, :] = sum over nonzeros (i, c): values * dense[i, :], without
    # materializing the transpose. Each block owns a contiguous range of
    # output rows and scans the whole matrix in row order, so every output
    # element accumulates in ascending source-row order regardless of
    # nblocks or thread count.
    m = row_ptr.shape[0] - 1
    k = out.shape[0]
    n = dense.shape[1]
    for blk in prange(nblocks):
        lo = blk * k // nblocks
        hi = (blk + 1) * k // nblocks
        for i in range(m):
            for p in range(row_ptr[i], row_ptr[i + 1]):
                c = col_idx[p]
                if lo <= c < hi:
                    v = values[p]
                    for j in range(n):
                        out[c, j] += v * dense[i, j]


@njit(parallel=True, cache=True)
def sddmm_kernel(row_ptr, col_idx, a, b, out_values):
    # out_values[p] = dot(a[i, :], b[j, :]) for the p-th nonzero (i, j).
    # Never touches positions outside the pattern; O(1) extra memory per
    # entry. Caller guarantees a.shape[1] >= 1.
    m = row_ptr.shape[0] - 1
    kk = a.shape[1]
    for i in prange(m):
        for p in range(row_ptr[i], row_ptr[i + 1]):
            j = col_idx[p]
            acc = a[i, 0] * b[j, 0]
            for t in range(1, kk):
                acc += a[i, t] * b[j, t]
            out_values[p] = acc


@njit(parallel=True, cache=True)
def axpby_kernel(alpha, s_values, beta, t_values):
    # s = alpha * s + beta * t on raw value arrays of structurally equal
    # matrices. alpha/beta arrive pre-cast to the value dtype.
    for p in prange(s_values.shape[0]):
        s_values[p] = alpha * s_values[p] + beta * t_values[p]
