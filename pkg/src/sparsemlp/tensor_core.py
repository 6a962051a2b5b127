"""CSR matrix type, sparsity patterns, and the four core sparse kernels.

Dense matrices are plain C-contiguous 2-D numpy arrays (row-major, so
element (i, j) sits at flat index i*cols + j). Sparse matrices are
``CsrMatrix``: row pointers, column indices, and a value array over a fixed
nonzero structure. The four kernels this library is built around:

    spmm              Y = S @ B          (feedforward)
    spmm_transposed   Y = S.T @ B        (input gradients)
    sddmm             S = (A @ B.T) | P  (weight gradients, pattern-only)
    sparse_combine    S = a*S + b*T      (optimizer updates on raw values)

All kernels are deterministic: accumulation order per output element is
fixed (ascending source index) and independent of the configured thread
count.
"""

from __future__ import annotations

import numpy as np

from . import _kernels
from .errors import InvalidArgumentError

_INDEX_DTYPE = np.int32
_INDEX_LIMIT = 2**31

__all__ = [
    "CsrMatrix",
    "SparsityPattern",
    "spmm",
    "spmm_transposed",
    "sddmm",
    "sparse_combine",
    "csr_from_dense",
    "csr_to_dense",
    "dense_matmul",
    "row_sums",
    "add_bias",
    "hadamard",
    "set_num_threads",
    "get_num_threads",
    "max_num_threads",
    "warmup_kernels",
]


def set_num_threads(n: int) -> None:
    """Set the kernel thread count (results do not depend on it)."""
    import numba

    if not 1 <= n <= numba.config.NUMBA_NUM_THREADS:
        raise InvalidArgumentError(
            f"thread count must be in [1, {numba.config.NUMBA_NUM_THREADS}], got {n}"
        )
    numba.set_num_threads(n)


def get_num_threads() -> int:
    import numba

    return numba.get_num_threads()


def max_num_threads() -> int:
    import numba

    return numba.config.NUMBA_NUM_THREADS


def _check_index_range(nrows, ncols, nnz):
    if nrows < 0 or ncols < 0:
        raise InvalidArgumentError("matrix dimensions must be non-negative")
    if nrows >= _INDEX_LIMIT or ncols >= _INDEX_LIMIT or nnz >= _INDEX_LIMIT:
        raise InvalidArgumentError("dimensions and nnz must stay below 2**31 (32-bit indices)")


def _validate_structure(nrows, ncols, row_ptr, col_idx):
    nnz = len(col_idx)
    _check_index_range(nrows, ncols, nnz)
    if row_ptr.shape != (nrows + 1,):
        raise InvalidArgumentError(f"row_ptr must have length nrows+1={nrows + 1}")
    if row_ptr[0] != 0 or row_ptr[-1] != nnz:
        raise InvalidArgumentError("row_ptr must start at 0 and end at nnz")
    if np.any(np.diff(row_ptr) < 0):
        raise InvalidArgumentError("row_ptr must be non-decreasing")
    if nnz:
        if col_idx.min() < 0 or col_idx.max() >= ncols:
            raise InvalidArgumentError("column indices out of range")
        # strictly increasing inside each row <=> increasing except at row starts
        decreasing = np.flatnonzero(np.diff(col_idx.astype(np.int64)) <= 0) + 1
        row_starts = row_ptr[1:-1]
        if not np.all(np.isin(decreasing, row_starts)):
            raise InvalidArgumentError("column indices must be strictly increasing within each row")


class SparsityPattern:
    """The fixed nonzero structure shared by a weight matrix, its gradient,
    and its momentum buffer: a CSR matrix with the values left off."""

    __slots__ = ("nrows", "ncols", "row_ptr", "col_idx")

    def __init__(self, nrows, ncols, row_ptr, col_idx, validate: bool = True):
        self.nrows = int(nrows)
        self.ncols = int(ncols)
        self.row_ptr = np.ascontiguousarray(row_ptr, dtype=_INDEX_DTYPE)
        self.col_idx = np.ascontiguousarray(col_idx, dtype=_INDEX_DTYPE)
        if validate:
            _validate_structure(self.nrows, self.ncols, self.row_ptr, self.col_idx)

    @property
    def nnz(self) -> int:
        return len(self.col_idx)

    @property
    def shape(self):
        return (self.nrows, self.ncols)

    def validate(self) -> None:
        _validate_structure(self.nrows, self.ncols, self.row_ptr, self.col_idx)

    def row_indices(self) -> np.ndarray:
        """Expanded per-nonzero row index (for scatter/densify helpers)."""
        return np.repeat(
            np.arange(self.nrows, dtype=_INDEX_DTYPE), np.diff(self.row_ptr)
        )

    def with_values(self, values: np.ndarray) -> "CsrMatrix":
        """Build a CsrMatrix sharing this pattern's index arrays."""
        return CsrMatrix(self.nrows, self.ncols, self.row_ptr, self.col_idx, values, validate=False)

    def zeros(self, dtype=np.float32) -> "CsrMatrix":
        return self.with_values(np.zeros(self.nnz, dtype=dtype))

    def dense_mask(self, dtype=np.float32) -> np.ndarray:
        """0/1 dense indicator of the pattern (masked-dense backend)."""
        mask = np.zeros((self.nrows, self.ncols), dtype=dtype)
        mask[self.row_indices(), self.col_idx] = 1
        return mask

    def __eq__(self, other):
        if not isinstance(other, SparsityPattern):
            return NotImplemented
        return (
            self.nrows == other.nrows
            and self.ncols == other.ncols
            and np.array_equal(self.row_ptr, other.row_ptr)
            and np.array_equal(self.col_idx, other.col_idx)
        )

    def __repr__(self):
        return f"SparsityPattern({self.nrows}x{self.ncols}, nnz={self.nnz})"


class CsrMatrix:
    """Compressed sparse row matrix with float32 or float64 values.

    Zero-valued stored entries are kept: the pattern is fixed capacity.
    Index arrays may be shared between matrices with equal structure.
    """

    __slots__ = ("nrows", "ncols", "row_ptr", "col_idx", "values")

    def __init__(self, nrows, ncols, row_ptr, col_idx, values, validate: bool = True):
        self.nrows = int(nrows)
        self.ncols = int(ncols)
        self.row_ptr = np.ascontiguousarray(row_ptr, dtype=_INDEX_DTYPE)
        self.col_idx = np.ascontiguousarray(col_idx, dtype=_INDEX_DTYPE)
        values = np.ascontiguousarray(values)
        if values.dtype not in (np.float32, np.float64):
            raise InvalidArgumentError(f"values must be float32 or float64, got {values.dtype}")
        self.values = values
        if validate:
            self.validate()

    @property
    def nnz(self) -> int:
        return len(self.col_idx)

    @property
    def shape(self):
        return (self.nrows, self.ncols)

    @property
    def dtype(self):
        return self.values.dtype

    @property
    def pattern(self) -> SparsityPattern:
        return SparsityPattern(self.nrows, self.ncols, self.row_ptr, self.col_idx, validate=False)

    def validate(self) -> None:
        _validate_structure(self.nrows, self.ncols, self.row_ptr, self.col_idx)
        if self.values.shape != self.col_idx.shape:
            raise InvalidArgumentError("values and col_idx must have equal length")

    def copy(self) -> "CsrMatrix":
        # index arrays are immutable by convention and stay shared
        return CsrMatrix(
            self.nrows, self.ncols, self.row_ptr, self.col_idx, self.values.copy(), validate=False
        )

    def same_structure(self, other: "CsrMatrix") -> bool:
        if self.nrows != other.nrows or self.ncols != other.ncols:
            return False
        if self.row_ptr is other.row_ptr and self.col_idx is other.col_idx:
            return True
        return np.array_equal(self.row_ptr, other.row_ptr) and np.array_equal(
            self.col_idx, other.col_idx
        )

    def to_dense(self) -> np.ndarray:
        return csr_to_dense(self)

    def __repr__(self):
        return f"CsrMatrix({self.nrows}x{self.ncols}, nnz={self.nnz}, dtype={self.values.dtype})"


def _check_dense(name, arr, dtype):
    if not isinstance(arr, np.ndarray) or arr.ndim != 2:
        raise InvalidArgumentError(f"{name} must be a 2-D ndarray")
    if arr.dtype != dtype:
        raise InvalidArgumentError(f"{name} must have dtype {dtype}, got {arr.dtype}")
    return np.ascontiguousarray(arr)


def spmm(s: CsrMatrix, dense: np.ndarray) -> np.ndarray:
    """Sparse-times-dense product S @ B -> (s.nrows, B.cols).

    Rows of S without nonzeros yield zero output rows.
    """
    dense = _check_dense("dense operand", dense, s.dtype)
    if s.ncols != dense.shape[0]:
        raise InvalidArgumentError(
            f"dimension mismatch: S is {s.nrows}x{s.ncols}, B has {dense.shape[0]} rows"
        )
    out = np.zeros((s.nrows, dense.shape[1]), dtype=s.dtype)
    if s.nnz and dense.shape[1]:
        _kernels.spmm_kernel(s.row_ptr, s.col_idx, s.values, dense, out)
    return out


def spmm_transposed(s: CsrMatrix, dense: np.ndarray) -> np.ndarray:
    """Transposed sparse-times-dense product S.T @ B -> (s.ncols, B.cols),
    computed without materializing S.T."""
    dense = _check_dense("dense operand", dense, s.dtype)
    if s.nrows != dense.shape[0]:
        raise InvalidArgumentError(
            f"dimension mismatch: S is {s.nrows}x{s.ncols}, B has {dense.shape[0]} rows"
        )
    out = np.zeros((s.ncols, dense.shape[1]), dtype=s.dtype)
    if s.nnz and dense.shape[1]:
        nblocks = max(1, min(get_num_threads(), s.ncols))
        _kernels.spmm_t_kernel(s.row_ptr, s.col_idx, s.values, dense, out, nblocks)
    return out


def sddmm(
    pattern: SparsityPattern, a: np.ndarray, b: np.ndarray, out: CsrMatrix | None = None
) -> CsrMatrix:
    """Sampled dense-dense product: (A @ B.T) evaluated only on the pattern.

    value(i, j) = dot(A[i, :], B[j, :]) for each stored (i, j). The full
    dense product is never formed; working memory is O(nnz + inputs).
    When ``out`` is given its value array is overwritten in place.
    """
    if a.dtype != b.dtype:
        raise InvalidArgumentError("A and B must share a dtype")
    a = _check_dense("A", a, a.dtype)
    b = _check_dense("B", b, a.dtype)
    if a.shape[0] != pattern.nrows or b.shape[0] != pattern.ncols:
        raise InvalidArgumentError(
            f"dimension mismatch: pattern is {pattern.nrows}x{pattern.ncols}, "
            f"A has {a.shape[0]} rows, B has {b.shape[0]} rows"
        )
    if a.shape[1] != b.shape[1]:
        raise InvalidArgumentError("A and B must have the same number of columns")
    if out is None:
        out = pattern.zeros(dtype=a.dtype)
    else:
        if out.dtype != a.dtype or out.nnz != pattern.nnz:
            raise InvalidArgumentError("out matrix does not match pattern/dtype")
    if pattern.nnz:
        if a.shape[1] == 0:
            out.values[:] = 0
        else:
            _kernels.sddmm_kernel(pattern.row_ptr, pattern.col_idx, a, b, out.values)
    return out


def sparse_combine(
    alpha: float, s: CsrMatrix, beta: float, t: CsrMatrix, checked: bool = True
) -> CsrMatrix:
    """In-place S = alpha*S + beta*T for structurally identical matrices.

    Operates directly on the raw value arrays; set ``checked=False`` to skip
    the structure-equality check on hot paths where it is guaranteed.
    """
    if s.dtype != t.dtype:
        raise InvalidArgumentError("S and T must share a dtype")
    if checked and not s.same_structure(t):
        raise InvalidArgumentError("S and T must have identical sparsity structure")
    if s.nnz:
        scalar = s.dtype.type
        _kernels.axpby_kernel(scalar(alpha), s.values, scalar(beta), t.values)
    return s


def csr_from_dense(dense: np.ndarray, dtype=None) -> CsrMatrix:
    """Compress a dense matrix, dropping exact zeros."""
    if not isinstance(dense, np.ndarray) or dense.ndim != 2:
        raise InvalidArgumentError("expected a 2-D ndarray")
    if dtype is None:
        dtype = dense.dtype if dense.dtype in (np.float32, np.float64) else np.float32
    dense = np.ascontiguousarray(dense, dtype=dtype)
    nrows, ncols = dense.shape
    _check_index_range(nrows, ncols, 0)
    rows, cols = np.nonzero(dense)
    row_ptr = np.zeros(nrows + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=nrows), out=row_ptr[1:])
    return CsrMatrix(
        nrows,
        ncols,
        row_ptr.astype(_INDEX_DTYPE),
        cols.astype(_INDEX_DTYPE),
        dense[rows, cols],
        validate=False,
    )


def csr_to_dense(s: CsrMatrix) -> np.ndarray:
    out = np.zeros((s.nrows, s.ncols), dtype=s.dtype)
    if s.nnz:
        out[s.pattern.row_indices(), s.col_idx] = s.values
    return out


def dense_matmul(
    a: np.ndarray, b: np.ndarray, transpose_a: bool = False, transpose_b: bool = False
) -> np.ndarray:
    """Dense matrix product with optional transposes (BLAS-backed)."""
    if a.ndim != 2 or b.ndim != 2:
        raise InvalidArgumentError("operands must be 2-D")
    left = a.T if transpose_a else a
    right = b.T if transpose_b else b
    if left.shape[1] != right.shape[0]:
        raise InvalidArgumentError(
            f"dimension mismatch: {left.shape} @ {right.shape}"
        )
    return left @ right


def row_sums(dense: np.ndarray) -> np.ndarray:
    if dense.ndim != 2:
        raise InvalidArgumentError("expected a 2-D ndarray")
    return dense.sum(axis=1)


def add_bias(dense: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Add a length-m bias vector to every column of an m x n matrix."""
    if dense.ndim != 2 or bias.ndim != 1 or bias.shape[0] != dense.shape[0]:
        raise InvalidArgumentError(
            f"bias of length {bias.shape} does not broadcast over {dense.shape}"
        )
    return dense + bias[:, None]


def hadamard(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape != b.shape:
        raise InvalidArgumentError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a * b


def warmup_kernels(dtypes=(np.float32,)) -> None:
    """Trigger JIT compilation of every kernel so timed runs exclude it."""
    for dtype in dtypes:
        s = csr_from_dense(np.array([[1.0, 0.0], [0.5, 2.0]], dtype=dtype))
        d = np.ones((2, 2), dtype=dtype)
        spmm(s, d)
        spmm_transposed(s, d)
        sddmm(s.pattern, d, d)
        sparse_combine(1.0, s, 0.0, s.copy())
