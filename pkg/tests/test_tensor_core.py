"""Kernel correctness against naive oracles, CSR structure, determinism."""

import numpy as np
import pytest

import sparsemlp.tensor_core as tc
from sparsemlp import (
    CsrMatrix,
    InvalidArgumentError,
    SparsityPattern,
    csr_from_dense,
    csr_to_dense,
    sddmm,
    sparse_combine,
    spmm,
    spmm_transposed,
)

from conftest import dense_matmul_oracle, random_csr, rel_err


def diag_csr(values):
    n = len(values)
    return CsrMatrix(
        n, n, np.arange(n + 1, dtype=np.int32), np.arange(n, dtype=np.int32),
        np.asarray(values, dtype=np.float32),
    )


class TestCsrStructure:
    def test_from_dense_identity(self):
        s = csr_from_dense(np.eye(3, dtype=np.float32))
        assert s.nnz == 3
        assert s.row_ptr.tolist() == [0, 1, 2, 3]
        assert s.col_idx.tolist() == [0, 1, 2]

    def test_from_dense_zero_matrix(self):
        s = csr_from_dense(np.zeros((4, 5), dtype=np.float32))
        assert s.nnz == 0
        assert s.row_ptr.tolist() == [0] * 5

    def test_round_trip_bit_exact(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            m, k = rng.integers(1, 20, size=2)
            dense = np.where(rng.random((m, k)) < 0.7, rng.standard_normal((m, k)), 0.0)
            dense = dense.astype(np.float32)
            back = csr_to_dense(csr_from_dense(dense))
            assert np.array_equal(back, dense)

    def test_invalid_structures_rejected(self):
        with pytest.raises(InvalidArgumentError):
            CsrMatrix(2, 2, np.array([0, 1]), np.array([0]), np.array([1.0], dtype=np.float32))
        with pytest.raises(InvalidArgumentError):  # row_ptr end != nnz
            CsrMatrix(2, 2, np.array([0, 1, 3]), np.array([0]), np.array([1.0], dtype=np.float32))
        with pytest.raises(InvalidArgumentError):  # decreasing row_ptr
            CsrMatrix(2, 2, np.array([0, 2, 1]), np.array([0, 1]),
                      np.array([1.0, 2.0], dtype=np.float32))
        with pytest.raises(InvalidArgumentError):  # col out of range
            CsrMatrix(1, 2, np.array([0, 1]), np.array([2]), np.array([1.0], dtype=np.float32))
        with pytest.raises(InvalidArgumentError):  # duplicate col within a row
            CsrMatrix(1, 3, np.array([0, 2]), np.array([1, 1]),
                      np.array([1.0, 2.0], dtype=np.float32))
        with pytest.raises(InvalidArgumentError):  # non-float values
            CsrMatrix(1, 1, np.array([0, 1]), np.array([0]), np.array([1]))

    def test_structure_survives_operations(self):
        rng = np.random.default_rng(5)
        s, dense = random_csr(rng, 17, 13, 0.3)
        b = rng.standard_normal((13, 4)).astype(np.float32)
        spmm(s, b)
        spmm_transposed(s, rng.standard_normal((17, 4)).astype(np.float32))
        grad = sddmm(s.pattern, rng.standard_normal((17, 6)).astype(np.float32),
                     rng.standard_normal((13, 6)).astype(np.float32))
        sparse_combine(0.5, s, 0.5, grad)
        s.validate()
        grad.validate()


class TestSpmm:
    def test_diagonal_scaling(self):
        s = diag_csr([1.0, 2.0])
        b = np.array([[1, 2], [3, 4]], dtype=np.float32)
        assert np.array_equal(spmm(s, b), [[1, 2], [6, 8]])

    def test_empty_pattern_gives_zeros(self):
        s = SparsityPattern(2, 2, np.zeros(3, dtype=np.int32), np.zeros(0, dtype=np.int32)).zeros()
        b = np.arange(4, dtype=np.float32).reshape(2, 2)
        assert np.array_equal(spmm(s, b), np.zeros((2, 2)))

    def test_dimension_mismatch(self):
        s = diag_csr([1.0, 2.0])
        with pytest.raises(InvalidArgumentError):
            spmm(s, np.zeros((3, 2), dtype=np.float32))

    @pytest.mark.parametrize("dtype,tol", [(np.float32, 1e-5), (np.float64, 1e-12)])
    def test_matches_oracle(self, dtype, tol):
        rng = np.random.default_rng(101)
        for _ in range(25):
            m, k, n = rng.integers(1, 40, size=3)
            density = rng.choice([0.05, 0.3, 1.0])
            s, dense = random_csr(rng, m, k, density, dtype)
            b = rng.standard_normal((k, n)).astype(dtype)
            assert rel_err(spmm(s, b), dense_matmul_oracle(dense, b)) <= tol


class TestSpmmTransposed:
    def test_symmetric_diagonal(self):
        s = diag_csr([1.0, 2.0])
        b = np.array([[1, 2], [3, 4]], dtype=np.float32)
        assert np.array_equal(spmm_transposed(s, b), [[1, 2], [6, 8]])

    def test_single_nonzero_hand_expanded(self):
        # S is 1x2 with S[0,1] = 3; S.T @ [[5,7]] puts 3*row into row 1
        s = CsrMatrix(1, 2, np.array([0, 1], dtype=np.int32), np.array([1], dtype=np.int32),
                      np.array([3.0], dtype=np.float32))
        b = np.array([[5.0, 7.0]], dtype=np.float32)
        out = spmm_transposed(s, b)
        assert np.array_equal(out, [[0, 0], [15, 21]])
        assert rel_err(out, dense_matmul_oracle(csr_to_dense(s).T, b)) == 0

    def test_dimension_mismatch(self):
        s = diag_csr([1.0, 2.0])
        with pytest.raises(InvalidArgumentError):
            spmm_transposed(s, np.zeros((3, 2), dtype=np.float32))

    @pytest.mark.parametrize("dtype,tol", [(np.float32, 1e-5), (np.float64, 1e-12)])
    def test_matches_oracle(self, dtype, tol):
        rng = np.random.default_rng(202)
        for _ in range(25):
            m, k, n = rng.integers(1, 40, size=3)
            density = rng.choice([0.05, 0.3, 1.0])
            s, dense = random_csr(rng, m, k, density, dtype)
            b = rng.standard_normal((m, n)).astype(dtype)
            assert rel_err(spmm_transposed(s, b), dense_matmul_oracle(dense.T, b)) <= tol


class TestSddmm:
    def test_identity_product_on_full_pattern(self):
        pattern = csr_from_dense(np.ones((2, 2), dtype=np.float32)).pattern
        eye = np.eye(2, dtype=np.float32)
        assert np.array_equal(csr_to_dense(sddmm(pattern, eye, eye)), eye)

    def test_single_entry_hand_expanded(self):
        pattern = SparsityPattern(1, 2, np.array([0, 1], dtype=np.int32),
                                  np.array([1], dtype=np.int32))
        a = np.array([[1.0, 2.0]], dtype=np.float32)
        b = np.array([[0.0, 0.0], [3.0, 4.0]], dtype=np.float32)
        out = sddmm(pattern, a, b)
        assert out.values.tolist() == [11.0]

    def test_only_pattern_entries_matter(self):
        rng = np.random.default_rng(303)
        for _ in range(10):
            m, n, k = rng.integers(2, 24, size=3)
            pattern, _ = random_csr(rng, m, n, 0.3)
            pattern = pattern.pattern
            a = rng.standard_normal((m, k)).astype(np.float32)
            b = rng.standard_normal((n, k)).astype(np.float32)
            base = sddmm(pattern, a, b)
            # perturbing A rows that have no pattern entries must not matter
            covered_rows = np.flatnonzero(np.diff(pattern.row_ptr) > 0)
            a2 = a.copy()
            uncovered = [i for i in range(m) if i not in covered_rows]
            for i in uncovered:
                a2[i] += 100.0
            again = sddmm(pattern, a2, b)
            assert np.array_equal(base.values, again.values)

    @pytest.mark.parametrize("dtype,tol", [(np.float32, 1e-5), (np.float64, 1e-12)])
    def test_matches_masked_oracle(self, dtype, tol):
        rng = np.random.default_rng(404)
        for _ in range(25):
            m, n, k = rng.integers(1, 40, size=3)
            density = rng.choice([0.05, 0.3, 1.0])
            pattern, indicator = random_csr(rng, m, n, density, dtype)
            pattern = pattern.pattern
            a = rng.standard_normal((m, k)).astype(dtype)
            b = rng.standard_normal((n, k)).astype(dtype)
            full = dense_matmul_oracle(a, b.T)
            expected = csr_to_dense(pattern.with_values(np.ones(pattern.nnz))) * full
            assert rel_err(csr_to_dense(sddmm(pattern, a, b)), expected) <= tol

    def test_never_materializes_dense_product(self):
        # m*n would be 6.4 GB; only nnz values may be allocated
        import tracemalloc

        m = n = 40000
        rng = np.random.default_rng(7)
        rows = np.sort(rng.integers(0, m, size=500))
        row_ptr = np.zeros(m + 1, dtype=np.int64)
        np.add.at(row_ptr, rows + 1, 1)
        np.cumsum(row_ptr, out=row_ptr)
        cols = rng.integers(0, n, size=500).astype(np.int32)
        for i in range(m):  # make cols strictly increasing inside rows
            lo, hi = row_ptr[i], row_ptr[i + 1]
            if hi > lo:
                cols[lo:hi] = np.sort(rng.choice(n, size=hi - lo, replace=False))
        pattern = SparsityPattern(m, n, row_ptr.astype(np.int32), cols)
        a = rng.standard_normal((m, 4)).astype(np.float32)
        b = rng.standard_normal((n, 4)).astype(np.float32)
        tracemalloc.start()
        sddmm(pattern, a, b)
        _, peak = tracemalloc.get_traced_memory()
        tracemalloc.stop()
        assert peak < 50e6  # far below the 6.4e9 dense product

    def test_dimension_mismatch(self):
        pattern = csr_from_dense(np.ones((2, 3), dtype=np.float32)).pattern
        with pytest.raises(InvalidArgumentError):
            sddmm(pattern, np.zeros((2, 4), dtype=np.float32), np.zeros((3, 5), dtype=np.float32))
        with pytest.raises(InvalidArgumentError):
            sddmm(pattern, np.zeros((1, 4), dtype=np.float32), np.zeros((3, 4), dtype=np.float32))


class TestSparseCombine:
    def test_identity_and_copy(self):
        s = diag_csr([1.0, 2.0])
        t = diag_csr([3.0, 5.0])
        sparse_combine(1.0, s, 0.0, t)
        assert s.values.tolist() == [1.0, 2.0]
        sparse_combine(0.0, s, 1.0, t)
        assert s.values.tolist() == [3.0, 5.0]

    def test_momentum_style_blend(self):
        s = diag_csr([1.0, 2.0])
        t = diag_csr([3.0, 5.0])
        sparse_combine(0.9, s, 0.1, t)
        assert np.allclose(s.values, [1.2, 2.3], rtol=1e-6)

    def test_structure_mismatch_raises(self):
        s = diag_csr([1.0, 2.0])
        t = csr_from_dense(np.array([[1.0, 1.0], [0.0, 1.0]], dtype=np.float32))
        with pytest.raises(InvalidArgumentError):
            sparse_combine(1.0, s, 1.0, t)

    def test_composed_coefficients_linear(self):
        rng = np.random.default_rng(55)
        for _ in range(20):
            base, dense = random_csr(rng, 9, 7, 0.4, np.float64)
            other = base.pattern.with_values(rng.standard_normal(base.nnz))
            a, b, c, d = rng.uniform(-2, 2, size=4)
            s = base.copy()
            sparse_combine(a, s, b, other)
            sparse_combine(c, s, d, other)
            expected = c * (a * base.values + b * other.values) + d * other.values
            assert rel_err(s.values, expected) <= 1e-12


class TestDeterminism:
    def test_bit_identical_across_thread_counts(self):
        import sparsemlp as sm

        rng = np.random.default_rng(99)
        s, dense = random_csr(rng, 200, 150, 0.1)
        b1 = rng.standard_normal((150, 33)).astype(np.float32)
        b2 = rng.standard_normal((200, 33)).astype(np.float32)
        a = rng.standard_normal((200, 17)).astype(np.float32)
        c = rng.standard_normal((150, 17)).astype(np.float32)
        results = {}
        old = sm.get_num_threads()
        try:
            for threads in (1, 2, min(4, sm.max_num_threads())):
                sm.set_num_threads(threads)
                comb = s.copy()
                sparse_combine(0.9, comb, -0.1, s)
                results[threads] = (
                    spmm(s, b1).tobytes(),
                    spmm_transposed(s, b2).tobytes(),
                    sddmm(s.pattern, a, c).values.tobytes(),
                    comb.values.tobytes(),
                )
        finally:
            sm.set_num_threads(old)
        baseline = results.pop(1)
        for got in results.values():
            assert got == baseline

    def test_repeat_call_bit_identical(self):
        rng = np.random.default_rng(100)
        s, _ = random_csr(rng, 60, 45, 0.2)
        b = rng.standard_normal((45, 8)).astype(np.float32)
        assert spmm(s, b).tobytes() == spmm(s, b).tobytes()


class TestDenseHelpers:
    def test_identity_matmul(self):
        b = np.arange(6, dtype=np.float32).reshape(2, 3)
        assert np.array_equal(tc.dense_matmul(np.eye(2, dtype=np.float32), b), b)

    def test_transpose_flags(self):
        rng = np.random.default_rng(3)
        a = rng.standard_normal((4, 3))
        b = rng.standard_normal((4, 5))
        c = rng.standard_normal((3, 5))
        assert np.allclose(tc.dense_matmul(a, b, transpose_a=True), a.T @ b)
        assert np.allclose(tc.dense_matmul(b, c, transpose_b=True), b @ c.T)

    def test_row_sums(self):
        assert tc.row_sums(np.array([[1.0, 2.0], [3.0, 4.0]])).tolist() == [3.0, 7.0]

    def test_add_bias_broadcast(self):
        y = tc.add_bias(np.zeros((2, 3)), np.array([1.0, 2.0]))
        assert np.array_equal(y, [[1, 1, 1], [2, 2, 2]])
        with pytest.raises(InvalidArgumentError):
            tc.add_bias(np.zeros((2, 3)), np.array([1.0, 2.0, 3.0]))

    def test_matches_oracle(self):
        rng = np.random.default_rng(31)
        for _ in range(5):
            m, k, n = rng.integers(1, 16, size=3)
            a = rng.standard_normal((m, k))
            b = rng.standard_normal((k, n))
            assert rel_err(tc.dense_matmul(a, b), dense_matmul_oracle(a, b)) <= 1e-12

    def test_finite_outputs(self):
        rng = np.random.default_rng(8)
        s, _ = random_csr(rng, 30, 20, 0.3)
        b = rng.standard_normal((20, 7)).astype(np.float32)
        assert np.all(np.isfinite(spmm(s, b)))
