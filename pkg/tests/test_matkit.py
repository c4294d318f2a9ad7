import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from holobeam.matkit import (
    NotPositiveDefinite,
    NotPsd,
    complex_to_real_form,
    gram,
    hpd_inv,
    hpd_solve,
    is_psd,
    kron,
    logdet_eig,
    logdet_hpd,
    psd_sqrt,
    unvec,
    vec,
)


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


seeds = st.integers(0, 2**32 - 1)
dims = st.integers(1, 5)


class TestGram:
    def test_identity(self):
        np.testing.assert_array_equal(gram(np.eye(2)), np.eye(2))

    def test_row_vector(self):
        np.testing.assert_allclose(gram(np.array([[1, 1j]])), [[2.0]])

    def test_random_psd_and_trace(self, rng):
        X = crandn(rng, 3, 2)
        G = gram(X)
        assert np.linalg.eigvalsh(G).min() >= -1e-12
        assert np.trace(G).real == pytest.approx(np.linalg.norm(X) ** 2, rel=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(seeds, dims, dims)
    def test_always_hermitian_psd(self, seed, r, c):
        G = gram(crandn(np.random.default_rng(seed), r, c))
        np.testing.assert_allclose(G, G.conj().T, atol=1e-12)
        w = np.linalg.eigvalsh(G)
        assert w.min() >= -1e-10 * max(1.0, w.max())


class TestLogdet:
    def test_identity(self):
        assert logdet_hpd(np.eye(3)) == 0.0

    def test_diag(self):
        assert logdet_hpd(np.diag([np.e, np.e**2])) == pytest.approx(3.0, abs=1e-14)

    def test_eigenvalue_oracle(self, rng):
        A = gram(crandn(rng, 4, 4)) + np.eye(4)
        assert logdet_hpd(A) == pytest.approx(np.sum(np.log(np.linalg.eigvalsh(A))), abs=1e-10)

    def test_not_positive_definite(self):
        with pytest.raises(NotPositiveDefinite):
            logdet_hpd(np.diag([1.0, -1.0]))
        with pytest.raises(NotPositiveDefinite):
            logdet_hpd(np.zeros((2, 2)))

    @settings(max_examples=50, deadline=None)
    @given(seeds, dims)
    def test_factorization_matches_eigenvalues(self, seed, n):
        A = gram(crandn(np.random.default_rng(seed), n, n)) + np.eye(n)
        assert logdet_hpd(A) == pytest.approx(logdet_eig(A), abs=1e-9)

    @settings(max_examples=50, deadline=None)
    @given(seeds, dims)
    def test_determinant_identity(self, seed, n):
        # ln|I + A B^{-1}| = ln|B + A| - ln|B|
        rng = np.random.default_rng(seed)
        A = gram(crandn(rng, n, 2))
        B = gram(crandn(rng, n, n)) + 0.5 * np.eye(n)
        lhs = np.sum(np.log(np.abs(np.linalg.eigvals(np.eye(n) + A @ np.linalg.inv(B)))))
        assert lhs == pytest.approx(logdet_hpd(B + A) - logdet_hpd(B), abs=1e-9)


class TestPsdSqrt:
    def test_identity(self):
        np.testing.assert_allclose(psd_sqrt(np.eye(3)), np.eye(3))

    def test_diag(self):
        np.testing.assert_allclose(psd_sqrt(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]), atol=1e-14)

    def test_reconstruction(self, rng):
        A = gram(crandn(rng, 5, 3))  # rank deficient
        S = psd_sqrt(A)
        assert np.max(np.abs(S @ S - A)) < 1e-10
        assert is_psd(S)

    def test_rejects_indefinite(self):
        with pytest.raises(NotPsd):
            psd_sqrt(np.diag([1.0, -0.5]))

    def test_tolerates_roundoff_negative(self):
        S = psd_sqrt(np.diag([1.0, -1e-14]))
        np.testing.assert_allclose(S, np.diag([1.0, 0.0]), atol=1e-12)


class TestKronVec:
    def test_identity_kron_is_block_diag(self, rng):
        A = crandn(rng, 2, 2)
        K = kron(np.eye(2), A)
        np.testing.assert_array_equal(K[:2, :2], A)
        np.testing.assert_array_equal(K[2:, 2:], A)
        np.testing.assert_array_equal(K[:2, 2:], 0)

    def test_scalars(self):
        assert kron(np.array([[3.0]]), np.array([[-2.0]]))[0, 0] == -6.0

    def test_vec_column_major(self):
        np.testing.assert_array_equal(vec(np.array([[1, 3], [2, 4]])), [1, 2, 3, 4])
        assert vec(np.array([[7.5]]))[0] == 7.5

    @settings(max_examples=50, deadline=None)
    @given(seeds, dims, dims, dims, dims)
    def test_vec_kron_identity(self, seed, a, b, c, d):
        rng = np.random.default_rng(seed)
        A, X, B = crandn(rng, a, b), crandn(rng, b, c), crandn(rng, c, d)
        err = np.max(np.abs(vec(A @ X @ B) - kron(B.T, A) @ vec(X)))
        assert err < 1e-12 * max(1.0, np.abs(A).max() * np.abs(X).max() * np.abs(B).max() * b * c)

    @settings(max_examples=50, deadline=None)
    @given(seeds, dims, dims)
    def test_roundtrip(self, seed, r, c):
        X = crandn(np.random.default_rng(seed), r, c)
        np.testing.assert_array_equal(unvec(vec(X), X.shape), X)


class TestSolves:
    def test_hpd_solve_matches_dense(self, rng):
        A = gram(crandn(rng, 4, 4)) + np.eye(4)
        B = crandn(rng, 4, 2)
        np.testing.assert_allclose(A @ hpd_solve(A, B), B, atol=1e-10)
        np.testing.assert_allclose(hpd_inv(A) @ A, np.eye(4), atol=1e-10)

    def test_jitter_rescues_singular_psd(self):
        A = np.diag([1.0, 0.0])
        x = hpd_solve(A, np.array([1.0, 0.0]))
        assert np.all(np.isfinite(x))
        assert x[0] == pytest.approx(1.0, rel=1e-6)

    def test_real_form_preserves_quadratic(self, rng):
        C = gram(crandn(rng, 3, 3))
        w = crandn(rng, 3)
        z = np.concatenate([w.real, w.imag])
        assert z @ complex_to_real_form(C) @ z == pytest.approx(np.real(w.conj() @ C @ w), rel=1e-12)
