"""Dense symmetric matrix kernels: decompositions, PSD square root, nuclear norm."""

import numpy as np
import pytest

from covsteer import (
    InvalidInputError,
    NotPositiveDefiniteError,
    NotPsdError,
    eig_sym,
    logdet_pd,
    nuclear_norm,
    nuclear_norm_subgradient,
    sqrtm_psd,
    svd,
    symmetrize,
)


def test_symmetrize_and_shape_check():
    m = np.array([[1.0, 2.0], [0.0, 3.0]])
    np.testing.assert_allclose(symmetrize(m), [[1.0, 1.0], [1.0, 3.0]])
    with pytest.raises(InvalidInputError):
        symmetrize(np.ones((2, 3)))


def test_eig_sym_reconstructs_and_sorts():
    rng = np.random.default_rng(7)
    for _ in range(25):
        n = int(rng.integers(1, 7))
        m = symmetrize(rng.normal(size=(n, n)))
        values, vectors = eig_sym(m)
        assert np.all(np.diff(values) <= 1e-12)
        np.testing.assert_allclose((vectors * values) @ vectors.T, m, atol=1e-12)
        np.testing.assert_allclose(vectors.T @ vectors, np.eye(n), atol=1e-12)


def test_svd_thin_reconstruction():
    rng = np.random.default_rng(8)
    for _ in range(20):
        a = rng.normal(size=(int(rng.integers(1, 6)), int(rng.integers(1, 6))))
        u, s, v = svd(a)
        assert np.all(np.diff(s) <= 0)
        np.testing.assert_allclose(u @ np.diag(s) @ v.T, a, atol=1e-12)


def test_sqrtm_psd_known_diagonal():
    root = sqrtm_psd(np.diag([4.0, 9.0]))
    np.testing.assert_allclose(root, np.diag([2.0, 3.0]), atol=1e-12)


def test_sqrtm_psd_squares_back():
    rng = np.random.default_rng(9)
    for _ in range(30):
        n = int(rng.integers(1, 6))
        f = rng.normal(size=(n, n))
        m = f @ f.T
        root = sqrtm_psd(m)
        np.testing.assert_allclose(root @ root, m, atol=1e-9 * max(1.0, np.abs(m).max()))
        np.testing.assert_allclose(root, root.T, atol=1e-12)


def test_sqrtm_psd_clamps_noise_but_rejects_indefinite():
    # eigenvalue at -1e-14 is factorization noise, -0.5 is a real violation
    near = np.diag([1.0, -1e-14])
    sqrtm_psd(near)
    with pytest.raises(NotPsdError):
        sqrtm_psd(np.diag([1.0, -0.5]))


def test_nuclear_norm_diagonal_oracle():
    a = np.diag([3.0, -4.0, 0.0])
    assert nuclear_norm(a) == pytest.approx(7.0, abs=1e-12)


def test_nuclear_norm_subgradient_inequality():
    # nuc(B) >= nuc(A) + <G, B - A> for any subgradient G at A
    rng = np.random.default_rng(10)
    for _ in range(40):
        shape = (int(rng.integers(1, 5)), int(rng.integers(1, 5)))
        a = rng.normal(size=shape)
        b = rng.normal(size=shape)
        g = nuclear_norm_subgradient(a)
        lhs = nuclear_norm(b)
        rhs = nuclear_norm(a) + float(np.sum(g * (b - a)))
        assert lhs >= rhs - 1e-10


def test_nuclear_norm_subgradient_spectral_norm_bounded():
    rng = np.random.default_rng(11)
    for _ in range(20):
        a = rng.normal(size=(4, 3))
        g = nuclear_norm_subgradient(a)
        assert np.linalg.norm(g, 2) <= 1.0 + 1e-12
        # at full-rank points the subgradient is the exact gradient
        assert np.sum(g * a) == pytest.approx(nuclear_norm(a), rel=1e-10)


def test_nuclear_norm_subgradient_zero_matrix():
    np.testing.assert_array_equal(nuclear_norm_subgradient(np.zeros((3, 2))), 0.0)


def test_logdet_pd_matches_slogdet():
    rng = np.random.default_rng(12)
    for _ in range(20):
        n = int(rng.integers(1, 6))
        f = rng.normal(size=(n, n))
        m = f @ f.T + 0.5 * np.eye(n)
        sign, ref = np.linalg.slogdet(m)
        assert sign == 1.0
        assert logdet_pd(m) == pytest.approx(ref, rel=1e-10)


def test_logdet_pd_rejects_indefinite():
    with pytest.raises(NotPositiveDefiniteError):
        logdet_pd(np.diag([1.0, -1.0]))


def test_non_finite_rejected():
    with pytest.raises(InvalidInputError):
        eig_sym(np.array([[np.nan, 0.0], [0.0, 1.0]]))
    with pytest.raises(InvalidInputError):
        nuclear_norm(np.array([[np.inf]]))
