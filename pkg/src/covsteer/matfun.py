"""Dense symmetric/PSD matrix functions and norms.

Symmetric matrices are represented as plain ``numpy`` arrays. Every routine
symmetrizes its input as ``(M + M.T) / 2`` before factorizing, so callers may
pass matrices that are symmetric only up to floating-point noise.
"""

from typing import NamedTuple

import numpy as np

from .errors import InvalidInputError, NotPositiveDefiniteError, NotPsdError


class EigDecomposition(NamedTuple):
    """Eigendecomposition of a symmetric matrix, eigenvalues sorted descending."""

    values: np.ndarray
    vectors: np.ndarray  # columns are the eigenvectors


class Svd(NamedTuple):
    """Thin singular value decomposition, singular values sorted descending."""

    left: np.ndarray
    singular_values: np.ndarray
    right: np.ndarray  # columns are right singular vectors


def symmetrize(m: np.ndarray) -> np.ndarray:
    """Return the symmetric part ``(M + M.T) / 2`` of a square matrix."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise InvalidInputError(f"expected a square matrix, got shape {m.shape}")
    return 0.5 * (m + m.T)


def _check_finite(a: np.ndarray, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if not np.all(np.isfinite(a)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return a


def eig_sym(m: np.ndarray) -> EigDecomposition:
    """Eigendecomposition of a symmetric matrix.

    Parameters
    ----------
    m : ndarray, shape (n, n)
        Symmetric matrix (symmetrized internally).

    Returns
    -------
    EigDecomposition
        ``values`` sorted descending, ``vectors`` orthonormal with
        ``vectors @ diag(values) @ vectors.T`` reconstructing ``m``.
    """
    m = symmetrize(_check_finite(m, "matrix"))
    values, vectors = np.linalg.eigh(m)
    return EigDecomposition(values[::-1].copy(), vectors[:, ::-1].copy())


def svd(a: np.ndarray) -> Svd:
    """Thin SVD ``a = left @ diag(s) @ right.T`` with descending singular values."""
    a = _check_finite(a, "matrix")
    if a.ndim != 2:
        raise InvalidInputError(f"expected a matrix, got shape {a.shape}")
    u, s, vh = np.linalg.svd(a, full_matrices=False)
    return Svd(u, s, vh.T)


def sqrtm_psd(m: np.ndarray, clamp_tol: float | None = None) -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition.

    Eigenvalues in ``[-clamp_tol, 0)`` are treated as floating-point noise and
    clamped to zero; anything below ``-clamp_tol`` raises :class:`NotPsdError`.

    Parameters
    ----------
    m : ndarray, shape (n, n)
        Symmetric PSD matrix (up to the clamp tolerance).
    clamp_tol : float, optional
        Absolute clamp threshold. Defaults to ``1e-10 * max(|eigenvalues|)``,
        so nearly singular matrices pass while indefinite ones do not.
    """
    values, vectors = eig_sym(m)
    scale = float(np.max(np.abs(values))) if values.size else 0.0
    tol = 1e-10 * scale if clamp_tol is None else float(clamp_tol)
    if values.size and values[-1] < -tol:
        raise NotPsdError(
            f"matrix is not PSD: min eigenvalue {values[-1]:.3e} < -{tol:.3e}"
        )
    root = np.sqrt(np.clip(values, 0.0, None))
    return symmetrize((vectors * root) @ vectors.T)


def nuclear_norm(a: np.ndarray) -> float:
    """Sum of singular values of ``a``."""
    a = _check_finite(a, "matrix")
    return float(np.linalg.svd(a, compute_uv=False).sum())


def nuclear_norm_subgradient(a: np.ndarray, rank_tol: float | None = None) -> np.ndarray:
    """A subgradient of the nuclear norm at ``a``.

    Returns ``U1 @ V1.T`` where ``U1, V1`` collect the singular vectors whose
    singular values exceed ``rank_tol`` (default ``1e-9 * sigma_max``). At
    rank-deficient points this is one valid element of the subdifferential,
    which is all a majorize-minimize outer loop needs.
    """
    u, s, vt = svd(a)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros_like(np.asarray(a, dtype=float))
    tol = 1e-9 * s[0] if rank_tol is None else float(rank_tol)
    r = int(np.count_nonzero(s > tol))
    return u[:, :r] @ vt.T[:r, :]


def logdet_pd(m: np.ndarray) -> float:
    """Log-determinant of a symmetric positive definite matrix.

    Computed from the Cholesky factor diagonal for numerical stability.
    Raises :class:`NotPositiveDefiniteError` if the factorization fails.
    """
    m = symmetrize(_check_finite(m, "matrix"))
    try:
        chol = np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(f"matrix is not positive definite: {exc}") from exc
    return float(2.0 * np.sum(np.log(np.diag(chol))))
