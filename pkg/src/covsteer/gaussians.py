"""Gaussian distributions and closed-form distances between them."""

from dataclasses import InitVar, dataclass

import numpy as np
import scipy.linalg

from .errors import (
    ConsistencyError,
    DimMismatchError,
    InvalidInputError,
    NotPositiveDefiniteError,
    NotPsdError,
)
from .matfun import eig_sym, sqrtm_psd, symmetrize

# Results of the distance functionals may come out slightly negative through
# rounding; anything within this band is clamped to zero, anything below it
# signals a real bug upstream.
_NEGATIVE_TOL = 1e-9


@dataclass(frozen=True)
class Gaussian:
    """Multivariate normal distribution with mean vector and covariance matrix.

    The covariance is symmetrized on construction. By default it must be
    positive definite (checked by Cholesky); pass ``require_pd=False`` for
    distributions produced by propagation or sampling, which are validated
    at the PSD level only. :func:`kl_divergence` re-checks positive
    definiteness on use.
    """

    mean: np.ndarray
    cov: np.ndarray
    require_pd: InitVar[bool] = True

    def __post_init__(self, require_pd: bool):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        if mean.ndim != 1:
            raise InvalidInputError(f"mean must be a vector, got shape {mean.shape}")
        if not np.all(np.isfinite(mean)):
            raise InvalidInputError("mean contains non-finite entries")
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if not np.all(np.isfinite(cov)):
            raise InvalidInputError("cov contains non-finite entries")
        cov = symmetrize(cov)
        if cov.shape[0] != mean.shape[0]:
            raise DimMismatchError(
                f"mean has dim {mean.shape[0]} but cov is {cov.shape[0]}x{cov.shape[1]}"
            )
        if require_pd:
            try:
                np.linalg.cholesky(cov)
            except np.linalg.LinAlgError as exc:
                raise NotPositiveDefiniteError(
                    "covariance is not positive definite"
                ) from exc
        else:
            eigs = np.linalg.eigvalsh(cov)
            scale = max(float(np.max(np.abs(eigs))), 1.0) if eigs.size else 1.0
            if eigs.size and eigs[0] < -1e-9 * scale:
                raise NotPsdError(
                    f"covariance is not PSD: min eigenvalue {eigs[0]:.3e}"
                )
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def _check_pair(p: Gaussian, q: Gaussian) -> None:
    if p.dim != q.dim:
        raise DimMismatchError(f"dimension mismatch: {p.dim} vs {q.dim}")


def _clamp_nonnegative(value: float, what: str) -> float:
    if value < -_NEGATIVE_TOL:
        raise ConsistencyError(f"{what} evaluated to {value:.3e}, below -{_NEGATIVE_TOL}")
    return max(value, 0.0)


def wasserstein_sq(p: Gaussian, q: Gaussian) -> float:
    """Squared 2-Wasserstein distance between two Gaussians.

    ``|m1 - m2|^2 + tr(S1 + S2 - 2 (S2^{1/2} S1 S2^{1/2})^{1/2})``. The cross
    term uses the PSD matrix square root, so both covariances need only be
    PSD. The result is clamped to zero if it lands within floating-point
    noise below it.
    """
    _check_pair(p, q)
    root_q = sqrtm_psd(q.cov)
    cross = sqrtm_psd(root_q @ p.cov @ root_q)
    value = (
        float(np.sum((p.mean - q.mean) ** 2))
        + float(np.trace(p.cov) + np.trace(q.cov) - 2.0 * np.trace(cross))
    )
    return _clamp_nonnegative(value, "squared Wasserstein distance")


def kl_divergence(p: Gaussian, q: Gaussian) -> float:
    """Kullback-Leibler divergence ``KL(p || q)`` between two Gaussians.

    ``(1/2) [tr(S2^-1 S1) + (m2-m1)^T S2^-1 (m2-m1) - n + log(det S2 / det S1)]``.
    Both covariances must be positive definite. Asymmetric in its arguments.
    """
    _check_pair(p, q)
    try:
        chol_q = np.linalg.cholesky(q.cov)
        chol_p = np.linalg.cholesky(p.cov)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(
            "kl_divergence requires positive definite covariances"
        ) from exc
    n = p.dim
    # tr(S2^-1 S1) = |L2^-1 L1|_F^2 with S_i = L_i L_i^T
    half = scipy.linalg.solve_triangular(chol_q, chol_p, lower=True)
    trace_term = float(np.sum(half**2))
    diff = q.mean - p.mean
    w = scipy.linalg.solve_triangular(chol_q, diff, lower=True)
    quad_term = float(np.sum(w**2))
    logdet_q = 2.0 * float(np.sum(np.log(np.diag(chol_q))))
    logdet_p = 2.0 * float(np.sum(np.log(np.diag(chol_p))))
    value = 0.5 * (trace_term + quad_term - n + logdet_q - logdet_p)
    return _clamp_nonnegative(value, "KL divergence")


def confidence_ellipse(g: Gaussian, n_sigma: float, n_points: int = 128) -> np.ndarray:
    """Closed polyline on the ``n_sigma`` confidence ellipse of a 2-D Gaussian.

    Returns ``n_points + 1`` points (the first repeated last) on
    ``{x : (x - m)^T S^-1 (x - m) = n_sigma^2}``, sampled at uniform angles
    in the eigenbasis of the covariance.
    """
    if g.dim != 2:
        raise DimMismatchError(f"confidence ellipse requires dim 2, got {g.dim}")
    if n_sigma <= 0:
        raise InvalidInputError("n_sigma must be positive")
    values, vectors = eig_sym(g.cov)
    radii = n_sigma * np.sqrt(np.clip(values, 0.0, None))
    angles = np.linspace(0.0, 2.0 * np.pi, n_points, endpoint=False)
    unit = np.stack([radii[0] * np.cos(angles), radii[1] * np.sin(angles)])
    points = (vectors @ unit).T + g.mean
    return np.vstack([points, points[:1]])
