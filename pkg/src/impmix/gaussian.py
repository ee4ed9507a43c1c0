"""Multivariate Gaussian search distributions.

Three covariance representations are supported: isotropic (a single
standard deviation), diagonal (per-coordinate variances) and full (stored
only as its lower Cholesky factor). Densities are always handled in log
space so that ratios between two pdfs never overflow, even for d in the
hundreds.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.linalg import solve_triangular

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class Isotropic:
    sigma: float

    def __post_init__(self):
        if not (np.isfinite(self.sigma) and self.sigma > 0):
            raise ValueError(f"sigma must be positive, got {self.sigma}")


@dataclass(frozen=True, eq=False)
class Diagonal:
    variances: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.variances, dtype=float)
        if v.ndim != 1:
            raise ValueError("variances must be a vector")
        if not np.all(v > 0):
            raise ValueError("variances must be strictly positive")
        v.setflags(write=False)
        object.__setattr__(self, "variances", v)


@dataclass(frozen=True, eq=False)
class FullCholesky:
    lower_factor: np.ndarray

    def __post_init__(self):
        L = np.asarray(self.lower_factor, dtype=float)
        if L.ndim != 2 or L.shape[0] != L.shape[1]:
            raise ValueError("lower_factor must be square")
        if not np.allclose(L, np.tril(L)):
            raise ValueError("lower_factor must be lower triangular")
        if not np.all(np.diag(L) > 0):
            raise ValueError("lower_factor diagonal must be strictly positive")
        L = np.tril(L)
        L.setflags(write=False)
        object.__setattr__(self, "lower_factor", L)

    @classmethod
    def from_covariance(cls, cov: np.ndarray) -> "FullCholesky":
        """Factor a symmetric covariance, adding diagonal jitter if needed.

        The jitter is ``1e-10 * trace(cov) / d``, retried with a growing
        multiplier until the factorisation succeeds.
        """
        cov = np.asarray(cov, dtype=float)
        cov = 0.5 * (cov + cov.T)
        try:
            return cls(np.linalg.cholesky(cov))
        except np.linalg.LinAlgError:
            pass
        d = cov.shape[0]
        jitter = 1e-10 * max(np.trace(cov), 1e-300) / d
        for _ in range(20):
            try:
                return cls(np.linalg.cholesky(cov + jitter * np.eye(d)))
            except np.linalg.LinAlgError:
                jitter *= 10.0
        raise np.linalg.LinAlgError("covariance could not be repaired")


CovarianceRepr = Union[Isotropic, Diagonal, FullCholesky]


def _cov_dim(cov: CovarianceRepr) -> int | None:
    if isinstance(cov, Diagonal):
        return cov.variances.shape[0]
    if isinstance(cov, FullCholesky):
        return cov.lower_factor.shape[0]
    return None


@dataclass(frozen=True, eq=False)
class GaussianPdf:
    mean: np.ndarray
    cov: CovarianceRepr

    def __post_init__(self):
        m = np.array(self.mean, dtype=float).reshape(-1)
        m.setflags(write=False)
        object.__setattr__(self, "mean", m)
        cd = _cov_dim(self.cov)
        if cd is not None and cd != m.shape[0]:
            raise ValueError(f"covariance has dim {cd}, mean has dim {m.shape[0]}")

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @property
    def log_det(self) -> float:
        """ln det of the covariance matrix."""
        cov = self.cov
        if isinstance(cov, Isotropic):
            return 2.0 * self.dim * float(np.log(cov.sigma))
        if isinstance(cov, Diagonal):
            return float(np.sum(np.log(cov.variances)))
        return 2.0 * float(np.sum(np.log(np.diag(cov.lower_factor))))

    def std(self) -> np.ndarray:
        """Marginal standard deviations."""
        cov = self.cov
        if isinstance(cov, Isotropic):
            return np.full(self.dim, cov.sigma)
        if isinstance(cov, Diagonal):
            return np.sqrt(cov.variances)
        return np.sqrt(np.sum(cov.lower_factor**2, axis=1))

    def covariance(self) -> np.ndarray:
        """Dense covariance matrix. Only meant for tests and small d."""
        cov = self.cov
        if isinstance(cov, Isotropic):
            return cov.sigma**2 * np.eye(self.dim)
        if isinstance(cov, Diagonal):
            return np.diag(cov.variances)
        return cov.lower_factor @ cov.lower_factor.T

    def __eq__(self, other):
        if not isinstance(other, GaussianPdf) or type(self.cov) is not type(other.cov):
            return NotImplemented
        if not np.array_equal(self.mean, other.mean):
            return False
        if isinstance(self.cov, Isotropic):
            return self.cov.sigma == other.cov.sigma
        if isinstance(self.cov, Diagonal):
            return np.array_equal(self.cov.variances, other.cov.variances)
        return np.array_equal(self.cov.lower_factor, other.cov.lower_factor)

    __hash__ = None


def _mahalanobis_sq(pdf: GaussianPdf, z: np.ndarray) -> np.ndarray:
    # z: (n, d) -> (n,)
    diff = z - pdf.mean
    cov = pdf.cov
    if isinstance(cov, Isotropic):
        return np.einsum("ij,ij->i", diff, diff) / cov.sigma**2
    if isinstance(cov, Diagonal):
        return np.einsum("ij,ij->i", diff, diff / cov.variances)
    w = solve_triangular(cov.lower_factor, diff.T, lower=True, check_finite=False)
    return np.einsum("ij,ij->j", w, w)


def _as_points(pdf: GaussianPdf, z) -> tuple[np.ndarray, bool]:
    z = np.asarray(z, dtype=float)
    single = z.ndim == 1
    z2 = z.reshape(1, -1) if single else z
    if z2.ndim != 2 or z2.shape[1] != pdf.dim:
        raise ValueError(f"expected points of dim {pdf.dim}, got shape {z.shape}")
    return z2, single


def log_density(pdf: GaussianPdf, z):
    """ln p(z) for a single point (returns float) or rows of a matrix."""
    z2, single = _as_points(pdf, z)
    out = -0.5 * (pdf.dim * LOG_2PI + pdf.log_det + _mahalanobis_sq(pdf, z2))
    return float(out[0]) if single else out


def log_density_ratio(p_new: GaussianPdf, p_old: GaussianPdf, z):
    """ln p_new(z) - ln p_old(z), never leaving log space."""
    if p_new.dim != p_old.dim:
        raise ValueError(f"pdf dims differ: {p_new.dim} vs {p_old.dim}")
    z2, single = _as_points(p_new, z)
    out = 0.5 * (p_old.log_det - p_new.log_det) + 0.5 * (
        _mahalanobis_sq(p_old, z2) - _mahalanobis_sq(p_new, z2)
    )
    return float(out[0]) if single else out


def sample(pdf: GaussianPdf, rng: np.random.Generator, n: int) -> np.ndarray:
    """Draw ``n`` rows ``mean + L @ eps`` with standard normal ``eps``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    eps = rng.standard_normal((n, pdf.dim))
    cov = pdf.cov
    if isinstance(cov, Isotropic):
        return pdf.mean + cov.sigma * eps
    if isinstance(cov, Diagonal):
        return pdf.mean + np.sqrt(cov.variances) * eps
    return pdf.mean + eps @ cov.lower_factor.T


def isotropic(mean, sigma: float) -> GaussianPdf:
    return GaussianPdf(mean, Isotropic(float(sigma)))


def diagonal(mean, variances) -> GaussianPdf:
    return GaussianPdf(mean, Diagonal(variances))


def full(mean, lower_factor) -> GaussianPdf:
    return GaussianPdf(mean, FullCholesky(lower_factor))
