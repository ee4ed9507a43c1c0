"""Statistical tools used to check the mixing layer.

Includes generic rejection sampling, uniform sampling under a density
curve, a two-sample Kolmogorov-Smirnov test, a chi-square uniformity test
and estimators of the overlap mass ``lambda = integral of min(p_old, p_new)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate, special
from scipy.stats import chi2, kstwobign

from .gaussian import GaussianPdf, Isotropic, log_density, log_density_ratio, sample


class DegenerateRegionError(RuntimeError):
    """Raised when a rejection sampler almost never accepts."""


@dataclass(frozen=True)
class KsResult:
    statistic: float
    p_value: float
    n1: int
    n2: int


@dataclass(frozen=True)
class OverlapEstimate:
    value: float
    std_error: float
    method: str


def rejection_sample(outer_sampler: Callable[[np.random.Generator, int], np.ndarray],
                     membership: Callable[[np.ndarray], np.ndarray], n: int,
                     rng: np.random.Generator, window: int = 1_000_000,
                     min_rate: float = 1e-6) -> tuple[np.ndarray, int]:
    """Draw ``n`` points of the outer law that satisfy ``membership``.

    Equivalent to resampling each point until it lands in the region, but
    done in vectorised batches. Returns the accepted points and the total
    number of outer draws. ``outer_sampler(rng, k)`` must return ``k`` rows;
    ``membership(points)`` a boolean mask.
    """
    accepted = []
    got = 0
    tried = 0
    tried_in_window = 0
    hits_in_window = 0
    while got < n:
        k = max(64, int(1.2 * (n - got) / max(hits_in_window / max(tried_in_window, 1), 0.01)))
        k = min(k, window)
        pts = outer_sampler(rng, k)
        mask = np.asarray(membership(pts), dtype=bool)
        hits = pts[mask]
        need = n - got
        if hits.shape[0] > need:
            # keep the draw order: discard trials after the n-th success
            last = np.flatnonzero(mask)[need - 1]
            tried += last + 1
            hits = hits[:need]
        else:
            tried += k
        accepted.append(hits)
        got += hits.shape[0]
        tried_in_window += k
        hits_in_window += int(mask.sum())
        if tried_in_window >= window:
            if hits_in_window / tried_in_window < min_rate:
                raise DegenerateRegionError(
                    f"acceptance rate {hits_in_window / tried_in_window:.2e} below {min_rate:g}")
            tried_in_window = hits_in_window = 0
    return np.concatenate(accepted, axis=0), tried


def under_curve_sample(pdf: GaussianPdf, rng: np.random.Generator,
                       n: int) -> tuple[np.ndarray, np.ndarray]:
    """Points uniform under the graph of ``pdf``: ``(z, u * p(z))``."""
    z = sample(pdf, rng, n)
    u = rng.random(n)
    return z, u * np.exp(log_density(pdf, z))


def ks_statistic(a, b) -> float:
    a = np.sort(np.asarray(a, dtype=float).ravel())
    b = np.sort(np.asarray(b, dtype=float).ravel())
    pts = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, pts, side="right") / a.size
    cdf_b = np.searchsorted(b, pts, side="right") / b.size
    return float(np.max(np.abs(cdf_a - cdf_b)))


def ks_two_sample(a, b) -> KsResult:
    """Two-sample KS statistic with the asymptotic Kolmogorov p-value."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size == 0 or b.size == 0:
        raise ValueError("KS test needs two non-empty samples")
    d = ks_statistic(a, b)
    en = math.sqrt(a.size * b.size / (a.size + b.size))
    p = float(kstwobign.sf(d * en)) if d > 0 else 1.0
    return KsResult(d, min(max(p, 0.0), 1.0), a.size, b.size)


def chi_square_uniform(counts) -> tuple[float, float]:
    """Chi-square statistic and p-value for equal expected cell counts."""
    counts = np.asarray(counts, dtype=float).ravel()
    expected = counts.sum() / counts.size
    stat = float(np.sum((counts - expected) ** 2) / expected)
    return stat, float(chi2.sf(stat, counts.size - 1))


def _gauss_1d(pdf: GaussianPdf) -> tuple[float, float]:
    return float(pdf.mean[0]), float(pdf.std()[0])


def _crossings_1d(m1, s1, m2, s2) -> list[float]:
    # roots of ln N(x; m1, s1) = ln N(x; m2, s2)
    a = 0.5 / s2**2 - 0.5 / s1**2
    b = m1 / s1**2 - m2 / s2**2
    c = 0.5 * m2**2 / s2**2 - 0.5 * m1**2 / s1**2 + math.log(s2 / s1)
    if abs(a) < 1e-15 * max(1 / s1**2, 1 / s2**2):
        return [] if b == 0 else [-c / b]
    disc = b * b - 4 * a * c
    if disc < 0:
        return []
    r = math.sqrt(disc)
    return sorted([(-b - r) / (2 * a), (-b + r) / (2 * a)])


def estimate_lambda(p_old: GaussianPdf, p_new: GaussianPdf, budget: int = 200_000,
                    rng: np.random.Generator | None = None) -> OverlapEstimate:
    """Overlap mass of two Gaussians.

    One-dimensional pairs use adaptive quadrature split at the density
    crossings. Higher dimensions use the Monte Carlo estimate
    ``E_{z ~ p_old}[min(1, p_new(z) / p_old(z))]`` over ``budget`` draws.
    """
    if p_old.dim != p_new.dim:
        raise ValueError("pdf dims differ")
    if p_old == p_new:
        return OverlapEstimate(1.0, 0.0, "quadrature-1D" if p_old.dim == 1 else "monte-carlo")
    if p_old.dim == 1:
        m1, s1 = _gauss_1d(p_old)
        m2, s2 = _gauss_1d(p_new)

        def f(x):
            return min(math.exp(-0.5 * ((x - m1) / s1) ** 2) / s1,
                       math.exp(-0.5 * ((x - m2) / s2) ** 2) / s2) / math.sqrt(2 * math.pi)

        pts = _crossings_1d(m1, s1, m2, s2)
        lo = min(m1 - 40 * s1, m2 - 40 * s2)
        hi = max(m1 + 40 * s1, m2 + 40 * s2)
        edges = [lo] + [p for p in pts if lo < p < hi] + [hi]
        total = 0.0
        err = 0.0
        for x0, x1 in zip(edges[:-1], edges[1:]):
            # split long pieces around the two means so quad sees the mass
            inner = sorted({x0, x1, *[m for m in (m1, m2) if x0 < m < x1]})
            for y0, y1 in zip(inner[:-1], inner[1:]):
                v, e = integrate.quad(f, y0, y1, limit=200, epsabs=1e-14, epsrel=1e-12)
                total += v
                err += e
        return OverlapEstimate(min(max(total, 0.0), 1.0), err, "quadrature-1D")
    rng = rng if rng is not None else np.random.default_rng(0)
    z = sample(p_old, rng, budget)
    w = np.exp(np.minimum(0.0, log_density_ratio(p_new, p_old, z)))
    return OverlapEstimate(float(w.mean()), float(w.std(ddof=1) / math.sqrt(budget)),
                           "monte-carlo")


def overlap_isotropic_closed_form(p_old: GaussianPdf, p_new: GaussianPdf) -> float:
    """``2 * Phi(-|mu_new - mu_old| / (2 sigma))`` for equal isotropic covariances."""
    if not (isinstance(p_old.cov, Isotropic) and isinstance(p_new.cov, Isotropic)
            and p_old.cov.sigma == p_new.cov.sigma):
        raise ValueError("closed form needs equal isotropic covariances")
    delta = float(np.linalg.norm(p_new.mean - p_old.mean))
    return float(2.0 * special.ndtr(-delta / (2.0 * p_old.cov.sigma)))
