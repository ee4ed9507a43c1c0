"""Statistical property suite for the mixing layer.

Each check returns a :class:`PropertyResult`; ``run_suite`` runs them all
with fixed seeds. The CLI ``verify`` subcommand prints one line per check
and exits non-zero if any fails.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .gaussian import GaussianPdf, diagonal, isotropic, log_density_ratio, sample
from .mixing import (Archive, Generation, mix, mix_extended, mix_sun_variant,
                     rule1_probability, rule2_probability)
from .stats import (chi_square_uniform, estimate_lambda, ks_statistic, ks_two_sample,
                    rejection_sample, under_curve_sample)

ALPHA = 0.01


@dataclass
class PropertyResult:
    name: str
    passed: bool
    detail: str
    seed: int
    seconds: float = 0.0

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] {self.name}: {self.detail} (seed={self.seed}, {self.seconds:.1f}s)"


def _evaluated(pdf: GaussianPdf, rng, n: int) -> Generation:
    g = Generation.fresh(pdf, sample(pdf, rng, n))
    g.fitness[:] = 0.0
    return g


def pair_1d() -> tuple[GaussianPdf, GaussianPdf]:
    return isotropic([0.0], 1.0), isotropic([0.5], 1.0)


def pair_2d() -> tuple[GaussianPdf, GaussianPdf]:
    return diagonal([0.0, 0.0], [1.0, 0.5]), diagonal([0.4, -0.3], [1.3, 0.4])


def drifting_archive(p_old_means, variances, rng, n: int) -> Archive:
    """Archive whose entries have means ``p_old_means`` (oldest first)."""
    archive = Archive(len(p_old_means))
    for m in p_old_means:
        pdf = diagonal(m, variances)
        archive.push(pdf, _evaluated(pdf, rng, n))
    return archive


def pooled_mix_samples(p_old, p_new, reps: int, n: int, seed: int,
                       mode: str = "im", archive_means=None) -> tuple[np.ndarray, float]:
    """Concatenate the output of ``reps`` independent mixing calls.

    Returns the pooled rows and the mean reused fraction.
    """
    rng = np.random.default_rng(seed)
    rows = []
    reused = 0
    for _ in range(reps):
        if mode == "im":
            out = mix(p_new, p_old, _evaluated(p_old, rng, n), rng, n)
        elif mode == "sun":
            out = mix_sun_variant(p_new, p_old, _evaluated(p_old, rng, n), rng, n)
        else:
            var = p_new.std() ** 2
            out = mix_extended(p_new, drifting_archive(archive_means, var, rng, n), rng, n)
        rows.append(out.generation.samples)
        reused += out.reused_count
    return np.concatenate(rows), reused / (reps * n)


def ks_marginals(pooled: np.ndarray, p_new: GaussianPdf, seed: int,
                 alpha: float = ALPHA) -> tuple[bool, list[float]]:
    """KS of each marginal against an equal-size direct sample, Bonferroni-corrected."""
    rng = np.random.default_rng(seed + 7919)
    direct = sample(p_new, rng, pooled.shape[0])
    k = min(p_new.dim, 5)
    pvals = [ks_two_sample(pooled[:, j], direct[:, j]).p_value for j in range(k)]
    return all(p >= alpha / k for p in pvals), pvals


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        res = fn(*args, **kwargs)
        res.seconds = time.perf_counter() - t0
        return res
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


@_timed
def check_mix_unbiased(seed: int = 11, reps: int = 1000, n: int = 100) -> PropertyResult:
    ok_all = True
    parts = []
    for label, (p_old, p_new) in (("1D", pair_1d()), ("2D", pair_2d())):
        pooled, _ = pooled_mix_samples(p_old, p_new, reps, n, seed)
        ok, pv = ks_marginals(pooled, p_new, seed)
        ok_all &= ok
        parts.append(f"{label} p=" + ",".join(f"{p:.3f}" for p in pv))
    return PropertyResult("mix output ~ p_new (KS)", ok_all, "; ".join(parts), seed)


@_timed
def check_mix_extended_unbiased(seed: int = 12, reps: int = 1000, n: int = 100) -> PropertyResult:
    ok_all = True
    parts = []
    cases = (
        ("1D", isotropic([1.5], 1.0), [[0.0], [0.5], [1.0]]),
        ("2D", diagonal([0.6, -0.45], [1.0, 0.5]), [[0.0, 0.0], [0.2, -0.15], [0.4, -0.3]]),
    )
    for label, p_new, means in cases:
        pooled, _ = pooled_mix_samples(None, p_new, reps, n, seed, mode="eim",
                                       archive_means=means)
        ok, pv = ks_marginals(pooled, p_new, seed)
        ok_all &= ok
        parts.append(f"{label} p=" + ",".join(f"{p:.3f}" for p in pv))
    return PropertyResult("mix_extended output ~ p_new (KS)", ok_all, "; ".join(parts), seed)


def lambda_closed_form_1d(shift: float) -> float:
    """Overlap of N(0,1) and N(shift,1)."""
    return float(2.0 * ndtr(-abs(shift) / 2.0))


@_timed
def check_reuse_matches_lambda(seed: int = 13, reps: int = 10_000, n: int = 100,
                               tol: float = 0.01) -> PropertyResult:
    p_old, p_new = pair_1d()
    lam = lambda_closed_form_1d(0.5)
    _, frac = pooled_mix_samples(p_old, p_new, reps, n, seed)
    return PropertyResult("mix reused fraction = lambda", abs(frac - lam) <= tol,
                          f"reused={frac:.4f} lambda={lam:.4f} tol={tol}", seed)


def _sun_vs_mix_ks(seed: int, n: int, p_old, p_new, ref_size: int) -> tuple[float, float]:
    rng = np.random.default_rng(seed)
    g_old = _evaluated(p_old, rng, n)
    ref = sample(p_new, rng, ref_size)
    a = mix(p_new, p_old, g_old, np.random.default_rng([seed, 1]), n)
    b = mix_sun_variant(p_new, p_old, g_old, np.random.default_rng([seed, 1]), n)
    return (ks_statistic(a.generation.samples[:, 0], ref[:, 0]),
            ks_statistic(b.generation.samples[:, 0], ref[:, 0]))


def sun_vs_mix(reps: int = 1000, n: int = 100, seed0: int = 0,
               ref_size: int = 1000) -> tuple[float, float]:
    """Mean per-call KS statistic of mix and of the Sun variant, paired over seeds."""
    p_old, p_new = isotropic([0.0], 1.0), isotropic([1.0], 1.0)
    ks = np.array([_sun_vs_mix_ks(seed0 + s, n, p_old, p_new, ref_size) for s in range(reps)])
    return float(ks[:, 0].mean()), float(ks[:, 1].mean())


@_timed
def check_sun_variant_worse(seed: int = 0, reps: int = 1000) -> PropertyResult:
    m, s = sun_vs_mix(reps, seed0=seed)
    return PropertyResult("sun variant mean KS > mix mean KS", s > m,
                          f"mix={m:.5f} sun={s:.5f}", seed)


@_timed
def check_rule_rates(seed: int = 14, n: int = 1_000_000) -> PropertyResult:
    """Rule 1 under p_old accepts at rate lambda; rule 2 under p_new at 1 - lambda."""
    p_old, p_new = pair_1d()
    lam = estimate_lambda(p_old, p_new).value
    rng = np.random.default_rng(seed)
    z_old = sample(p_old, rng, n)
    z_new = sample(p_new, rng, n)
    r1 = np.mean(rng.random(n) < rule1_probability(log_density_ratio(p_new, p_old, z_old)))
    r2 = np.mean(rng.random(n) < rule2_probability(log_density_ratio(p_old, p_new, z_new)))
    se1 = math.sqrt(lam * (1 - lam) / n)
    ok = abs(r1 - lam) <= 3 * se1 and abs(r2 - (1 - lam)) <= 3 * se1
    ok &= abs(r1 - lam) <= 0.003 and abs(r2 - (1 - lam)) <= 0.003
    return PropertyResult("rule acceptance rates vs lambda", bool(ok),
                          f"rule1={r1:.4f} rule2={r2:.4f} lambda={lam:.4f} 3se={3 * se1:.4f}", seed)


def disk_acceptance(n: int = 100_000, seed: int = 15) -> tuple[np.ndarray, float]:
    rng = np.random.default_rng(seed)
    pts, tried = rejection_sample(lambda r, k: r.uniform(-1, 1, size=(k, 2)),
                                  lambda p: np.sum(p * p, axis=1) <= 1.0, n, rng)
    return pts, n / tried


@_timed
def check_disk_rate(seed: int = 15, n: int = 100_000) -> PropertyResult:
    _, rate = disk_acceptance(n, seed)
    return PropertyResult("rejection sampling disk rate = pi/4", abs(rate - math.pi / 4) <= 0.005,
                          f"rate={rate:.5f} pi/4={math.pi / 4:.5f} tol=0.005", seed)


def disk_cell_counts(pts: np.ndarray, bins: int = 10) -> np.ndarray:
    """Counts of points in grid cells lying entirely inside the unit disk."""
    edges = np.linspace(-1, 1, bins + 1)
    counts, _, _ = np.histogram2d(pts[:, 0], pts[:, 1], bins=[edges, edges])
    corner = np.maximum(np.abs(edges[:-1])[:, None], np.abs(edges[1:])[:, None])
    far = corner ** 2 + corner.T ** 2 <= 1.0 + 1e-12  # corner cells touch the circle exactly
    return counts[far]


@_timed
def check_disk_uniform(seed: int = 16, n: int = 100_000) -> PropertyResult:
    pts, _ = disk_acceptance(n, seed)
    stat, p = chi_square_uniform(disk_cell_counts(pts))
    return PropertyResult("rejection samples uniform on disk (chi2)", p >= ALPHA,
                          f"chi2={stat:.1f} p={p:.3f}", seed)


@_timed
def check_under_curve(seed: int = 17, n: int = 100_000) -> PropertyResult:
    pdf = isotropic([0.0], 1.0)
    rng = np.random.default_rng(seed)
    z, h = under_curve_sample(pdf, rng, n)
    direct = sample(pdf, rng, n)
    res = ks_two_sample(z[:, 0], direct[:, 0])
    below = bool(np.all(h <= np.exp(-0.5 * z[:, 0] ** 2) / math.sqrt(2 * math.pi)))
    return PropertyResult("under-curve pairs recover the pdf", below and res.p_value >= ALPHA,
                          f"heights<=pdf={below} KS p={res.p_value:.3f}", seed)


ALL_CHECKS = (check_disk_rate, check_disk_uniform, check_under_curve, check_rule_rates,
              check_mix_unbiased, check_mix_extended_unbiased, check_reuse_matches_lambda,
              check_sun_variant_worse)


def run_suite(quick: bool = False) -> list[PropertyResult]:
    out = []
    for check in ALL_CHECKS:
        if quick and check is check_reuse_matches_lambda:
            out.append(check(reps=2000))
        elif quick and check in (check_mix_unbiased, check_mix_extended_unbiased,
                                 check_sun_variant_worse):
            out.append(check(reps=300))
        else:
            out.append(check())
    return out
