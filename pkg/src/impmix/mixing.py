"""Importance mixing: reuse evaluated samples across search distributions.

A new generation of ``N`` individuals distributed as ``p_new`` is assembled
from two sources. Rows of an already evaluated generation drawn from
``p_old`` are kept with probability ``min(1, p_new/p_old)`` (rule 1), and
fresh draws from ``p_new`` are kept with probability
``max(0, 1 - p_old/p_new)`` (rule 2). Only the fresh rows need a fitness
evaluation. The extended variant walks a small archive of past generations
(most recent first) before falling back to plain sampling.

Provenance is stored per row as an integer ``source``: ``0`` for a fresh
sample and ``k >= 1`` for a row reused from archive entry ``k`` (so ``1``
is plain importance mixing and ``k >= 2`` comes from the extension).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .gaussian import GaussianPdf, log_density_ratio, sample

FRESH = 0
REUSED_IM = 1


def provenance_label(source: int) -> str:
    if source == FRESH:
        return "Fresh"
    if source == REUSED_IM:
        return "ReusedIM"
    return f"ReusedEIM({source})"


@dataclass
class Generation:
    """A population with per-row provenance.

    ``fitness`` holds NaN for rows that still need evaluation. ``origin``
    is the row index inside the archived generation a reused row was copied
    from (``-1`` for fresh rows).
    """

    samples: np.ndarray
    fitness: np.ndarray
    source: np.ndarray
    pdf: GaussianPdf
    origin: np.ndarray = None

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        n = self.samples.shape[0]
        self.fitness = np.asarray(self.fitness, dtype=float).reshape(n)
        self.source = np.asarray(self.source, dtype=np.int64).reshape(n)
        if self.origin is None:
            self.origin = np.full(n, -1, dtype=np.int64)
        self.origin = np.asarray(self.origin, dtype=np.int64).reshape(n)

    @classmethod
    def fresh(cls, pdf: GaussianPdf, samples: np.ndarray) -> "Generation":
        n = samples.shape[0]
        return cls(samples, np.full(n, np.nan), np.zeros(n, dtype=np.int64), pdf)

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def fresh_mask(self) -> np.ndarray:
        return self.source == FRESH

    @property
    def evaluated(self) -> bool:
        return not np.any(np.isnan(self.fitness))

    def provenance(self) -> list[str]:
        return [provenance_label(int(s)) for s in self.source]


class Archive:
    """The last ``capacity`` (pdf, generation) pairs, most recent first."""

    def __init__(self, capacity: int = 1):
        if capacity < 1:
            raise ValueError("archive capacity must be >= 1")
        self.capacity = capacity
        self._entries: deque[tuple[GaussianPdf, Generation]] = deque(maxlen=capacity)

    def push(self, pdf: GaussianPdf, generation: Generation) -> None:
        if not generation.evaluated:
            raise ValueError("only fully evaluated generations can be archived")
        self._entries.appendleft((pdf, generation))

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self) -> Iterator[tuple[GaussianPdf, Generation]]:
        return iter(self._entries)

    def __getitem__(self, k: int) -> tuple[GaussianPdf, Generation]:
        return self._entries[k]

    @property
    def entries(self) -> list[tuple[GaussianPdf, Generation]]:
        return list(self._entries)


@dataclass
class MixOutcome:
    generation: Generation
    reused_count: int = field(init=False)
    reused_im: int = field(init=False)
    reused_eim: int = field(init=False)
    fresh_count: int = field(init=False)

    def __post_init__(self):
        src = self.generation.source
        self.fresh_count = int(np.sum(src == FRESH))
        self.reused_im = int(np.sum(src == REUSED_IM))
        self.reused_eim = int(np.sum(src > REUSED_IM))
        self.reused_count = self.reused_im + self.reused_eim


def rule1_probability(log_ratio_new_old):
    """min(1, p_new/p_old) from ln(p_new/p_old)."""
    return np.exp(np.minimum(0.0, log_ratio_new_old))


def rule2_probability(log_ratio_old_new):
    """max(0, 1 - p_old/p_new) from ln(p_old/p_new)."""
    return -np.expm1(np.minimum(0.0, log_ratio_old_new))


def rule1_accept(z, p_new: GaussianPdf, p_old: GaussianPdf, u: float) -> bool:
    """Keep an old-generation sample ``z``?"""
    return bool(u < rule1_probability(log_density_ratio(p_new, p_old, z)))


def rule2_accept(z, p_new: GaussianPdf, p_old: GaussianPdf, u: float) -> bool:
    """Keep a fresh draw ``z`` from ``p_new``?"""
    return bool(u < rule2_probability(log_density_ratio(p_old, p_new, z)))


class _Builder:
    """Accumulates rows while remembering where each came from."""

    def __init__(self, dim: int):
        self.rows: list[np.ndarray] = []
        self.fitness: list[float] = []
        self.source: list[int] = []
        self.origin: list[int] = []
        self.dim = dim

    def __len__(self):
        return len(self.rows)

    def add_reused(self, g: Generation, i: int, k: int):
        self.rows.append(g.samples[i])
        self.fitness.append(g.fitness[i])
        self.source.append(k)
        self.origin.append(i)

    def add_fresh(self, z: np.ndarray):
        self.rows.append(z)
        self.fitness.append(np.nan)
        self.source.append(FRESH)
        self.origin.append(-1)

    def finish(self, pdf: GaussianPdf, rng: np.random.Generator, n: int) -> Generation:
        if len(self.rows) > n:
            # at most one extra row: two acceptances on the last trial
            drop = int(rng.integers(len(self.rows)))
            for lst in (self.rows, self.fitness, self.source, self.origin):
                del lst[drop]
        short = n - len(self.rows)
        if short > 0:
            for z in sample(pdf, rng, short):
                self.add_fresh(z)
        samples = np.array(self.rows, dtype=float).reshape(n, self.dim)
        return Generation(samples, np.array(self.fitness), np.array(self.source), pdf,
                          np.array(self.origin))


def _check(p_new: GaussianPdf, p_old: GaussianPdf, g_old: Generation, n: int):
    if len(g_old) != n:
        raise ValueError(f"old generation has {len(g_old)} rows, expected N={n}")
    if p_old.dim != p_new.dim or g_old.samples.shape[1] != p_new.dim:
        raise ValueError("dimension mismatch between pdfs and old generation")
    if not g_old.evaluated:
        raise ValueError("old generation has unevaluated rows")


def _mix_pass(builder: _Builder, p_new: GaussianPdf, p_old: GaussianPdf,
              g_old: Generation, rng: np.random.Generator, n: int, k: int) -> None:
    """One sweep over ``g_old`` alternating rule 1 and rule 2 trials."""
    order = rng.permutation(n)
    u = rng.random((n, 2))
    candidates = sample(p_new, rng, n)
    keep_old = u[:, 0] < rule1_probability(
        log_density_ratio(p_new, p_old, g_old.samples[order]))
    keep_new = u[:, 1] < rule2_probability(
        log_density_ratio(p_old, p_new, candidates))
    for i in range(n):
        if keep_old[i]:
            builder.add_reused(g_old, int(order[i]), k)
        if keep_new[i]:
            builder.add_fresh(candidates[i])
        if len(builder) >= n:
            return


def mix(p_new: GaussianPdf, p_old: GaussianPdf, g_old: Generation,
        rng: np.random.Generator, n: int) -> MixOutcome:
    """Build a generation of size ``n`` distributed as ``p_new``.

    Follows the alternating schedule: trial ``i`` tests (shuffled) old row
    ``i`` under rule 1 and one fresh draw under rule 2, stopping as soon as
    ``n`` rows are collected. An overshoot by one is trimmed by removing a
    random row; a shortfall is completed with unconditional draws from
    ``p_new``.
    """
    _check(p_new, p_old, g_old, n)
    builder = _Builder(p_new.dim)
    _mix_pass(builder, p_new, p_old, g_old, rng, n, REUSED_IM)
    return MixOutcome(builder.finish(p_new, rng, n))


def mix_extended(p_new: GaussianPdf, archive: Archive, rng: np.random.Generator,
                 n: int) -> MixOutcome:
    """Importance mixing over every archived generation, most recent first.

    With a single archive entry this is exactly :func:`mix`.
    """
    if len(archive) == 0:
        raise ValueError("archive is empty")
    builder = _Builder(p_new.dim)
    for k, (p_old, g_old) in enumerate(archive, start=1):
        _check(p_new, p_old, g_old, n)
        _mix_pass(builder, p_new, p_old, g_old, rng, n, k)
        if len(builder) >= n:
            break
    return MixOutcome(builder.finish(p_new, rng, n))


def mix_sun_variant(p_new: GaussianPdf, p_old: GaussianPdf, g_old: Generation,
                    rng: np.random.Generator, n: int, max_trials: int = 1_000_000) -> MixOutcome:
    """Exhaust-then-refill schedule. Biased; kept only as a negative control.

    Every old row is tried under rule 1 first, then rule 2 is applied to
    fresh draws until the generation is full. If rule 2 acceptance is so
    rare that ``max_trials`` draws do not suffice, the remainder is filled
    with plain draws.
    """
    _check(p_new, p_old, g_old, n)
    builder = _Builder(p_new.dim)
    order = rng.permutation(n)
    u = rng.random(n)
    keep_old = u < rule1_probability(log_density_ratio(p_new, p_old, g_old.samples[order]))
    for i in np.flatnonzero(keep_old):
        builder.add_reused(g_old, int(order[i]), REUSED_IM)
    trials = 0
    while len(builder) < n and trials < max_trials:
        batch = max(16, 2 * (n - len(builder)))
        cand = sample(p_new, rng, batch)
        ub = rng.random(batch)
        keep = ub < rule2_probability(log_density_ratio(p_old, p_new, cand))
        for j in np.flatnonzero(keep):
            builder.add_fresh(cand[j])
            if len(builder) >= n:
                break
        trials += batch
    return MixOutcome(builder.finish(p_new, rng, n))


def sample_generation(pdf: GaussianPdf, rng: np.random.Generator, n: int) -> MixOutcome:
    """Plain sampling with no reuse, wrapped as a MixOutcome."""
    return MixOutcome(Generation.fresh(pdf, sample(pdf, rng, n)))
