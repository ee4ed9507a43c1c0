"""Evolution strategies behind a common ask/tell interface.

``ask()`` returns the current search distribution as a :class:`GaussianPdf`
(the mixing layer samples from it and tests acceptance against it);
``tell(samples, utilities)`` consumes an evaluated population. Utilities
are expected to be rank-shaped (see :func:`shape_fitness`), so every update
depends on the ordering of the population only. All strategies maximize.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .gaussian import FullCholesky, GaussianPdf, diagonal, isotropic

ALGORITHMS = ("openes", "snes", "cem", "cmaes")


def rank_transform(fitness) -> np.ndarray:
    """Centered ranks in [-0.5, 0.5]; ties are broken by input position."""
    f = np.asarray(fitness, dtype=float)
    n = f.shape[0]
    if n < 2:
        raise ValueError("rank_transform needs at least two values")
    order = np.argsort(f, kind="stable")
    ranks = np.empty(n)
    ranks[order] = np.arange(n)
    return ranks / (n - 1) - 0.5


def weight_decay_penalty(theta, coef: float = 0.05):
    """``-coef * ||theta||^2`` for a vector, or per row of a matrix."""
    theta = np.asarray(theta, dtype=float)
    return -coef * np.sum(theta * theta, axis=-1)


@dataclass
class ShapedFitness:
    raw: np.ndarray
    penalties: np.ndarray
    utilities: np.ndarray


def shape_fitness(raw, samples, decay_coef: float = 0.05) -> ShapedFitness:
    raw = np.asarray(raw, dtype=float)
    pen = weight_decay_penalty(samples, decay_coef)
    return ShapedFitness(raw, pen, rank_transform(raw + pen))


@dataclass
class AdamState:
    size: int
    lr: float = 0.01
    beta1: float = 0.99
    beta2: float = 0.999
    eps: float = 1e-8
    m: np.ndarray = field(default=None)
    v: np.ndarray = field(default=None)
    t: int = 0

    def __post_init__(self):
        if self.m is None:
            self.m = np.zeros(self.size)
        if self.v is None:
            self.v = np.zeros(self.size)


def adam_step(state: AdamState, gradient) -> np.ndarray:
    """Advance ``state`` with ``gradient`` and return the ascent increment."""
    g = np.asarray(gradient, dtype=float)
    if g.shape != (state.size,):
        raise ValueError(f"gradient has shape {g.shape}, expected ({state.size},)")
    state.t += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * g
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * g * g
    m_hat = state.m / (1.0 - state.beta1**state.t)
    v_hat = state.v / (1.0 - state.beta2**state.t)
    return state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


class Strategy:
    name = "base"

    def __init__(self, mean, sigma: float = 0.25, popsize: int = 50):
        self.mean = np.array(mean, dtype=float)
        self.dim = self.mean.shape[0]
        self.sigma0 = float(sigma)
        self.popsize = popsize
        self.generation_index = 0
        self._pdf = None

    def ask(self) -> GaussianPdf:
        return self._pdf

    def tell(self, samples, utilities) -> None:
        samples = np.asarray(samples, dtype=float)
        utilities = np.asarray(utilities, dtype=float)
        if samples.ndim != 2 or samples.shape[1] != self.dim:
            raise ValueError(f"samples must be (n, {self.dim})")
        if utilities.shape != (samples.shape[0],):
            raise ValueError("one utility per sample required")
        self._update(samples, utilities)
        self.generation_index += 1

    def _update(self, samples, utilities):
        raise NotImplementedError


class OpenES(Strategy):
    """Fixed isotropic noise; mean follows an Adam-smoothed gradient estimate."""

    name = "openes"

    def __init__(self, mean, sigma=0.25, popsize=50, lr=0.01, beta1=0.99, beta2=0.999):
        super().__init__(mean, sigma, popsize)
        self.adam = AdamState(self.dim, lr, beta1, beta2)
        self._pdf = isotropic(self.mean, self.sigma0)

    def gradient(self, samples, utilities) -> np.ndarray:
        n = samples.shape[0]
        eps = (samples - self.mean) / self.sigma0
        return utilities @ eps / (n * self.sigma0)

    def _update(self, samples, utilities):
        self.mean = self.mean + adam_step(self.adam, self.gradient(samples, utilities))
        self._pdf = isotropic(self.mean, self.sigma0)


class SNES(Strategy):
    """Separable NES: diagonal Gaussian, natural gradients fed through Adam.

    The mean and the log standard deviations each get their own Adam state
    with the same hyper-parameters.
    """

    name = "snes"

    def __init__(self, mean, sigma=0.25, popsize=50, lr=0.01, beta1=0.99, beta2=0.999):
        super().__init__(mean, sigma, popsize)
        self.sigma = np.full(self.dim, self.sigma0)
        self.adam = AdamState(self.dim, lr, beta1, beta2)
        self.adam_sigma = AdamState(self.dim, lr, beta1, beta2)
        self._pdf = diagonal(self.mean, self.sigma**2)

    def gradients(self, samples, utilities) -> tuple[np.ndarray, np.ndarray]:
        n = samples.shape[0]
        s = (samples - self.mean) / self.sigma
        grad_mu = self.sigma * (utilities @ s) / n
        grad_log_sigma = utilities @ (s * s - 1.0) / n
        return grad_mu, grad_log_sigma

    def _update(self, samples, utilities):
        grad_mu, grad_ls = self.gradients(samples, utilities)
        self.mean = self.mean + adam_step(self.adam, grad_mu)
        self.sigma = self.sigma * np.exp(adam_step(self.adam_sigma, grad_ls))
        self._pdf = diagonal(self.mean, self.sigma**2)


class CEM(Strategy):
    """Cross-entropy method with a decaying additive variance."""

    name = "cem"

    def __init__(self, mean, sigma=0.25, popsize=50, elite_count=None,
                 extra_variance=0.01, extra_decay=0.995, extra_floor=1e-6):
        super().__init__(mean, sigma, popsize)
        self.elite_count = elite_count or popsize // 2
        self.variances = np.full(self.dim, self.sigma0**2)
        self.extra_variance = float(extra_variance)
        self.extra_decay = float(extra_decay)
        self.extra_floor = float(extra_floor)
        self._pdf = diagonal(self.mean, self.variances)

    def _update(self, samples, utilities):
        ke = min(self.elite_count, samples.shape[0])
        elite = samples[np.argsort(-utilities, kind="stable")[:ke]]
        self.mean = elite.mean(axis=0)
        self.variances = np.mean((elite - self.mean) ** 2, axis=0) + self.extra_variance
        self.extra_variance = max(self.extra_floor, self.extra_variance * self.extra_decay)
        self._pdf = diagonal(self.mean, self.variances)


class CMAES(Strategy):
    """(mu/mu_w, lambda)-CMA-ES with the usual default constants."""

    name = "cmaes"

    def __init__(self, mean, sigma=0.25, popsize=50, elite_count=None):
        super().__init__(mean, sigma, popsize)
        d = self.dim
        mu = elite_count or popsize // 2
        self.elite_count = mu
        w = np.log(mu + 0.5) - np.log(np.arange(1, mu + 1))
        self.weights = w / w.sum()
        self.mueff = 1.0 / np.sum(self.weights**2)
        mueff = self.mueff
        self.cs = (mueff + 2.0) / (d + mueff + 5.0)
        self.ds = 1.0 + 2.0 * max(0.0, np.sqrt((mueff - 1.0) / (d + 1.0)) - 1.0) + self.cs
        self.cc = (4.0 + mueff / d) / (d + 4.0 + 2.0 * mueff / d)
        self.c1 = 2.0 / ((d + 1.3) ** 2 + mueff)
        self.cmu = min(1.0 - self.c1,
                       2.0 * (mueff - 2.0 + 1.0 / mueff) / ((d + 2.0) ** 2 + mueff))
        self.chi_n = np.sqrt(d) * (1.0 - 1.0 / (4.0 * d) + 1.0 / (21.0 * d * d))
        self.step_size = self.sigma0
        self.C = np.eye(d)
        self.ps = np.zeros(d)
        self.pc = np.zeros(d)
        self._refresh()

    def _refresh(self):
        self.C = 0.5 * (self.C + self.C.T)
        evals, evecs = np.linalg.eigh(self.C)
        evals = np.maximum(evals, 1e-300)
        self._inv_sqrt_C = (evecs / np.sqrt(evals)) @ evecs.T
        self._pdf = GaussianPdf(
            self.mean, FullCholesky.from_covariance(self.step_size**2 * self.C))

    def _update(self, samples, utilities):
        d = self.dim
        mu = min(self.elite_count, samples.shape[0])
        w = self.weights[:mu] / self.weights[:mu].sum()
        idx = np.argsort(-utilities, kind="stable")[:mu]
        y = (samples[idx] - self.mean) / self.step_size
        y_w = w @ y
        self.mean = self.mean + self.step_size * y_w

        self.ps = (1.0 - self.cs) * self.ps + np.sqrt(
            self.cs * (2.0 - self.cs) * self.mueff) * (self._inv_sqrt_C @ y_w)
        ps_norm = np.linalg.norm(self.ps)
        g = self.generation_index + 1
        hsig = ps_norm / np.sqrt(1.0 - (1.0 - self.cs) ** (2 * g)) < (
            1.4 + 2.0 / (d + 1.0)) * self.chi_n
        self.pc = (1.0 - self.cc) * self.pc + hsig * np.sqrt(
            self.cc * (2.0 - self.cc) * self.mueff) * y_w

        delta_h = (1.0 - hsig) * self.cc * (2.0 - self.cc)
        rank_mu = (y.T * w) @ y
        self.C = ((1.0 - self.c1 - self.cmu) * self.C
                  + self.c1 * (np.outer(self.pc, self.pc) + delta_h * self.C)
                  + self.cmu * rank_mu)
        self.step_size *= np.exp((self.cs / self.ds) * (ps_norm / self.chi_n - 1.0))
        self._refresh()


_REGISTRY = {cls.name: cls for cls in (OpenES, SNES, CEM, CMAES)}


def make_strategy(algorithm: str, mean, sigma=0.25, popsize=50, lr=0.01,
                  beta1=0.99, beta2=0.999, elite_count=None, extra_variance=0.01,
                  extra_decay=0.995, extra_floor=1e-6) -> Strategy:
    try:
        cls = _REGISTRY[algorithm.lower()]
    except KeyError:
        raise ValueError(f"unknown algorithm {algorithm!r}; choose from {ALGORITHMS}") from None
    if cls in (OpenES, SNES):
        return cls(mean, sigma, popsize, lr=lr, beta1=beta1, beta2=beta2)
    if cls is CEM:
        return cls(mean, sigma, popsize, elite_count, extra_variance, extra_decay, extra_floor)
    return cls(mean, sigma, popsize, elite_count)
