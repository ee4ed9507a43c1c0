import copy

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from impmix.gaussian import sample
from impmix.strategies import (CEM, CMAES, SNES, AdamState, OpenES, adam_step, make_strategy,
                               rank_transform, shape_fitness, weight_decay_penalty)


# -- shaping ------------------------------------------------------------------

def test_rank_transform_examples():
    assert np.allclose(rank_transform([3.0, 1.0, 2.0]), [0.5, -0.5, 0.0])
    assert np.allclose(rank_transform([7.0] * 4), [-0.5, -1 / 6, 1 / 6, 0.5])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(-1000, 1000), min_size=2, max_size=40))
def test_rank_transform_monotone_invariant(values):
    f = np.array(values, dtype=float)
    assert np.array_equal(rank_transform(f), rank_transform(f**3 + 5 * f - 2))
    r = rank_transform(f)
    assert r.min() == -0.5 and r.max() == 0.5
    assert abs(r.sum()) < 1e-9


def test_rank_transform_needs_two():
    with pytest.raises(ValueError):
        rank_transform([1.0])


def test_weight_decay_example():
    assert weight_decay_penalty([1.0, 1.0, 1.0, 1.0]) == pytest.approx(-0.2)
    rows = np.array([[1.0, 1.0, 1.0, 1.0], [0.0, 0.0, 0.0, 2.0]])
    assert np.allclose(weight_decay_penalty(rows), [-0.2, -0.2])


def test_decay_breaks_ties_toward_small_norm():
    samples = np.array([[2.0, 0.0], [0.5, 0.0], [1.0, 0.0]])
    shaped = shape_fitness([200.0, 200.0, 200.0], samples)
    assert np.argmax(shaped.utilities) == 1 and np.argmin(shaped.utilities) == 0


# -- Adam ---------------------------------------------------------------------

def test_adam_without_momentum_is_sign_step():
    st_ = AdamState(3, lr=0.1, beta1=0.0, beta2=0.0)
    step = adam_step(st_, np.array([2.0, -0.5, 1e-3]))
    assert np.allclose(step, 0.1 * np.sign([2.0, -0.5, 1e-3]), atol=1e-4)


def test_adam_zero_gradient_no_move():
    st_ = AdamState(4)
    for _ in range(5):
        assert np.all(adam_step(st_, np.zeros(4)) == 0.0)


def test_adam_matches_hand_rolled():
    rng = np.random.default_rng(0)
    grads = rng.normal(size=(10, 3))
    st_ = AdamState(3, lr=0.01, beta1=0.99, beta2=0.999)
    m = [0.0] * 3
    v = [0.0] * 3
    for t, g in enumerate(grads, start=1):
        got = adam_step(st_, g)
        for i in range(3):
            m[i] = 0.99 * m[i] + 0.01 * g[i]
            v[i] = 0.999 * v[i] + 0.001 * g[i] ** 2
            want = 0.01 * (m[i] / (1 - 0.99**t)) / ((v[i] / (1 - 0.999**t)) ** 0.5 + 1e-8)
            assert got[i] == pytest.approx(want, abs=1e-10)


def test_adam_shape_check():
    with pytest.raises(ValueError):
        adam_step(AdamState(3), np.zeros(2))


# -- OpenES ---------------------------------------------------------------------

def test_openes_zero_utilities_keep_mean():
    es = OpenES(np.ones(5))
    z = sample(es.ask(), np.random.default_rng(1), 10)
    es.tell(z, np.zeros(10))
    assert np.array_equal(es.mean, np.ones(5))
    assert es.generation_index == 1


def test_openes_antithetic_pair_gradient():
    es = OpenES(np.zeros(3), sigma=0.5)
    eps = np.array([1.0, -2.0, 0.5])
    z = np.stack([0.5 * eps, -0.5 * eps])
    assert np.allclose(es.gradient(z, np.array([0.5, -0.5])), eps / (2 * 0.5))


def test_openes_gradient_direction_sphere():
    # true gradient of -||z||^2 at (1, 1) points along -(1, 1)
    true = -np.array([1.0, 1.0]) / np.sqrt(2)
    angles = []
    for seed in range(100):
        rng = np.random.default_rng(seed)
        es = OpenES(np.array([1.0, 1.0]), sigma=0.25)
        z = sample(es.ask(), rng, 1000)
        g = es.gradient(z, -np.sum(z * z, axis=1))
        angles.append(np.degrees(np.arccos(np.clip(g @ true / np.linalg.norm(g), -1, 1))))
    assert np.mean(angles) < 15


def test_openes_keeps_sigma_fixed():
    es = OpenES(np.zeros(3), sigma=0.25)
    rng = np.random.default_rng(3)
    for _ in range(5):
        z = sample(es.ask(), rng, 8)
        es.tell(z, rank_transform(rng.normal(size=8)))
    assert np.allclose(es.ask().std(), 0.25)


# -- SNES -----------------------------------------------------------------------

def test_snes_zero_utilities_keep_state():
    es = SNES(np.ones(4))
    z = sample(es.ask(), np.random.default_rng(1), 10)
    es.tell(z, np.zeros(10))
    assert np.array_equal(es.mean, np.ones(4))
    assert np.array_equal(es.sigma, np.full(4, 0.25))


def test_snes_sigma_grows_when_outer_samples_win():
    es = SNES(np.zeros(3))
    rng = np.random.default_rng(4)
    for _ in range(20):
        z = sample(es.ask(), rng, 50)
        es.tell(z, rank_transform(np.sum(z * z, axis=1)))
    assert np.all(es.sigma > 0.25)


def test_snes_gradients_match_finite_differences():
    rng = np.random.default_rng(5)
    c = np.array([1.0, -0.5])
    es = SNES(np.zeros(2))
    es.sigma = np.array([0.3, 0.6])
    es._pdf = __import__("impmix").gaussian.diagonal(es.mean, es.sigma**2)

    def expected_f(mu, log_sigma):  # E[-||x - c||^2] for x ~ N(mu, diag(sigma^2))
        return -np.sum((mu - c) ** 2) - np.sum(np.exp(2 * log_sigma))

    h = 1e-5
    mu, ls = es.mean.copy(), np.log(es.sigma)
    fd_mu = np.array([(expected_f(mu + h * e, ls) - expected_f(mu - h * e, ls)) / (2 * h)
                      for e in np.eye(2)])
    fd_ls = np.array([(expected_f(mu, ls + h * e) - expected_f(mu, ls - h * e)) / (2 * h)
                      for e in np.eye(2)])
    z = sample(es.ask(), rng, 10_000)
    g_mu, g_ls = es.gradients(z, -np.sum((z - c) ** 2, axis=1))
    cos = lambda a, b: a @ b / np.linalg.norm(a) / np.linalg.norm(b)
    assert cos(g_mu, es.sigma**2 * fd_mu) > 0.9
    assert cos(g_ls, fd_ls) > 0.9


# -- CEM -------------------------------------------------------------------------

def test_cem_identical_elites():
    es = CEM(np.zeros(2), popsize=6)
    z = np.tile([0.3, -0.7], (6, 1))
    es.tell(z, rank_transform(np.arange(6.0)))
    assert np.allclose(es.mean, [0.3, -0.7])
    assert np.allclose(es.variances, 0.01)
    assert es.extra_variance == pytest.approx(0.01 * 0.995)


def test_cem_all_elite_matches_two_pass():
    rng = np.random.default_rng(6)
    z = rng.normal(size=(8, 3))
    es = CEM(np.zeros(3), popsize=8, elite_count=8)
    es.tell(z, rank_transform(rng.normal(size=8)))
    mean = [sum(z[i, j] for i in range(8)) / 8 for j in range(3)]
    var = [sum((z[i, j] - mean[j]) ** 2 for i in range(8)) / 8 + 0.01 for j in range(3)]
    assert np.allclose(es.mean, mean, atol=1e-12)
    assert np.allclose(es.variances, var, atol=1e-12)


def test_cem_extra_variance_floor():
    es = CEM(np.zeros(1), popsize=4, extra_variance=2e-6, extra_decay=0.1)
    z = np.zeros((4, 1))
    es.tell(z, rank_transform(np.arange(4.0)))
    es.tell(z, rank_transform(np.arange(4.0)))
    assert es.extra_variance == 1e-6


def test_cem_picks_top_utilities():
    es = CEM(np.zeros(1), popsize=4, elite_count=2)
    z = np.array([[0.0], [1.0], [2.0], [3.0]])
    es.tell(z, np.array([0.5, -0.5, 1 / 6, -1 / 6]))
    assert es.mean[0] == pytest.approx(1.0)


# -- CMA-ES ------------------------------------------------------------------------

class TutorialCMA:
    """Straight transcription of the standard (mu/mu_w, lambda)-CMA-ES loop using B and D."""

    def __init__(self, xmean, sigma, lam):
        n = len(xmean)
        self.n, self.lam = n, lam
        self.xmean = np.array(xmean, float)
        self.sigma = sigma
        self.mu = lam // 2
        weights = np.array([np.log(self.mu + 0.5) - np.log(i + 1) for i in range(self.mu)])
        self.weights = weights / weights.sum()
        self.mueff = weights.sum() ** 2 / np.sum(weights**2)
        self.cc = (4 + self.mueff / n) / (n + 4 + 2 * self.mueff / n)
        self.cs = (self.mueff + 2) / (n + self.mueff + 5)
        self.c1 = 2 / ((n + 1.3) ** 2 + self.mueff)
        self.cmu = min(1 - self.c1, 2 * (self.mueff - 2 + 1 / self.mueff) / ((n + 2) ** 2 + self.mueff))
        self.damps = 1 + 2 * max(0, np.sqrt((self.mueff - 1) / (n + 1)) - 1) + self.cs
        self.pc = np.zeros(n)
        self.ps = np.zeros(n)
        self.B = np.eye(n)
        self.D = np.ones(n)
        self.C = np.eye(n)
        self.invsqrtC = np.eye(n)
        self.chiN = n**0.5 * (1 - 1 / (4 * n) + 1 / (21 * n**2))
        self.counteval = 0

    def tell(self, arx, fitness_to_max):
        n = self.n
        self.counteval += self.lam
        order = np.argsort(-np.asarray(fitness_to_max), kind="stable")
        arx = np.asarray(arx)[order]
        xold = self.xmean.copy()
        self.xmean = self.weights @ arx[: self.mu]
        self.ps = (1 - self.cs) * self.ps + np.sqrt(self.cs * (2 - self.cs) * self.mueff) * (
            self.invsqrtC @ (self.xmean - xold)) / self.sigma
        hsig = (np.linalg.norm(self.ps) / np.sqrt(1 - (1 - self.cs) ** (2 * self.counteval / self.lam))
                / self.chiN < 1.4 + 2 / (n + 1))
        self.pc = (1 - self.cc) * self.pc + hsig * np.sqrt(self.cc * (2 - self.cc) * self.mueff) * (
            self.xmean - xold) / self.sigma
        artmp = (arx[: self.mu] - xold) / self.sigma
        self.C = ((1 - self.c1 - self.cmu) * self.C
                  + self.c1 * (np.outer(self.pc, self.pc) + (1 - hsig) * self.cc * (2 - self.cc) * self.C)
                  + self.cmu * artmp.T @ np.diag(self.weights) @ artmp)
        self.sigma *= np.exp((self.cs / self.damps) * (np.linalg.norm(self.ps) / self.chiN - 1))
        self.C = np.triu(self.C) + np.triu(self.C, 1).T
        d2, self.B = np.linalg.eigh(self.C)
        self.D = np.sqrt(d2)
        self.invsqrtC = self.B @ np.diag(1 / self.D) @ self.B.T


def test_cmaes_matches_tutorial_transcription():
    rng = np.random.default_rng(7)
    n, lam = 5, 12
    es = CMAES(np.full(n, 0.5), sigma=0.3, popsize=lam)
    ref = TutorialCMA(np.full(n, 0.5), 0.3, lam)
    for _ in range(6):
        z = sample(es.ask(), rng, lam)
        f = -np.sum(z * z, axis=1)
        es.tell(z, rank_transform(f))
        ref.tell(z, f)
        assert np.allclose(es.mean, ref.xmean, atol=1e-8)
        assert es.step_size == pytest.approx(ref.sigma, abs=1e-8)
        assert np.allclose(es.C, ref.C, atol=1e-8)
        assert np.allclose(es.ps, ref.ps, atol=1e-8)
        assert np.allclose(es.pc, ref.pc, atol=1e-8)
    assert np.allclose(es.ask().covariance(), es.step_size**2 * es.C, atol=1e-8)


def test_cmaes_sphere_best_fitness_improves():
    wins = 0
    for seed in range(10):
        rng = np.random.default_rng(seed)
        es = CMAES(np.full(5, 3.0), sigma=0.25, popsize=50)
        record = []
        for _ in range(10):
            z = sample(es.ask(), rng, 50)
            f = -np.sum(z * z, axis=1)
            es.tell(z, rank_transform(f))
            record.append(max(record[-1] if record else -np.inf, f.max()))
        wins += all(b >= a for a, b in zip(record, record[1:])) and record[-1] > record[0]
    assert wins >= 9


def test_cmaes_equal_utilities_symmetric_samples():
    ps = []
    for seed in range(200):
        rng = np.random.default_rng(seed)
        es = CMAES(np.zeros(3), popsize=10)
        half = sample(es.ask(), rng, 5)
        z = np.concatenate([half, -half])
        es.tell(z, np.zeros(10))
        # stable sort keeps input order for ties: elite = first five rows
        w = es.weights
        assert np.allclose(es.mean, w @ z[:5])
        ps.append(es.ps)
    ps = np.array(ps)
    se = ps.std(axis=0, ddof=1) / np.sqrt(len(ps))
    assert np.all(np.abs(ps.mean(axis=0)) < 4 * se)


# -- shared behaviour -------------------------------------------------------------

@pytest.mark.parametrize("alg", ["openes", "snes", "cem", "cmaes"])
def test_ask_is_side_effect_free(alg):
    es = make_strategy(alg, np.zeros(4), sigma=0.25, popsize=10)
    a = es.ask()
    state = copy.deepcopy(es.__dict__)
    b = es.ask()
    assert a == b
    assert np.allclose(a.std(), 0.25)
    for k, v in state.items():
        if isinstance(v, np.ndarray):
            assert np.array_equal(v, es.__dict__[k])


def test_strategy_state_invariants():
    rng = np.random.default_rng(9)
    es = {a: make_strategy(a, np.ones(4), popsize=20) for a in ("openes", "snes", "cem")}
    for _ in range(30):
        for name, s in es.items():
            z = sample(s.ask(), rng, 20)
            s.tell(z, rank_transform(-np.sum(z * z, axis=1)))
            if name == "openes":
                assert np.allclose(s.ask().std(), 0.25)
            elif name == "snes":
                assert np.all(s.sigma > 0)
            else:
                assert np.all(s.variances >= s.extra_variance / s.extra_decay - 1e-15)


@pytest.mark.parametrize("alg", ["openes", "snes", "cem", "cmaes"])
def test_tell_shape_errors(alg):
    es = make_strategy(alg, np.zeros(4), popsize=10)
    with pytest.raises(ValueError):
        es.tell(np.zeros((10, 3)), np.zeros(10))
    with pytest.raises(ValueError):
        es.tell(np.zeros((10, 4)), np.zeros(9))


def test_unknown_algorithm():
    with pytest.raises(ValueError):
        make_strategy("pso", np.zeros(2))


@pytest.mark.parametrize("alg", ["openes", "snes", "cem", "cmaes"])
def test_updates_depend_on_ranks_only(alg):
    rng = np.random.default_rng(8)
    a = make_strategy(alg, np.zeros(4), popsize=12)
    b = make_strategy(alg, np.zeros(4), popsize=12)
    for _ in range(5):
        z = sample(a.ask(), rng, 12)
        f = -np.sum(z * z, axis=1)
        a.tell(z, shape_fitness(f, z, 0.0).utilities)
        b.tell(z, shape_fitness(np.exp(f) * 7 - 3, z, 0.0).utilities)
    assert np.array_equal(a.mean, b.mean)
    assert a.ask() == b.ask()


@pytest.mark.slow
@pytest.mark.parametrize("alg", ["openes", "snes", "cem", "cmaes"])
def test_sphere_convergence(alg):
    # starting point on the diagonal; Adam moves each coordinate ~lr per step,
    # so lopsided starts with the same norm need proportionally longer
    hits = 0
    for seed in range(5):
        rng = np.random.default_rng(seed)
        mu0 = np.full(10, 5 / np.sqrt(10))
        es = make_strategy(alg, mu0, sigma=0.25, popsize=50)
        for _ in range(300):
            z = sample(es.ask(), rng, 50)
            es.tell(z, rank_transform(-np.sum(z * z, axis=1)))
            if np.linalg.norm(es.mean) < 0.5:
                hits += 1
                break
    assert hits >= 4
