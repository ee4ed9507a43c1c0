"""Classic-control benchmarks and the fixed MLP policy.

Episodes run inside a small kernel: a compiled Cython extension when it was
built, otherwise an equivalent pure-Python module. Set the environment
variable ``IMPMIX_BACKEND=python`` before import to force the fallback.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _pykernel

if os.environ.get("IMPMIX_BACKEND", "").lower() == "python":
    _kernel = _pykernel
    BACKEND = "python"
else:
    try:
        from . import _ckernel as _kernel
        BACKEND = "cython"
    except ImportError:
        _kernel = _pykernel
        BACKEND = "python"

ENV_IDS = ("CartPole", "Acrobot", "ContinuousCartPole", "ContinuousCartPoleHard")
_KIND = {
    "CartPole": _pykernel.CARTPOLE,
    "Acrobot": _pykernel.ACROBOT,
    "ContinuousCartPole": _pykernel.CONT_CARTPOLE,
    "ContinuousCartPoleHard": _pykernel.CONT_CARTPOLE_HARD,
}


@dataclass(frozen=True)
class PolicySpec:
    obs_dim: int
    out_dim: int
    hidden: tuple[int, int] = (8, 8)
    discrete: bool = True

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (self.obs_dim, *self.hidden, self.out_dim)

    @property
    def d(self) -> int:
        sizes = self.layer_sizes
        return sum((a + 1) * b for a, b in zip(sizes[:-1], sizes[1:]))


@dataclass(frozen=True)
class CartPoleConstants:
    gravity: float = 9.8
    masscart: float = 1.0
    masspole: float = 0.1
    half_length: float = 0.5
    force_mag: float = 10.0
    tau: float = 0.02
    theta_threshold_deg: float = 15.0
    x_threshold: float = 2.4

    def packed(self) -> np.ndarray:
        return np.array([self.gravity, self.masscart, self.masspole, self.half_length,
                         self.force_mag, self.tau, math.radians(self.theta_threshold_deg),
                         self.x_threshold])


@dataclass(frozen=True)
class AcrobotConstants:
    dt: float = 0.2
    link_length_1: float = 1.0
    link_mass_1: float = 1.0
    link_mass_2: float = 1.0
    link_com_1: float = 0.5
    link_com_2: float = 0.5
    link_moi_1: float = 1.0
    link_moi_2: float = 1.0
    gravity: float = 9.8
    max_vel_1: float = 4 * math.pi
    max_vel_2: float = 9 * math.pi
    torque_mag: float = 1.0

    def packed(self) -> np.ndarray:
        return np.array([self.dt, self.link_length_1, self.link_mass_1, self.link_mass_2,
                         self.link_com_1, self.link_com_2, self.link_moi_1, self.link_moi_2,
                         self.gravity, self.max_vel_1, self.max_vel_2, self.torque_mag])


@dataclass(frozen=True)
class EnvSpec:
    id: str
    obs_dim: int
    action_kind: str
    constants: CartPoleConstants | AcrobotConstants
    max_steps: int = 200
    init_scale: float = 0.05
    _packed: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_packed", np.ascontiguousarray(self.constants.packed()))

    @property
    def kind(self) -> int:
        return _KIND[self.id]

    @property
    def policy(self) -> PolicySpec:
        out = {"discrete-2": 2, "discrete-3": 3, "continuous": 1}[self.action_kind]
        return PolicySpec(self.obs_dim, out, discrete=self.action_kind != "continuous")

    @property
    def return_range(self) -> tuple[float, float]:
        if self.id == "Acrobot":
            return (-float(self.max_steps), -1.0)
        return (1.0, float(self.max_steps))


def make_env(env_id: str, gym_compat: bool = False, max_steps: int = 200,
             **constants) -> EnvSpec:
    """Build an :class:`EnvSpec`.

    ``gym_compat`` switches the cart-pole angle limit from 15 to 12 degrees.
    Extra keyword arguments override physical constants.
    """
    if env_id not in _KIND:
        raise ValueError(f"unknown env {env_id!r}; choose from {ENV_IDS}")
    if env_id == "Acrobot":
        return EnvSpec(env_id, 6, "discrete-3", AcrobotConstants(**constants),
                       max_steps, init_scale=0.1)
    if gym_compat:
        constants.setdefault("theta_threshold_deg", 12.0)
    kind = "discrete-2" if env_id == "CartPole" else "continuous"
    return EnvSpec(env_id, 4, kind, CartPoleConstants(**constants), max_steps)


@dataclass(frozen=True)
class EpisodeResult:
    total_return: float
    steps: int
    timed_out: bool

    @property
    def terminated_by(self) -> str:
        return "timeout" if self.timed_out else "condition"


def policy_forward(params, spec: PolicySpec, obs):
    """Action for one observation: an int for discrete policies, a force
    multiplier in [-1, 1] for continuous ones."""
    params = np.asarray(params, dtype=float)
    if params.shape != (spec.d,):
        raise ValueError(f"expected {spec.d} parameters, got {params.shape}")
    out = _pykernel.mlp_forward(params.tolist(), list(map(float, obs)), spec.obs_dim,
                                spec.hidden[0], spec.hidden[1], spec.out_dim)
    if spec.discrete:
        return _pykernel.argmax(out)
    return min(1.0, max(-1.0, math.tanh(out[0])))


def policy_logits(params, spec: PolicySpec, obs) -> np.ndarray:
    params = np.asarray(params, dtype=float)
    out = _pykernel.mlp_forward(params.tolist(), list(map(float, obs)), spec.obs_dim,
                                spec.hidden[0], spec.hidden[1], spec.out_dim)
    return np.array(out)


def cartpole_step(state, action, spec: EnvSpec):
    """Advance the cart-pole one step. ``action`` is 0/1 for the discrete
    env or a value in [-1, 1] for the continuous ones."""
    s = [float(v) for v in state]
    c = spec._packed.tolist()
    if spec.action_kind == "continuous":
        force = min(1.0, max(-1.0, float(action))) * c[4]
    else:
        force = c[4] if int(action) == 1 else -c[4]
    done = _pykernel.cartpole_step(s, force, c)
    return np.array(s), 1.0, done


def acrobot_step(state, action: int, spec: EnvSpec):
    """Advance the acrobot one step; ``action`` in {0, 1, 2} maps to torque -1/0/+1."""
    s = [float(v) for v in state]
    c = spec._packed.tolist()
    done = _pykernel.acrobot_step(s, (int(action) - 1) * c[11], c)
    return np.array(s), -1.0, done


def acrobot_observation(state) -> np.ndarray:
    t1, t2, d1, d2 = state
    return np.array([math.cos(t1), math.sin(t1), math.cos(t2), math.sin(t2), d1, d2])


def initial_state(env: EnvSpec, rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(-env.init_scale, env.init_scale, size=4)


def rollout(env: EnvSpec, params, episode_rng: np.random.Generator,
            backend=None) -> EpisodeResult:
    """Run one episode of the deterministic policy from a random initial state."""
    pol = env.policy
    params = np.ascontiguousarray(params, dtype=float)
    if params.shape != (pol.d,):
        raise ValueError(f"{env.id} policy needs {pol.d} parameters, got {params.shape}")
    state0 = np.ascontiguousarray(initial_state(env, episode_rng))
    kernel = backend or _kernel
    total, steps, timed_out = kernel.episode(env.kind, params, state0, env._packed,
                                             env.max_steps, pol.hidden[0], pol.hidden[1],
                                             pol.out_dim)
    return EpisodeResult(float(total), int(steps), bool(timed_out))


def episode_rng(seed: int, generation: int, index: int) -> np.random.Generator:
    """Counter-based stream for one episode, independent of evaluation order."""
    return np.random.default_rng(np.random.SeedSequence([seed, generation, index]))


def evaluate(env: EnvSpec, params_matrix, seed: int, generation: int, indices,
             threads: int = 1) -> np.ndarray:
    """Episode returns for the given rows; row ``j`` uses stream (seed, generation, indices[j])."""
    params_matrix = np.asarray(params_matrix, dtype=float)
    indices = list(indices)

    def one(j):
        return rollout(env, params_matrix[j], episode_rng(seed, generation, indices[j])).total_return

    if threads <= 1 or len(indices) <= 1:
        return np.array([one(j) for j in range(len(indices))])
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return np.array(list(pool.map(one, range(len(indices)))))


def acrobot_energy(state, spec: EnvSpec | None = None) -> float:
    """Total mechanical energy of the acrobot (potential zero at the pivot)."""
    c = (spec.constants if spec is not None else AcrobotConstants())
    t1, t2, d1, d2 = state
    l1, lc1, lc2 = c.link_length_1, c.link_com_1, c.link_com_2
    m1, m2, i1, i2, g = c.link_mass_1, c.link_mass_2, c.link_moi_1, c.link_moi_2, c.gravity
    kin = (0.5 * m1 * lc1**2 * d1**2 + 0.5 * i1 * d1**2
           + 0.5 * m2 * (l1**2 * d1**2 + lc2**2 * (d1 + d2) ** 2
                         + 2 * l1 * lc2 * d1 * (d1 + d2) * math.cos(t2))
           + 0.5 * i2 * (d1 + d2) ** 2)
    pot = -g * (m1 * lc1 * math.cos(t1) + m2 * (l1 * math.cos(t1) + lc2 * math.cos(t1 + t2)))
    return kin + pot


__all__ = [
    "BACKEND", "ENV_IDS", "PolicySpec", "EnvSpec", "EpisodeResult", "CartPoleConstants",
    "AcrobotConstants", "make_env", "policy_forward", "policy_logits", "cartpole_step",
    "acrobot_step", "acrobot_observation", "initial_state", "rollout", "episode_rng",
    "evaluate", "acrobot_energy",
]
