"""Episode throughput of the compiled kernel against the pure-Python fallback.

    python benchmarks/bench_rollout.py [--episodes 300]

Both backends run the same parameter vectors and episode seeds; the script
also checks that they return identical results.
"""

import argparse
import time

import numpy as np

from impmix.envs import ENV_IDS, _pykernel, episode_rng, make_env, rollout

try:
    from impmix.envs import _ckernel
except ImportError:
    _ckernel = None


def bench(env_id: str, backend, params, episodes: int):
    env = make_env(env_id)
    t0 = time.perf_counter()
    out = [rollout(env, params[i], episode_rng(0, 0, i), backend=backend) for i in range(episodes)]
    dt = time.perf_counter() - t0
    steps = sum(r.steps for r in out)
    return out, dt, steps


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--episodes", type=int, default=300)
    args = ap.parse_args()
    if _ckernel is None:
        print("compiled kernel not built; only the Python backend is available")
    print(f"{'env':<24}{'backend':<9}{'episodes/s':>12}{'steps/s':>12}{'speedup':>9}")
    for env_id in ENV_IDS:
        d = make_env(env_id).policy.d
        # scaled so a fair share of episodes run long enough to matter
        params = np.random.default_rng(1).normal(scale=0.5, size=(args.episodes, d))
        py, t_py, steps = bench(env_id, _pykernel, params, args.episodes)
        print(f"{env_id:<24}{'python':<9}{args.episodes / t_py:>12.0f}{steps / t_py:>12.0f}{'':>9}")
        if _ckernel is not None:
            cy, t_cy, _ = bench(env_id, _ckernel, params, args.episodes)
            assert cy == py, "backends disagree"
            print(f"{'':<24}{'cython':<9}{args.episodes / t_cy:>12.0f}{steps / t_cy:>12.0f}"
                  f"{t_py / t_cy:>8.1f}x")


if __name__ == "__main__":
    main()
