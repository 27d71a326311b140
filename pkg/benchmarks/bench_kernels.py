"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Each case checks that both backends agree before timing them.
"""
import argparse
import time

import numpy as np

from aamdp import _fallback, kernels

try:
    from aamdp import _kernels
except ImportError:
    _kernels = None


def _best_of(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def bellman_case(rng, S, K, A):
    blocks = rng.dirichlet(np.ones(S), size=(S, K, A))
    rewards = rng.uniform(-1, 1, (S, A, S))
    v = rng.normal(size=S)
    return lambda impl: kernels.bellman_q(blocks, rewards, v, 0.9, impl=impl)


def backward_case(rng, S, K, n, horizon):
    p_pi = rng.dirichlet(np.ones(S), size=(S, K))
    r_pi = rng.uniform(-1, 1, (S, K))
    idx = rng.integers(0, K, size=(n, horizon, S))
    return lambda impl: kernels.resampled_backward(p_pi, r_pi, idx, 0.9, impl=impl)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    if _kernels is None:
        print("compiled extension not built; only the fallback is available")
        return 1
    rng = np.random.default_rng(0)
    cases = [
        ("bellman_q S=10 K=4 A=3", bellman_case(rng, 10, 4, 3)),
        ("bellman_q S=60 K=8 A=4", bellman_case(rng, 60, 8, 4)),
        ("resampled_backward S=2 n=20000 T=30", backward_case(rng, 2, 2000, 20_000, 30)),
        ("resampled_backward S=8 n=4096 T=60", backward_case(rng, 8, 4, 4096, 60)),
    ]
    print(f"{'case':40s} {'numpy ms':>10s} {'cython ms':>10s} {'speedup':>8s}")
    for name, run in cases:
        np.testing.assert_allclose(run(_kernels), run(_fallback), rtol=1e-12, atol=1e-12)
        t_py = _best_of(lambda: run(_fallback), args.repeat)
        t_cy = _best_of(lambda: run(_kernels), args.repeat)
        print(f"{name:40s} {1e3 * t_py:10.3f} {1e3 * t_cy:10.3f} {t_py / t_cy:8.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
