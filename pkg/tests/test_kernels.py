import os
import subprocess
import sys

import numpy as np
import pytest

from aamdp import _fallback, kernels

try:
    from aamdp import _kernels
except ImportError:  # extension not built
    _kernels = None

needs_ext = pytest.mark.skipif(_kernels is None, reason="compiled extension not built")


def _inputs(seed, S=4, K=3, A=2):
    rng = np.random.default_rng(seed)
    blocks = rng.dirichlet(np.ones(S), size=(S, K, A))
    rewards = rng.normal(size=(S, A, S))
    v = rng.normal(size=S)
    return blocks, rewards, v


def test_bellman_q_definition():
    blocks, rewards, v = _inputs(0)
    q = kernels.bellman_q(blocks, rewards, v, 0.9, impl=_fallback)
    direct = np.einsum("skat,sat->ska", blocks, rewards + 0.9 * v[None, None, :])
    np.testing.assert_allclose(q, direct, atol=1e-14)


@needs_ext
@pytest.mark.parametrize("seed", range(5))
def test_backends_agree_on_bellman_q(seed):
    blocks, rewards, v = _inputs(seed)
    a = kernels.bellman_q(blocks, rewards, v, 0.7, impl=_fallback)
    b = kernels.bellman_q(blocks, rewards, v, 0.7, impl=_kernels)
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-13)


@needs_ext
@pytest.mark.parametrize("seed", range(5))
def test_backends_agree_on_resampled_backward(seed):
    rng = np.random.default_rng(seed)
    S, K, n, T = 3, 4, 50, 12
    p_pi = rng.dirichlet(np.ones(S), size=(S, K))
    r_pi = rng.normal(size=(S, K))
    idx = rng.integers(0, K, size=(n, T, S)).astype(np.intp)
    a = kernels.resampled_backward(p_pi, r_pi, idx, 0.8, impl=_fallback)
    b = kernels.resampled_backward(p_pi, r_pi, idx, 0.8, impl=_kernels)
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-13)


def test_resampled_backward_single_scenario_is_truncated_value():
    S, T = 2, 40
    p = np.array([[[0.5, 0.5]], [[0.0, 1.0]]])
    r = np.array([[1.0], [0.0]])
    idx = np.zeros((1, T, S), dtype=np.intp)
    v = kernels.resampled_backward(p, r, idx, 0.5, impl=_fallback)
    # nominal value: v0 = 1 + 0.25 v0
    assert v[0, 0] == pytest.approx(4.0 / 3.0, abs=1e-10)


def test_pure_flag_selects_fallback():
    out = subprocess.run(
        [sys.executable, "-c", "from aamdp import kernels; print(kernels.BACKEND)"],
        env={**os.environ, "AAMDP_PURE": "1"},
        capture_output=True,
        text=True,
        check=True,
    )
    assert out.stdout.strip() == "python"
