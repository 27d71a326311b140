"""Numpy implementations of the hot loops; used when the compiled module is absent."""
import numpy as np


def bellman_q(blocks, rewards, v, gamma):
    """``Q[s, k, a] = sum_t blocks[s, k, a, t] * (rewards[s, a, t] + gamma * v[t])``."""
    target = rewards + gamma * v[None, None, :]
    return np.einsum("skat,sat->ska", blocks, target)


def resampled_backward(p_pi, r_pi, idx, gamma):
    """Truncated values under sampled kernel sequences.

    ``p_pi[s, k, t]`` and ``r_pi[s, k]`` are the policy-projected scenario rows,
    ``idx[n, T, s]`` the scenario drawn for state ``s`` at period ``T``.
    Returns ``v0[n, s]`` from the recursion ``v_T = 0``,
    ``v_t(s) = r_pi[s, k] + gamma * p_pi[s, k] @ v_{t+1}`` with ``k = idx[n, t, s]``.
    """
    n, horizon, S = idx.shape
    states = np.arange(S)
    v = np.zeros((n, S))
    for t in range(horizon - 1, -1, -1):
        k = idx[:, t, :]
        rows = p_pi[states, k]  # (n, S, S)
        v = r_pi[states, k] + gamma * np.einsum("nst,nt->ns", rows, v)
    return v
