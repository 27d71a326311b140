"""Nominal MDP data and exact computations.

Kernels, policies and value functions are plain numpy arrays:

* kernel ``P[s, a, s']`` with rows on the simplex,
* policy ``pi[s, a]`` with rows on the simplex,
* value function ``v[s]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

SIMPLEX_TOL = 1e-12


class DimensionError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class MdpInstance:
    """States, actions, rewards ``r[s, a, s']``, discount and initial distribution."""

    rewards: np.ndarray
    discount: float
    initial_dist: np.ndarray
    state_names: tuple[str, ...] = field(default=())
    action_names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        r = np.asarray(self.rewards, dtype=float)
        if r.ndim != 3:
            raise DimensionError(f"rewards must be 3-d (S, A, S), got shape {r.shape}")
        object.__setattr__(self, "rewards", r)
        object.__setattr__(self, "initial_dist", np.asarray(self.initial_dist, dtype=float))
        object.__setattr__(self, "discount", float(self.discount))
        if not self.state_names:
            object.__setattr__(self, "state_names", tuple(f"s{i}" for i in range(r.shape[0])))
        if not self.action_names:
            object.__setattr__(self, "action_names", tuple(f"a{i}" for i in range(r.shape[1])))

    @property
    def n_states(self) -> int:
        return self.rewards.shape[0]

    @property
    def n_actions(self) -> int:
        return self.rewards.shape[1]

    @property
    def r_max(self) -> float:
        return float(np.max(np.abs(self.rewards))) if self.rewards.size else 0.0

    def value_bound(self) -> float:
        """Sup-norm bound ``R_max / (1 - gamma)`` on any value function."""
        return self.r_max / (1.0 - self.discount)

    def __eq__(self, other):
        if not isinstance(other, MdpInstance):
            return NotImplemented
        return (
            self.rewards.shape == other.rewards.shape
            and np.array_equal(self.rewards, other.rewards)
            and self.discount == other.discount
            and np.array_equal(self.initial_dist, other.initial_dist)
            and self.state_names == other.state_names
            and self.action_names == other.action_names
        )


def _simplex_rows_ok(m: np.ndarray, tol: float = SIMPLEX_TOL) -> bool:
    return bool(np.all(m >= 0.0) and np.all(np.abs(m.sum(axis=-1) - 1.0) <= tol))


def validate_instance(instance: MdpInstance, kernel: np.ndarray | None = None) -> list[str]:
    """Return the list of violated invariants; an empty list means the instance is valid."""
    problems = []
    S, A = instance.n_states, instance.n_actions
    if S < 1:
        problems.append("n_states must be positive")
    if A < 1:
        problems.append("n_actions must be positive")
    if instance.rewards.shape != (S, A, S):
        problems.append(f"rewards shape {instance.rewards.shape} != ({S}, {A}, {S})")
    if not np.all(np.isfinite(instance.rewards)):
        problems.append("rewards contain non-finite entries")
    if not (0.0 <= instance.discount < 1.0):
        problems.append(f"discount out of range: {instance.discount} not in [0, 1)")
    mu = instance.initial_dist
    if mu.shape != (S,):
        problems.append(f"initial_dist shape {mu.shape} != ({S},)")
    elif not (np.all(np.isfinite(mu)) and _simplex_rows_ok(mu)):
        problems.append("initial_dist not a probability vector")
    if len(instance.state_names) != S:
        problems.append("state_names length does not match n_states")
    if len(instance.action_names) != A:
        problems.append("action_names length does not match n_actions")
    if kernel is not None:
        problems.extend(kernel_problems(kernel, S, A))
    return problems


def kernel_problems(kernel: np.ndarray, n_states: int, n_actions: int) -> list[str]:
    kernel = np.asarray(kernel, dtype=float)
    if kernel.shape != (n_states, n_actions, n_states):
        return [f"kernel shape {kernel.shape} != ({n_states}, {n_actions}, {n_states})"]
    if not _simplex_rows_ok(kernel):
        return ["kernel rows are not probability vectors"]
    return []


def policy_problems(policy: np.ndarray, n_states: int, n_actions: int) -> list[str]:
    policy = np.asarray(policy, dtype=float)
    if policy.shape != (n_states, n_actions):
        return [f"policy shape {policy.shape} != ({n_states}, {n_actions})"]
    if not _simplex_rows_ok(policy):
        return ["policy rows are not probability vectors"]
    return []


def _check_dims(v, policy, kernel, instance):
    S, A = instance.n_states, instance.n_actions
    if v is not None and np.shape(v) != (S,):
        raise DimensionError(f"value function shape {np.shape(v)} != ({S},)")
    if np.shape(policy) != (S, A):
        raise DimensionError(f"policy shape {np.shape(policy)} != ({S}, {A})")
    if np.shape(kernel) != (S, A, S):
        raise DimensionError(f"kernel shape {np.shape(kernel)} != ({S}, {A}, {S})")


def deterministic_policy(actions, n_actions: int) -> np.ndarray:
    """One-hot policy matrix from a vector of action indices."""
    actions = np.asarray(actions, dtype=int)
    pi = np.zeros((actions.size, n_actions))
    pi[np.arange(actions.size), actions] = 1.0
    return pi


def policy_matrices(policy, kernel, instance: MdpInstance) -> tuple[np.ndarray, np.ndarray]:
    """``(P_pi, r_pi)`` with ``P_pi[s, s'] = sum_a pi P`` and ``r_pi[s]`` the one-step expected reward."""
    policy = np.asarray(policy, dtype=float)
    kernel = np.asarray(kernel, dtype=float)
    _check_dims(None, policy, kernel, instance)
    p_pi = np.einsum("sa,sat->st", policy, kernel)
    r_pi = np.einsum("sa,sat,sat->s", policy, kernel, instance.rewards)
    return p_pi, r_pi


def nominal_bellman(v, policy, kernel, instance: MdpInstance) -> np.ndarray:
    """``T^{pi,P} v``: expected one-step reward plus discounted continuation."""
    v = np.asarray(v, dtype=float)
    policy = np.asarray(policy, dtype=float)
    kernel = np.asarray(kernel, dtype=float)
    _check_dims(v, policy, kernel, instance)
    target = instance.rewards + instance.discount * v[None, None, :]
    q = np.einsum("sat,sat->sa", kernel, target)
    return np.einsum("sa,sa->s", policy, q)


def nominal_value(policy, kernel, instance: MdpInstance) -> np.ndarray:
    """Solve ``(I - gamma P_pi) V = r_pi`` by LU factorization."""
    p_pi, r_pi = policy_matrices(policy, kernel, instance)
    gamma = instance.discount
    m = np.eye(instance.n_states) - gamma * p_pi
    lu = scipy.linalg.lu_factor(m, check_finite=True)
    v = scipy.linalg.lu_solve(lu, r_pi)
    # one refinement step keeps the fixed-point residual at round-off level
    v = v + scipy.linalg.lu_solve(lu, r_pi - m @ v)
    resid = np.max(np.abs(r_pi + gamma * (p_pi @ v) - v), initial=0.0)
    if not np.all(np.isfinite(v)) or resid > 1e-10 * max(1.0, np.max(np.abs(v), initial=0.0)):
        raise ArithmeticError(f"linear solve broke down (residual {resid:.3e})")
    return v


def batched_policy_values(p_pi: np.ndarray, r_pi: np.ndarray, gamma: float, chunk: int = 20000) -> np.ndarray:
    """Values for a batch of policy-projected kernels ``p_pi[n, s, s']`` and rewards ``r_pi[n, s]``."""
    n, S = r_pi.shape
    out = np.empty((n, S))
    eye = np.eye(S)
    for lo in range(0, n, chunk):
        hi = min(n, lo + chunk)
        m = eye[None] - gamma * p_pi[lo:hi]
        out[lo:hi] = np.linalg.solve(m, r_pi[lo:hi, :, None])[..., 0]
    return out
