"""Fixed-point solvers: policy evaluation, value iteration, policy iteration and an LP route."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .bellman import (
    GreedyStrategy,
    IncompatibleStrategy,
    KernelDistribution,
    apply_optimal_operator,
    apply_policy_operator,
)
from .games import simplex_max
from .mdp import MdpInstance, deterministic_policy
from .risk import ESSSUP, RiskSpec

EVAL_MAX_ITER = 1_000_000
PI_MAX_ITER = 10_000
TIE_TOL = 1e-10
MONOTONE_TOL = 1e-10


class ConvergenceError(RuntimeError):
    pass


class NonMonotoneStep(ArithmeticError):
    pass


@dataclass
class SolveReport:
    value: np.ndarray
    policy: np.ndarray
    iterations: int
    final_residual: float
    certified_bound: float
    wall_time: float
    algorithm: str = ""
    a_priori_bound: float = float("nan")
    residuals: list = field(default_factory=list)
    value_history: list = field(default_factory=list)


def _stop_threshold(tol: float, gamma: float) -> float:
    return np.inf if gamma == 0.0 else tol * (1.0 - gamma) / gamma


def policy_fixed_point(
    policy,
    nu: KernelDistribution,
    spec: RiskSpec,
    tol: float,
    instance: MdpInstance,
    max_iter: int = EVAL_MAX_ITER,
    v0=None,
) -> np.ndarray:
    """Fixed point of the policy operator to within ``tol`` in sup norm.

    Iterates from ``v0`` (zero by default) until successive iterates differ by
    at most ``tol (1 - gamma) / gamma``.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    gamma = instance.discount
    threshold = _stop_threshold(tol, gamma)
    v = np.zeros(instance.n_states) if v0 is None else np.asarray(v0, dtype=float).copy()
    for _ in range(max_iter):
        v_new = apply_policy_operator(v, policy, nu, spec, instance)
        diff = np.max(np.abs(v_new - v), initial=0.0)
        v = v_new
        if diff <= threshold:
            return v
    raise ConvergenceError(f"policy evaluation did not converge in {max_iter} iterations")


def value_iteration(
    nu: KernelDistribution,
    spec: RiskSpec,
    strategy: GreedyStrategy = GreedyStrategy(),
    tol: float = 1e-8,
    instance: MdpInstance | None = None,
    max_iter: int = EVAL_MAX_ITER,
) -> SolveReport:
    """Iterate the optimal operator from zero with greedy policy extraction.

    Stops once ``gamma / (1 - gamma) * ||V_n - V_{n-1}||`` is at most ``tol``,
    which bounds the distance of ``V_n`` to the operator's fixed point.
    """
    if instance is None:
        raise TypeError("instance is required")
    if not tol > 0:
        raise ValueError("tol must be positive")
    start = time.perf_counter()
    gamma = instance.discount
    threshold = _stop_threshold(tol, gamma)
    v = np.zeros(instance.n_states)
    residuals = []
    policy = None
    first_norm = None
    for n in range(1, max_iter + 1):
        v_new, policy = apply_optimal_operator(v, nu, spec, strategy, instance, incumbent=policy)
        diff = float(np.max(np.abs(v_new - v), initial=0.0))
        if first_norm is None:
            first_norm = float(np.max(np.abs(v_new), initial=0.0))
        residuals.append(diff)
        v = v_new
        if diff <= threshold:
            break
    else:
        raise ConvergenceError(f"value iteration did not converge in {max_iter} iterations")
    certified = 0.0 if gamma == 0.0 else diff * gamma / (1.0 - gamma)
    # ||V0 - V_fix|| <= ||V1 - V0|| / (1 - gamma) with V0 = 0
    a_priori = 2.0 * gamma**n / (1.0 - gamma) * first_norm / (1.0 - gamma)
    return SolveReport(
        value=v,
        policy=policy,
        iterations=n,
        final_residual=diff,
        certified_bound=certified,
        wall_time=time.perf_counter() - start,
        algorithm="vi",
        a_priori_bound=a_priori,
        residuals=residuals,
    )


def policy_iteration(
    nu: KernelDistribution,
    spec: RiskSpec,
    strategy: GreedyStrategy = GreedyStrategy(),
    tol: float = 1e-8,
    instance: MdpInstance | None = None,
    max_iter: int = PI_MAX_ITER,
) -> SolveReport:
    """Alternate policy evaluation and greedy improvement.

    The current policy is kept at states where it is within ``TIE_TOL`` of the
    greedy value.  Stops when the policy repeats or when an improvement step
    changes the value by at most ``tol (1 - gamma)``.
    """
    if instance is None:
        raise TypeError("instance is required")
    if not tol > 0:
        raise ValueError("tol must be positive")
    if not strategy.is_exact_for(spec):
        raise IncompatibleStrategy("policy iteration requires an exact greedy strategy")
    start = time.perf_counter()
    gamma = instance.discount
    eval_tol = tol * 1e-3
    policy = deterministic_policy(np.zeros(instance.n_states, dtype=int), instance.n_actions)
    v = policy_fixed_point(policy, nu, spec, eval_tol, instance)
    history = [v]
    residuals = []
    for n in range(1, max_iter + 1):
        tv, new_policy = apply_optimal_operator(v, nu, spec, strategy, instance, incumbent=policy)
        residual = float(np.max(np.abs(tv - v), initial=0.0))
        residuals.append(residual)
        if np.array_equal(new_policy, policy):
            break
        v_new = policy_fixed_point(new_policy, nu, spec, eval_tol, instance, v0=v)
        drop = float(np.max(v - v_new))
        if drop > MONOTONE_TOL + 2 * eval_tol:
            raise NonMonotoneStep(f"policy value decreased by {drop:.3e} at outer iteration {n}")
        step = float(np.max(np.abs(v_new - v), initial=0.0))
        policy, v = new_policy, v_new
        history.append(v)
        if step <= tol * (1.0 - gamma):
            tv, _ = apply_optimal_operator(v, nu, spec, strategy, instance, incumbent=policy)
            residual = float(np.max(np.abs(tv - v), initial=0.0))
            residuals.append(residual)
            break
    else:
        raise ConvergenceError(f"policy iteration did not converge in {max_iter} outer iterations")
    return SolveReport(
        value=v,
        policy=policy,
        iterations=n,
        final_residual=residual,
        certified_bound=residual / (1.0 - gamma) + eval_tol,
        wall_time=time.perf_counter() - start,
        algorithm="pi",
        residuals=residuals,
        value_history=history,
    )


def convex_program_solve(nu: KernelDistribution, instance: MdpInstance, spec: RiskSpec = ESSSUP) -> np.ndarray:
    """Optimal ess-sup value as the smallest ``V`` with ``V >= T V`` componentwise.

    With ess sup the operator is a max of affine maps, so the program is the
    LP ``min sum V`` subject to ``V(s) >= r_bar(s, k, a) + gamma B[s, k, a] @ V``
    for every state, scenario and action.  The dual of that LP starts feasible
    at the origin and is solved with the bundled simplex; ``V`` is read off the
    dual prices.
    """
    if spec != ESSSUP:
        raise ValueError("the LP route covers ess sup only")
    nu.validate(instance)
    gamma = instance.discount
    S = instance.n_states
    offset = instance.r_max / (1.0 - gamma)
    rows, rhs = [], []
    for s in range(S):
        for k in range(nu.counts[s]):
            block = nu.blocks[s, k]
            r_bar = np.sum(block * instance.rewards[s], axis=1)
            for a in range(instance.n_actions):
                row = -gamma * block[a]
                row[s] += 1.0
                rows.append(row)
                # shift V by the value bound so the LP variables are nonnegative
                rhs.append(r_bar[a] + offset * (1.0 - gamma))
    M = np.array(rows)
    b = np.maximum(np.array(rhs), 0.0)
    _, w, _ = simplex_max(b, M.T, np.ones(S))
    return w - offset
