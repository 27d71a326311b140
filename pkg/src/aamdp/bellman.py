"""Ambiguity-averse Bellman operators and the per-state greedy step.

A ``KernelDistribution`` holds, for each state, a finite list of weighted
transition blocks ``B[s, k]`` of shape (actions, states).  Blocks of different
states are independent, so the joint law of the kernel is the product of the
per-state laws.

For a value function ``v`` the scenario payoffs at state ``s`` are
``Q[s, k, a] = sum_t B[s, k, a, t] * (r[s, a, t] + gamma * v[t])``; a policy
row ``pi`` turns them into the random one-step value ``Q[s] @ pi`` to which
the risk measure is applied.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.optimize

from . import kernels
from .games import solve_matrix_game
from .mdp import SIMPLEX_TOL, DimensionError, MdpInstance
from .risk import (
    BudgetExceeded,
    DiscreteDistribution,
    RiskKind,
    RiskSpec,
    _evar_rows,
    rho_batch,
)

TIE_TOL = 1e-10
GAME_PURE_TOL = 1e-12


class SamplingMode(str, Enum):
    STATIC = "static"
    RESAMPLED = "resampled"


class IncompatibleStrategy(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class KernelDistribution:
    """Per-state scenario lists, stored padded to a common scenario count.

    ``weights[s, k]`` is zero for ``k >= counts[s]``; padded blocks repeat
    scenario 0 so that padded payoffs never change a min or max.
    """

    weights: np.ndarray
    blocks: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        b = np.asarray(self.blocks, dtype=float)
        c = np.asarray(self.counts, dtype=int)
        if b.ndim != 4 or w.shape != b.shape[:2] or c.shape != (b.shape[0],) or b.shape[0] != b.shape[3]:
            raise DimensionError(f"inconsistent shapes: weights {w.shape}, blocks {b.shape}, counts {c.shape}")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "blocks", b)
        object.__setattr__(self, "counts", c)

    @classmethod
    def from_scenarios(cls, scenarios) -> "KernelDistribution":
        """Build from ``scenarios[s] = [(weight, block[a][t]), ...]``."""
        scenarios = [list(sc) for sc in scenarios]
        if not scenarios or any(len(sc) == 0 for sc in scenarios):
            raise ValueError("every state needs at least one scenario")
        S = len(scenarios)
        first = np.asarray(scenarios[0][0][1], dtype=float)
        A = first.shape[0]
        K = max(len(sc) for sc in scenarios)
        weights = np.zeros((S, K))
        blocks = np.empty((S, K, A, S))
        counts = np.array([len(sc) for sc in scenarios])
        for s, sc in enumerate(scenarios):
            for k, (wk, block) in enumerate(sc):
                block = np.asarray(block, dtype=float)
                if block.shape != (A, S):
                    raise DimensionError(f"state {s} scenario {k}: block shape {block.shape} != ({A}, {S})")
                weights[s, k] = wk
                blocks[s, k] = block
            blocks[s, len(sc):] = blocks[s, 0]
        return cls(weights, blocks, counts)

    @classmethod
    def from_kernel(cls, kernel) -> "KernelDistribution":
        """Point mass at a single kernel ``P[s, a, t]``."""
        kernel = np.asarray(kernel, dtype=float)
        S = kernel.shape[0]
        return cls(np.ones((S, 1)), kernel[:, None].copy(), np.ones(S, dtype=int))

    @property
    def n_states(self) -> int:
        return self.blocks.shape[0]

    @property
    def n_actions(self) -> int:
        return self.blocks.shape[2]

    @property
    def max_scenarios(self) -> int:
        return self.blocks.shape[1]

    @property
    def joint_count(self) -> int:
        return math.prod(int(c) for c in self.counts)

    def scenarios(self, s: int) -> list[tuple[float, np.ndarray]]:
        return [(float(self.weights[s, k]), self.blocks[s, k]) for k in range(self.counts[s])]

    def problems(self) -> list[str]:
        out = []
        S, K = self.weights.shape
        if np.any(self.counts < 1) or np.any(self.counts > K):
            return ["scenario counts out of range"]
        valid = np.arange(K)[None, :] < self.counts[:, None]
        if np.any(self.weights[valid] <= 0.0):
            out.append("scenario weights must be positive")
        if np.any(self.weights[~valid] != 0.0):
            out.append("padding weights must be zero")
        if np.any(np.abs(self.weights.sum(axis=1) - 1.0) > SIMPLEX_TOL):
            out.append("scenario weights of some state do not sum to 1")
        b = self.blocks
        if not np.all(np.isfinite(b)) or np.any(b < 0.0) or np.any(np.abs(b.sum(axis=-1) - 1.0) > SIMPLEX_TOL):
            out.append("some scenario block row is not a probability vector")
        return out

    def validate(self, instance: MdpInstance | None = None):
        problems = self.problems()
        if instance is not None and (self.n_states, self.n_actions) != (instance.n_states, instance.n_actions):
            problems.append(
                f"kernel distribution is {self.n_states}x{self.n_actions}, "
                f"instance is {instance.n_states}x{instance.n_actions}"
            )
        if problems:
            raise ValueError("; ".join(problems))

    def mean_kernel(self) -> np.ndarray:
        return np.einsum("sk,skat->sat", self.weights, self.blocks)

    def joint_indices(self, budget: int = 100_000) -> tuple[np.ndarray, np.ndarray]:
        """All joint scenario choices ``idx[n, s]`` with their product weights."""
        count = self.joint_count
        if count > budget:
            raise BudgetExceeded(f"{count} joint kernels exceed the enumeration budget {budget}")
        idx = np.indices(tuple(int(c) for c in self.counts)).reshape(self.n_states, -1).T
        w = np.prod(self.weights[np.arange(self.n_states), idx], axis=1)
        return idx, w

    def sample_indices(self, rng: np.random.Generator, size) -> np.ndarray:
        """Independent scenario draws per state; output shape ``(*size, S)``."""
        size = (size,) if np.isscalar(size) else tuple(size)
        cum = np.cumsum(self.weights, axis=1)
        cum[np.arange(self.n_states), self.counts - 1] = 1.0
        u = rng.random(size + (self.n_states,))
        idx = np.empty(u.shape, dtype=np.intp)
        for s in range(self.n_states):
            c = self.counts[s]
            idx[..., s] = np.minimum(np.searchsorted(cum[s, :c], u[..., s], side="right"), c - 1)
        return idx

    def kernels(self, idx) -> np.ndarray:
        """Joint kernels ``P[..., s, a, t]`` for scenario choices ``idx[..., s]``."""
        return self.blocks[np.arange(self.n_states), idx]

    def policy_rows(self, policy, instance: MdpInstance) -> tuple[np.ndarray, np.ndarray]:
        """Per-scenario projections ``p_pi[s, k, t]`` and ``r_pi[s, k]``."""
        policy = np.asarray(policy, dtype=float)
        p_pi = np.einsum("sa,skat->skt", policy, self.blocks)
        r_pi = np.einsum("sa,skat,sat->sk", policy, self.blocks, instance.rewards)
        return p_pi, r_pi


def _check(v, nu: KernelDistribution, instance: MdpInstance, policy=None):
    S, A = instance.n_states, instance.n_actions
    if (nu.n_states, nu.n_actions) != (S, A):
        raise DimensionError(f"kernel distribution is {nu.n_states}x{nu.n_actions}, instance is {S}x{A}")
    if np.shape(v) != (S,):
        raise DimensionError(f"value function shape {np.shape(v)} != ({S},)")
    if policy is not None and np.shape(policy) != (S, A):
        raise DimensionError(f"policy shape {np.shape(policy)} != ({S}, {A})")


def q_matrices(v, nu: KernelDistribution, instance: MdpInstance) -> np.ndarray:
    """Scenario payoffs ``Q[s, k, a]``, padded like ``nu``."""
    v = np.asarray(v, dtype=float)
    _check(v, nu, instance)
    return kernels.bellman_q(nu.blocks, instance.rewards, v, instance.discount)


def state_value_distribution(v, s: int, pi_row, nu: KernelDistribution, instance: MdpInstance) -> DiscreteDistribution:
    """Law of the one-step value ``T^{pi, P} v (s)`` over the scenarios of state ``s``."""
    pi_row = np.asarray(pi_row, dtype=float)
    if pi_row.shape != (instance.n_actions,):
        raise DimensionError(f"policy row shape {pi_row.shape} != ({instance.n_actions},)")
    q = q_matrices(v, nu, instance)[s, : nu.counts[s]]
    return DiscreteDistribution._trusted(q @ pi_row, nu.weights[s, : nu.counts[s]])


def apply_policy_operator(v, policy, nu: KernelDistribution, spec: RiskSpec, instance: MdpInstance) -> np.ndarray:
    """``rho`` applied statewise to the one-step value under policy ``policy``."""
    policy = np.asarray(policy, dtype=float)
    _check(v, nu, instance, policy)
    q = q_matrices(v, nu, instance)
    vals = np.einsum("ska,sa->sk", q, policy)
    return rho_batch(spec, vals, nu.weights)


# --- greedy step ------------------------------------------------------------


class StrategyKind(str, Enum):
    AUTO = "auto"
    EXACT = "exact"
    DET = "det"
    LOCAL = "local"


@dataclass(frozen=True)
class GreedyStrategy:
    """How the per-state maximization over mixed action rows is carried out.

    * ``exact``: closed form or matrix game; only for expectation, ess inf
      and ess sup.
    * ``det``: best one-hot row; exact for expectation and ess sup.
    * ``local``: candidate enumeration plus local refinement; the returned
      value is attained, hence a lower bound on the maximum.
    * ``auto``: ``exact`` where available, ``local`` otherwise.

    ``restarts`` is the number of best candidates refined by local ascent,
    ``step_tol`` the improvement below which refinement stops and
    ``vertex_cap`` the largest arrangement-vertex enumeration attempted.
    """

    kind: StrategyKind = StrategyKind.AUTO
    restarts: int = 2
    step_tol: float = 1e-12
    vertex_cap: int = 5000

    def __post_init__(self):
        object.__setattr__(self, "kind", StrategyKind(self.kind))
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if not self.step_tol > 0:
            raise ValueError("step_tol must be positive")

    def resolve(self, spec: RiskSpec) -> StrategyKind:
        if self.kind is StrategyKind.AUTO:
            return StrategyKind.EXACT if spec.dp_exact else StrategyKind.LOCAL
        return self.kind

    def is_exact_for(self, spec: RiskSpec) -> bool:
        kind = self.resolve(spec)
        if kind is StrategyKind.EXACT:
            return spec.dp_exact
        if kind is StrategyKind.DET:
            return spec.kind in (RiskKind.EXPECTATION, RiskKind.ESSSUP)
        return False


EXACT = GreedyStrategy(StrategyKind.EXACT)


def _one_hot(a: int, n: int) -> np.ndarray:
    row = np.zeros(n)
    row[a] = 1.0
    return row


def _row_values(spec, q, w, rows):
    """Risk of the one-step value for each candidate row."""
    return rho_batch(spec, np.atleast_2d(rows) @ q.T, w)


def _arrangement_vertices(q: np.ndarray, cap: int) -> np.ndarray:
    """Vertices of the simplex cut by every hyperplane ``q[k] @ pi = q[j] @ pi``.

    Inside each cell the order of the scenario payoffs is fixed, so
    quantile-type measures are linear there and attain their maximum at one of
    these points.  Returns an empty array when more than ``cap`` hyperplane
    subsets would be needed.
    """
    K, A = q.shape
    if A < 2:
        return np.empty((0, A))
    diffs = [q[k] - q[j] for k, j in itertools.combinations(range(K), 2)]
    planes = np.array(diffs + list(np.eye(A))) if diffs else np.eye(A)
    planes = planes[np.any(np.abs(planes) > 1e-14, axis=1)]
    n_combo = math.comb(len(planes), A - 1)
    if n_combo > cap or n_combo == 0:
        return np.empty((0, A))
    combos = np.array(list(itertools.combinations(range(len(planes)), A - 1)))
    M = np.empty((len(combos), A, A))
    M[:, : A - 1] = planes[combos]
    M[:, A - 1] = 1.0
    rhs = np.zeros(A)
    rhs[-1] = 1.0
    det = np.linalg.det(M)
    scale = np.prod(np.linalg.norm(M, axis=2), axis=1)
    ok = np.abs(det) > 1e-10 * scale
    if not ok.any():
        return np.empty((0, A))
    pts = np.linalg.solve(M[ok], np.broadcast_to(rhs, (ok.sum(), A))[..., None])[..., 0]
    pts = pts[np.all(pts >= -1e-12, axis=1)]
    pts = np.maximum(pts, 0.0)
    return pts / pts.sum(axis=1, keepdims=True)


def _smooth_gradient(spec, q, w, row):
    """Gradient of ``rho(q @ row)`` for ERM and EVaR (tilted scenario weights)."""
    x = q @ row
    if spec.kind is RiskKind.ERM:
        beta = spec.param
    else:
        _, beta_star = _evar_rows(x[None, :], w, spec.param, return_beta=True)
        if not np.isfinite(beta_star[0]):
            return q[int(np.argmin(x))]
        beta = -beta_star[0]
    z = beta * x
    p = w * np.exp(z - z.max())
    p /= p.sum()
    return p @ q


def _polish_smooth(spec, q, w, start, step_tol):
    A = q.shape[1]

    def f(row):
        return -float(_row_values(spec, q, w, row)[0])

    def g(row):
        return -_smooth_gradient(spec, q, w, row)

    res = scipy.optimize.minimize(
        f,
        start,
        jac=g,
        method="SLSQP",
        bounds=[(0.0, 1.0)] * A,
        constraints=[{"type": "eq", "fun": lambda r: r.sum() - 1.0, "jac": lambda r: np.ones(A)}],
        options={"ftol": step_tol, "maxiter": 200},
    )
    row = np.clip(res.x, 0.0, None)
    row /= row.sum()
    return row, float(_row_values(spec, q, w, row)[0])


def _line_search(spec, q, w, row, i, j, step_tol):
    """Best transfer of mass between actions ``i`` and ``j`` by zooming grids."""
    lo, hi = -row[j], row[i]
    direction = np.zeros_like(row)
    direction[i], direction[j] = -1.0, 1.0
    best_t, best_v = 0.0, float(_row_values(spec, q, w, row)[0])
    while hi - lo > step_tol:
        ts = np.linspace(lo, hi, 9)
        vals = _row_values(spec, q, w, row[None, :] + ts[:, None] * direction)
        m = int(np.argmax(vals))
        if vals[m] > best_v:
            best_t, best_v = ts[m], float(vals[m])
        lo, hi = ts[max(m - 1, 0)], ts[min(m + 1, 8)]
    out = np.clip(row + best_t * direction, 0.0, None)
    return out / out.sum(), best_v


def _pair_ascent(spec, q, w, row, step_tol, max_sweeps=100):
    A = q.shape[1]
    value = float(_row_values(spec, q, w, row)[0])
    for _ in range(max_sweeps):
        before = value
        for i, j in itertools.combinations(range(A), 2):
            row, value = _line_search(spec, q, w, row, i, j, 1e-11)
        if value - before <= step_tol:
            break
    return row, value


def _local_search(spec, q, w, strategy: GreedyStrategy):
    A = q.shape[1]
    verts = _arrangement_vertices(q, strategy.vertex_cap)
    cands = np.vstack([np.eye(A), np.full((1, A), 1.0 / A), verts])
    vals = _row_values(spec, q, w, cands)
    order = np.argsort(-vals, kind="stable")
    best_row, best_val = cands[order[0]], float(vals[order[0]])

    smooth = spec.kind is RiskKind.EVAR or (spec.kind is RiskKind.ERM and spec.param < 0)
    piecewise_linear = spec.kind in (RiskKind.VAR, RiskKind.CVAR, RiskKind.EXPECTATION, RiskKind.ESSINF, RiskKind.ESSSUP)
    convex = spec.kind is RiskKind.ERM and spec.param >= 0
    if convex or (piecewise_linear and len(verts)):
        # maximum sits on a one-hot row (convex) or an arrangement vertex
        return best_row, best_val
    for k in order[: strategy.restarts]:
        if smooth:
            row, val = _polish_smooth(spec, q, w, cands[k], strategy.step_tol)
        else:
            row, val = _pair_ascent(spec, q, w, cands[k].copy(), strategy.step_tol)
        if val > best_val + strategy.step_tol:
            best_row, best_val = row, val
    return best_row, best_val


def greedy_from_q(q, w, spec: RiskSpec, strategy: GreedyStrategy = GreedyStrategy(), incumbent=None):
    """Maximize ``rho(q @ pi)`` over action rows ``pi`` for one state.

    ``q`` is (K, A) for the K real scenarios with weights ``w``.  An
    ``incumbent`` row is returned instead when it is within ``TIE_TOL`` of the
    best value found.  Ties between actions go to the lowest index.
    """
    q = np.asarray(q, dtype=float)
    K, A = q.shape
    if A == 1:
        row = np.ones(1)
        value = float(_row_values(spec, q, w, row)[0])
    else:
        kind = strategy.resolve(spec)
        if kind is StrategyKind.EXACT:
            if spec.kind is RiskKind.EXPECTATION:
                scores = w @ q
            elif spec.kind is RiskKind.ESSSUP:
                scores = q.max(axis=0)
            elif spec.kind is RiskKind.ESSINF:
                scores = q.min(axis=0)
            else:
                raise IncompatibleStrategy(f"no exact greedy step for {spec}")
            a = int(np.argmax(scores))
            row, value = _one_hot(a, A), float(scores[a])
            if spec.kind is RiskKind.ESSINF:
                x, game_value = solve_matrix_game(q)
                if game_value > value + GAME_PURE_TOL:
                    row, value = x, float(np.min(q @ x))
        elif kind is StrategyKind.DET:
            scores = _row_values(spec, q, w, np.eye(A))
            a = int(np.argmax(scores))
            row, value = _one_hot(a, A), float(scores[a])
        else:
            row, value = _local_search(spec, q, w, strategy)
    if incumbent is not None:
        incumbent = np.asarray(incumbent, dtype=float)
        inc_value = float(_row_values(spec, q, w, incumbent)[0])
        if inc_value >= value - TIE_TOL:
            return incumbent, inc_value
    return row, value


def greedy_row(v, s: int, nu: KernelDistribution, spec: RiskSpec, strategy: GreedyStrategy, instance: MdpInstance):
    """``(pi_row, value)`` maximizing ``rho(T^{pi, P} v (s))`` over rows ``pi``."""
    q = q_matrices(v, nu, instance)
    c = nu.counts[s]
    return greedy_from_q(q[s, :c], nu.weights[s, :c], spec, strategy)


def apply_optimal_operator(
    v, nu: KernelDistribution, spec: RiskSpec, strategy: GreedyStrategy, instance: MdpInstance, incumbent=None
) -> tuple[np.ndarray, np.ndarray]:
    """Statewise greedy maximization; returns ``(values, policy)``."""
    q = q_matrices(v, nu, instance)
    S, A = instance.n_states, instance.n_actions
    values = np.empty(S)
    policy = np.empty((S, A))
    for s in range(S):
        c = nu.counts[s]
        inc = None if incumbent is None else incumbent[s]
        policy[s], values[s] = greedy_from_q(q[s, :c], nu.weights[s, :c], spec, strategy, inc)
    return values, policy
