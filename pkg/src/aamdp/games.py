"""Dense simplex LP and zero-sum matrix games.

The row player picks a mixed action ``x`` and receives ``min_k (Q x)_k``;
the adversary picks the scenario ``k``.
"""
from __future__ import annotations

import numpy as np

PIVOT_TOL = 1e-12
MAX_PIVOTS = 50_000


class SolverBreakdown(ArithmeticError):
    pass


def simplex_max(c, A, b, max_pivots: int = MAX_PIVOTS):
    """Maximize ``c @ x`` subject to ``A x <= b``, ``x >= 0`` with ``b >= 0``.

    Tableau simplex with Bland's rule, started from the slack basis.  After the
    last pivot the primal and dual solutions are recomputed from the original
    data with the final basis, so round-off from the tableau updates does not
    leak into the result.

    Returns ``(x, y, objective)`` where ``y >= 0`` are the constraint duals.
    """
    c = np.asarray(c, dtype=float)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float)
    m, n = A.shape
    if b.shape != (m,) or c.shape != (n,):
        raise ValueError(f"shape mismatch: A {A.shape}, b {b.shape}, c {c.shape}")
    if np.any(b < 0):
        raise ValueError("simplex_max needs b >= 0 (origin feasible)")
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b)) and np.all(np.isfinite(c))):
        raise ValueError("non-finite LP data")

    full = np.hstack([A, np.eye(m)])
    cost = np.concatenate([c, np.zeros(m)])
    tab = np.hstack([full, b[:, None]])
    z = np.concatenate([-cost, [0.0]])
    basis = np.arange(n, n + m)

    for _ in range(max_pivots):
        entering = np.flatnonzero(z[:-1] < -PIVOT_TOL)
        if entering.size == 0:
            break
        j = entering[0]
        col = tab[:, j]
        rows = np.flatnonzero(col > PIVOT_TOL)
        if rows.size == 0:
            raise SolverBreakdown("LP unbounded")
        ratios = tab[rows, -1] / col[rows]
        best = ratios.min()
        ties = rows[ratios <= best + PIVOT_TOL * max(1.0, abs(best))]
        i = ties[np.argmin(basis[ties])]
        tab[i] /= tab[i, j]
        others = np.flatnonzero(np.arange(m) != i)
        tab[others] -= np.outer(tab[others, j], tab[i])
        z -= z[j] * tab[i]
        basis[i] = j
    else:
        raise SolverBreakdown(f"no convergence within {max_pivots} pivots")

    B = full[:, basis]
    try:
        xb = np.linalg.solve(B, b)
        y = np.linalg.solve(B.T, cost[basis])
    except np.linalg.LinAlgError as exc:
        raise SolverBreakdown(f"singular final basis: {exc}") from None
    x_full = np.zeros(n + m)
    x_full[basis] = xb
    x = np.maximum(x_full[:n], 0.0)
    return x, np.maximum(y, 0.0), float(c @ x)


def solve_matrix_game(Q, tol: float = 1e-10):
    """``(x, value)`` with ``x`` maximizing ``min_k (Q @ x)_k`` over the simplex.

    Solved as an LP; if the LP answer fails the ``tol`` certificate the
    multiplicative-weights routine is used instead.
    """
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    if Q.size == 0:
        raise ValueError("payoff matrix needs at least one row and one column")
    if not np.all(np.isfinite(Q)):
        raise ValueError("payoff matrix has non-finite entries")
    K, A = Q.shape
    if A == 1:
        return np.ones(1), float(Q.min())
    if K == 1:
        a = int(np.argmax(Q[0]))
        x = np.zeros(A)
        x[a] = 1.0
        return x, float(Q[0, a])

    shift = 1.0 - Q.min()
    try:
        _, u, total = simplex_max(np.ones(K), (Q + shift).T, np.ones(A))
        if total <= 0 or u.sum() <= 0:
            raise SolverBreakdown("degenerate game LP")
        x = u / u.sum()
        lp_value = 1.0 / u.sum() - shift
        guaranteed = float(np.min(Q @ x))
        if guaranteed >= lp_value - tol:
            return x, guaranteed
    except SolverBreakdown:
        pass
    x, lower, upper = mwu_matrix_game(Q, tol=tol)
    return x, lower


def mwu_matrix_game(Q, tol: float = 1e-6, max_iter: int = 100_000, eta: float = 0.5):
    """Optimistic multiplicative weights for both players.

    Returns ``(x, lower, upper)``: the best row strategy seen, the value it
    guarantees, and the best upper bound certified by an adversary strategy.
    """
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    K, A = Q.shape
    lo, hi = Q.min(), Q.max()
    span = hi - lo if hi > lo else 1.0
    M = (Q - lo) / span

    gain_x = np.zeros(A)
    loss_z = np.zeros(K)
    last_x = np.zeros(A)
    last_z = np.zeros(K)
    sum_x = np.zeros(A)
    sum_z = np.zeros(K)
    # every iterate certifies its own bounds; the optimistic update converges
    # in the last iterate, so the best certified pair is usually far tighter
    # than the running average
    best_x = np.full(A, 1.0 / A)
    lower, upper = float(np.min(M @ best_x)), float(np.max(M))
    for t in range(1, max_iter + 1):
        ex = eta * (gain_x + last_x)
        x = np.exp(ex - ex.max())
        x /= x.sum()
        ez = -eta * (loss_z + last_z)
        zk = np.exp(ez - ez.max())
        zk /= zk.sum()
        last_x = M.T @ zk
        last_z = M @ x
        gain_x += last_x
        loss_z += last_z
        sum_x += x
        sum_z += zk
        lo_t = float(last_z.min())
        if lo_t > lower:
            lower, best_x = lo_t, x
        upper = min(upper, float(last_x.max()))
        if t % 50 == 0:
            xa = sum_x / t
            lo_avg = float(np.min(M @ xa))
            if lo_avg > lower:
                lower, best_x = lo_avg, xa
            upper = min(upper, float(np.max(M.T @ (sum_z / t))))
        if (upper - lower) * span <= tol:
            break
    return best_x, lower * span + lo, upper * span + lo
