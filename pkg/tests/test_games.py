import numpy as np
import pytest

import oracles
from aamdp.games import SolverBreakdown, mwu_matrix_game, simplex_max, solve_matrix_game


def test_simplex_textbook_lp():
    # max 3x + 5y  s.t.  x <= 4, 2y <= 12, 3x + 2y <= 18
    x, y, obj = simplex_max(np.array([3.0, 5.0]), np.array([[1.0, 0.0], [0.0, 2.0], [3.0, 2.0]]), np.array([4.0, 12.0, 18.0]))
    np.testing.assert_allclose(x, [2.0, 6.0])
    assert obj == pytest.approx(36.0)
    # dual prices certify the optimum
    np.testing.assert_allclose(y, [0.0, 1.5, 1.0])


def test_simplex_unbounded():
    with pytest.raises(SolverBreakdown):
        simplex_max(np.array([1.0, 1.0]), np.array([[1.0, -1.0]]), np.array([1.0]))


def test_matching_pennies():
    x, value = solve_matrix_game(np.array([[1.0, -1.0], [-1.0, 1.0]]))
    assert abs(value) <= 1e-10
    np.testing.assert_allclose(x, [0.5, 0.5], atol=1e-12)


def test_identity_game():
    x, value = solve_matrix_game(np.eye(2))
    assert value == pytest.approx(0.5, abs=1e-12)


def test_pure_saddle():
    Q = np.array([[3.0, 1.0], [2.0, 0.0]])
    x, value = solve_matrix_game(Q)
    assert value == pytest.approx(2.0)
    np.testing.assert_allclose(x, [1.0, 0.0])


def test_degenerate_shapes():
    assert solve_matrix_game(np.array([[1.0], [3.0]]))[1] == 1.0
    x, v = solve_matrix_game(np.array([[1.0, 4.0, 2.0]]))
    assert v == 4.0 and x.tolist() == [0.0, 1.0, 0.0]
    with pytest.raises(ValueError):
        solve_matrix_game(np.array([[np.inf, 1.0]]))


def test_random_2x2_against_closed_form():
    rng = np.random.default_rng(0)
    for _ in range(100):
        Q = rng.uniform(-1, 1, (2, 2))
        x, value = solve_matrix_game(Q)
        assert value == pytest.approx(oracles.game_2x2(Q), abs=1e-10)
        assert np.min(Q @ x) >= value - 1e-12


def test_mwu_brackets_lp_value():
    rng = np.random.default_rng(1)
    for _ in range(5):
        Q = rng.uniform(-1, 1, (3, 4))
        _, value = solve_matrix_game(Q)
        x, lo, hi = mwu_matrix_game(Q, tol=1e-6)
        assert lo - 1e-12 <= value <= hi + 1e-12
        assert hi - lo <= 1e-6
        assert np.min(Q @ x) == pytest.approx(lo)
