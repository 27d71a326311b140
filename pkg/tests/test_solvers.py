import numpy as np
import pytest

import oracles
from aamdp.bellman import GreedyStrategy, IncompatibleStrategy, apply_optimal_operator
from aamdp.gallery import build_fig1, robust_random
from aamdp.mdp import nominal_value
from aamdp.risk import ESSINF, ESSSUP, EXPECTATION, RiskSpec
from aamdp.solvers import (
    ConvergenceError,
    convex_program_solve,
    policy_fixed_point,
    policy_iteration,
    value_iteration,
)


def _scenarios(nu):
    return [nu.scenarios(s) for s in range(nu.n_states)]


# fig1 with scenarios {0, 1/2, 1}: Start pays 1 and self-loops with probability x
@pytest.mark.parametrize("spec, expected", [(ESSINF, 1.0), (ESSSUP, 2.0), (EXPECTATION, 4 / 3)])
def test_fig1_optimal_values(spec, expected):
    inst, nu = build_fig1(3)
    rep = value_iteration(nu, spec, tol=1e-10, instance=inst)
    assert rep.value[0] == pytest.approx(expected, abs=1e-9)
    assert rep.value[1] == 0.0


def test_fig1_lp():
    inst, nu = build_fig1(3)
    np.testing.assert_allclose(convex_program_solve(nu, inst), [2.0, 0.0], atol=1e-12)


@pytest.mark.parametrize("seed", range(6))
def test_expectation_is_mean_kernel_optimum(seed):
    inst, nu = robust_random(seed, 3, 2, 3)
    rep = value_iteration(nu, EXPECTATION, tol=1e-10, instance=inst)
    oracle = oracles.best_deterministic(inst.rewards, nu.mean_kernel(), inst.discount)
    np.testing.assert_allclose(rep.value, oracle, atol=1e-9)
    assert np.max(np.abs(rep.value - oracle)) <= rep.certified_bound + 1e-12


@pytest.mark.parametrize("seed", range(6))
def test_esssup_is_augmented_mdp_optimum(seed):
    inst, nu = robust_random(seed, 3, 2, 3)
    oracle = oracles.optimistic_value(inst.rewards, _scenarios(nu), inst.discount)
    np.testing.assert_allclose(value_iteration(nu, ESSSUP, tol=1e-10, instance=inst).value, oracle, atol=1e-9)
    np.testing.assert_allclose(convex_program_solve(nu, inst), oracle, atol=1e-9)


@pytest.mark.parametrize("seed", range(6))
def test_vi_and_pi_agree_on_essinf(seed):
    inst, nu = robust_random(seed, 4, 3, 3)
    vi = value_iteration(nu, ESSINF, tol=1e-9, instance=inst)
    pi = policy_iteration(nu, ESSINF, tol=1e-9, instance=inst)
    np.testing.assert_allclose(vi.value, pi.value, atol=2e-9)
    for a, b in zip(pi.value_history, pi.value_history[1:]):
        assert np.all(b >= a - 1e-9)


def test_vi_bounds_hold():
    inst, nu = robust_random(9, 4, 2, 3, gamma=0.9)
    exact = value_iteration(nu, ESSINF, tol=1e-12, instance=inst).value
    rep = value_iteration(nu, ESSINF, tol=1e-4, instance=inst)
    err = np.max(np.abs(rep.value - exact))
    assert err <= rep.certified_bound + 1e-12
    assert err <= rep.a_priori_bound
    assert rep.residuals[-1] == rep.final_residual


def test_pi_rejects_inexact_strategies():
    inst, nu = build_fig1(3)
    with pytest.raises(IncompatibleStrategy, match="policy iteration requires an exact greedy strategy"):
        policy_iteration(nu, RiskSpec.parse("cvar:0.5"), instance=inst)
    with pytest.raises(IncompatibleStrategy):
        policy_iteration(nu, ESSINF, GreedyStrategy("det"), instance=inst)


def test_nonconvergence_raises():
    inst, nu = robust_random(0, 3, 2, 2, gamma=0.99)
    with pytest.raises(ConvergenceError):
        value_iteration(nu, ESSINF, tol=1e-12, instance=inst, max_iter=3)


def test_argument_errors():
    inst, nu = build_fig1(3)
    with pytest.raises(ValueError):
        value_iteration(nu, ESSINF, tol=0.0, instance=inst)
    with pytest.raises(TypeError):
        value_iteration(nu, ESSINF)
    with pytest.raises(ValueError):
        convex_program_solve(nu, inst, ESSINF)


def test_policy_fixed_point_single_scenario_is_nominal():
    inst, nu = robust_random(3, 4, 2, 1)
    pi = np.full((4, 2), 0.5)
    v = policy_fixed_point(pi, nu, RiskSpec.parse("cvar:0.3"), 1e-12, inst)
    np.testing.assert_allclose(v, nominal_value(pi, nu.mean_kernel(), inst), atol=1e-10)


def test_local_strategy_value_iteration_reaches_fixed_point():
    inst, nu = robust_random(2, 3, 2, 3)
    spec = RiskSpec.parse("cvar:0.5")
    rep = value_iteration(nu, spec, tol=1e-8, instance=inst)
    tv, _ = apply_optimal_operator(rep.value, nu, spec, GreedyStrategy(), inst)
    assert np.max(np.abs(tv - rep.value)) <= 1e-8
