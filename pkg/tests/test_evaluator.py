import math

import numpy as np
import pytest

import oracles
from aamdp.bellman import SamplingMode
from aamdp.evaluator import (
    HOLDS,
    INCONCLUSIVE,
    VIOLATED,
    EvalParams,
    default_horizon,
    dp_check,
    dp_check_refined,
    evaluate,
    mean_kernel_value,
    refine_midpoints,
    resampled_samples,
    resampled_value_extremal,
    static_value,
    truncation_bound,
)
from aamdp.gallery import build_counterexample_instance, build_fig1, robust_random
from aamdp.mdp import deterministic_policy
from aamdp.risk import ESSINF, ESSSUP, EXPECTATION, RiskSpec

STATIC, RESAMPLED = SamplingMode.STATIC, SamplingMode.RESAMPLED
ONE = np.ones((2, 1))


def _scenarios(nu):
    return [nu.scenarios(s) for s in range(nu.n_states)]


def test_default_horizon_and_bound():
    inst, _ = build_fig1(3)
    T = default_horizon(inst)
    assert 0.5**T / 0.5 <= 1e-6 < 0.5 ** (T - 1) / 0.5
    assert truncation_bound(inst, T) <= 1e-6


def test_fig1_static_expectation_exact():
    inst, nu = build_fig1(3)
    est = static_value(ONE, nu, EXPECTATION, inst)
    assert est.method == "exact"
    # mean of 1 / (1 - x/2) over x in {0, 1/2, 1}
    assert est.value[0] == pytest.approx(13 / 9, abs=1e-12)
    oracle = oracles.static_expectation(inst.rewards, _scenarios(nu), ONE, 0.5)
    np.testing.assert_allclose(est.value, oracle, atol=1e-12)
    assert np.all(est.stderr == 0)


def test_fig1_resampled_expectation():
    inst, nu = build_fig1(3)
    assert mean_kernel_value(ONE, nu, inst)[0] == pytest.approx(4 / 3, abs=1e-12)
    est = evaluate(ONE, nu, EXPECTATION, RESAMPLED, inst, EvalParams(n_samples=20000, seed=0))
    assert est.method == "monte_carlo" and est.stderr[0] > 0
    assert abs(est.value[0] - 4 / 3) <= 3 * est.stderr[0] + est.truncation_bound


def test_static_monte_carlo_when_over_budget():
    inst, nu = build_fig1(3)
    est = static_value(ONE, nu, EXPECTATION, inst, EvalParams(budget=2, n_samples=20000))
    assert est.method == "monte_carlo"
    assert abs(est.value[0] - 13 / 9) <= 4 * est.stderr[0]


def test_single_scenario_is_exact():
    inst, nu = build_fig1(1)
    est = evaluate(ONE, nu, RiskSpec.parse("cvar:0.5"), RESAMPLED, inst)
    assert est.method == "exact" and est.stderr.tolist() == [0.0, 0.0]
    # x = 1/2: 1 / (1 - 1/4)
    assert abs(est.value[0] - 4 / 3) <= est.truncation_bound + 1e-12


@pytest.mark.parametrize("seed", range(4))
def test_static_extremes_match_enumeration(seed):
    inst, nu = robust_random(seed, 3, 2, 3)
    pi = np.full((3, 2), 0.5)
    sc = _scenarios(nu)
    lo = static_value(pi, nu, ESSINF, inst).value
    hi = static_value(pi, nu, ESSSUP, inst).value
    np.testing.assert_allclose(lo, oracles.static_extreme(inst.rewards, sc, pi, inst.discount, np.min), atol=1e-12)
    np.testing.assert_allclose(hi, oracles.static_extreme(inst.rewards, sc, pi, inst.discount, np.max), atol=1e-12)


@pytest.mark.parametrize("seed", range(4))
@pytest.mark.parametrize("risk", ["essinf", "esssup"])
def test_resampled_extremes_match_backward_enumeration(seed, risk):
    inst, nu = robust_random(seed, 3, 1, 3, gamma=0.5)
    T = 12
    est = resampled_value_extremal(np.ones((3, 1)), nu, RiskSpec.parse(risk), T, inst)
    oracle = oracles.markov_enumeration(inst.rewards, _scenarios(nu), 0.5, T, risk, "resampled")
    np.testing.assert_allclose(est.value, oracle, atol=1e-12)


def test_sampling_is_reproducible_and_blockwise():
    inst, nu = robust_random(1, 3, 2, 3)
    pi = np.full((3, 2), 0.5)
    a = resampled_samples(pi, nu, inst, 10, 2048, seed=5)
    b = resampled_samples(pi, nu, inst, 10, 1024, seed=5)
    c = resampled_samples(pi, nu, inst, 10, 1024, seed=6)
    np.testing.assert_array_equal(a[:1024], b)
    assert not np.array_equal(b, c)


def test_invalid_policy_rejected():
    inst, nu = build_fig1(3)
    with pytest.raises(ValueError):
        evaluate(np.full((2, 1), 0.5), nu, EXPECTATION, STATIC, inst)


# ------------------------------------------------------------------ dp_check


def test_counterexample_static_violated():
    inst, nu = build_counterexample_instance(0.5, 2000)
    rep = dp_check(ONE, nu, EXPECTATION, mode=STATIC, instance=inst)
    # closed forms for the uniform self-loop: 2 log 2 and 1 + log(2) / 2
    assert rep.V[0] == pytest.approx(2 * math.log(2), abs=5e-4)
    assert rep.TV[0] == pytest.approx(1 + math.log(2) / 2, abs=5e-4)
    assert rep.residual_sup == pytest.approx(0.039721, abs=1e-3)
    assert rep.verdict == VIOLATED and rep.method == "exact"


def test_counterexample_resampled_holds():
    inst, nu = build_counterexample_instance(0.5, 2000)
    rep = dp_check(ONE, nu, EXPECTATION, mode=RESAMPLED, instance=inst)
    assert rep.verdict == HOLDS
    assert rep.residual_sup <= 3 * rep.mc_stderr + rep.truncation_bound


def test_mixed_value_and_operator_risks():
    inst, nu = build_fig1(3)
    rep = dp_check(ONE, nu, EXPECTATION, ESSINF, STATIC, instance=inst)
    assert rep.operator_risk == ESSINF and rep.verdict == VIOLATED


@pytest.mark.parametrize("risk", ["essinf", "esssup"])
@pytest.mark.parametrize("mode", [STATIC, RESAMPLED])
def test_robust_and_optimistic_optimal_targets_hold(risk, mode):
    inst, nu = robust_random(2, 3, 2, 2)
    rep = dp_check("optimal", nu, RiskSpec.parse(risk), mode=mode, instance=inst)
    assert rep.verdict == HOLDS
    assert rep.residual_sup <= 1e-6


def test_optimal_target_needs_exact_strategy():
    inst, nu = build_fig1(3)
    with pytest.raises(ValueError):
        dp_check("best", nu, EXPECTATION, instance=inst)
    with pytest.raises(ValueError):
        dp_check("optimal", nu, RiskSpec.parse("cvar:0.5"), instance=inst)


def test_refine_midpoints():
    inst, nu = build_fig1(3)
    fine = refine_midpoints(nu)
    assert fine.counts.tolist() == [5, 1]
    assert fine.weights[0].sum() == pytest.approx(1.0)
    np.testing.assert_allclose(fine.blocks[0, :5, 0, 0], [0, 0.25, 0.5, 0.75, 1.0])


def test_refined_check_records_shrinking_residuals():
    inst, nu = build_counterexample_instance(0.5, 8)
    rep = dp_check_refined(ONE, nu, ESSINF, mode=STATIC, instance=inst, levels=2)
    assert rep.verdict == HOLDS
    assert [r["max_scenarios"] for r in rep.refinement] == [8, 15, 29]
    res = [r["residual"] for r in rep.refinement]
    assert all(b <= a / 2 + 1e-12 for a, b in zip(res, res[1:]))


def test_refined_expectation_static_stays_violated():
    inst, nu = build_counterexample_instance(0.5, 16)
    rep = dp_check_refined(ONE, nu, EXPECTATION, mode=STATIC, instance=inst, levels=1)
    assert rep.verdict == VIOLATED


def test_report_serializes():
    inst, nu = build_fig1(3)
    d = dp_check(ONE, nu, ESSINF, instance=inst).as_dict()
    assert d["verdict"] in (HOLDS, VIOLATED, INCONCLUSIVE)
    assert d["mode"] == "static" and d["value_risk"] == "essinf"
