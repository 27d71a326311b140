import math

import numpy as np
import pytest

from aamdp.bellman import SamplingMode
from aamdp.evaluator import dp_check
from aamdp.gallery import (
    LEMMA_STATES,
    build_counterexample_instance,
    build_fig1,
    build_lemma_mdp,
    coin,
    counterexample_values,
    find_var_witness,
    lemma_equation_residuals,
    lemma_presets,
    robust_random,
    table1_suite,
)
from aamdp.risk import DiscreteDistribution, RiskSpec, var


def test_fig1_grid():
    inst, nu = build_fig1(3)
    assert inst.state_names == ("Start", "End")
    np.testing.assert_allclose([b[0, 0] for _, b in nu.scenarios(0)], [0.0, 0.5, 1.0])
    _, single = build_fig1(1)
    assert single.scenarios(0)[0][1][0, 0] == 0.5
    with pytest.raises(ValueError):
        build_fig1(0)


def test_counterexample_midpoints_and_closed_forms():
    inst, nu = build_counterexample_instance(0.5, 4)
    np.testing.assert_allclose([b[0, 0] for _, b in nu.scenarios(0)], [0.125, 0.375, 0.625, 0.875])
    v, tv = counterexample_values(0.5)
    assert v == pytest.approx(2 * math.log(2))
    assert tv == pytest.approx(1 + math.log(2) / 2)


def _rand_unit(rng, k=3):
    return DiscreteDistribution(np.round(rng.uniform(0, 1, k), 3), rng.dirichlet(np.ones(k)))


@pytest.mark.parametrize("text", ["expectation", "essinf", "esssup"])
def test_lemma_identity_holds_for_compatible_measures(text):
    spec = RiskSpec.parse(text)
    rng = np.random.default_rng(0)
    for _ in range(10):
        X, Y, Z = _rand_unit(rng), _rand_unit(rng), _rand_unit(rng)
        assert max(lemma_equation_residuals(X, Y, Z, spec)) <= 1e-10


def test_cvar_witness_residual():
    p = lemma_presets()["cvar-witness"]
    res = lemma_equation_residuals(p.X, p.Y, p.Z, RiskSpec.parse("cvar:0.5"), p.gamma, p.a, p.b, p.c, p.d)
    # Start law is uniform on {0, 1/2, 1, 3/2}; the operator side is {0, 1}
    assert res[0] == pytest.approx(0.25)
    assert max(res[1:]) == 0.0


def test_var_witness_is_reproducible():
    p = lemma_presets()["var-witness"]
    found = find_var_witness(seed=0)
    for a, b in [(p.X, found.X), (p.Y, found.Y), (p.Z, found.Z)]:
        np.testing.assert_allclose(a.values, b.values)
        np.testing.assert_allclose(a.weights, b.weights, atol=1e-15)
    assert lemma_equation_residuals(p.X, p.Y, p.Z, var(0.5))[0] == pytest.approx(0.09375)


@pytest.mark.parametrize("name, text", [("coin", "expectation"), ("cvar-witness", "cvar:0.5"), ("var-witness", "var:0.5")])
def test_lemma_mdp_matches_distribution_residuals(name, text):
    p = lemma_presets()[name]
    spec = RiskSpec.parse(text)
    inst, nu = build_lemma_mdp(p.X, p.Y, p.Z, p.a, p.b, p.c, p.d, p.gamma)
    assert inst.state_names == LEMMA_STATES
    rep = dp_check(np.ones((7, 1)), nu, spec, mode=SamplingMode.STATIC, instance=inst)
    expected = lemma_equation_residuals(p.X, p.Y, p.Z, spec, p.gamma, p.a, p.b, p.c, p.d)
    np.testing.assert_allclose(rep.residual_per_state, expected, atol=1e-8)


def test_lemma_inputs_must_fit_the_interval():
    with pytest.raises(ValueError):
        build_lemma_mdp(coin(0.0, 2.0), coin(), coin())


def test_robust_random_is_seeded_and_valid():
    inst, nu = robust_random(4, 3, 2, 4)
    inst2, nu2 = robust_random(4, 3, 2, 4)
    assert inst == inst2
    np.testing.assert_array_equal(nu.blocks, nu2.blocks)
    assert nu.problems() == []
    assert np.all(np.abs(inst.rewards) <= 1.0)


def test_table1_suite_expectations():
    suite = table1_suite(robust_atoms=8, multi_atoms=16)
    table = {e.variant: (str(e.risk), e.expected) for e in suite}
    assert table["robust"] == ("essinf", {"static": True, "resampled": True})
    assert table["optimistic"][1] == {"static": True, "resampled": True}
    assert table["multi-model"] == ("expectation", {"static": False, "resampled": True})
    assert table["percentile"] == ("var:0.5", {"static": False, "resampled": False})
