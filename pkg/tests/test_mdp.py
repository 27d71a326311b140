import numpy as np
import pytest

import oracles
from aamdp.mdp import (
    DimensionError,
    MdpInstance,
    batched_policy_values,
    deterministic_policy,
    kernel_problems,
    nominal_bellman,
    nominal_value,
    policy_matrices,
    policy_problems,
    validate_instance,
)


def _random(seed, S=4, A=3, gamma=0.9):
    rng = np.random.default_rng(seed)
    inst = MdpInstance(rng.uniform(-1, 1, (S, A, S)), gamma, np.full(S, 1 / S))
    P = rng.dirichlet(np.ones(S), size=(S, A))
    pi = rng.dirichlet(np.ones(A), size=S)
    return inst, P, pi


def test_default_names_and_bounds():
    inst, _, _ = _random(0)
    assert inst.state_names == ("s0", "s1", "s2", "s3")
    assert inst.action_names == ("a0", "a1", "a2")
    assert inst.r_max == np.abs(inst.rewards).max()
    assert inst.value_bound() == pytest.approx(inst.r_max / 0.1)


def test_rewards_must_be_3d():
    with pytest.raises(DimensionError):
        MdpInstance(np.zeros((2, 2)), 0.5, [1.0, 0.0])


def test_validation_messages():
    inst = MdpInstance(np.zeros((2, 1, 2)), 1.0, [0.7, 0.7])
    problems = validate_instance(inst)
    assert any("discount" in p for p in problems)
    assert any("initial" in p for p in problems)
    assert kernel_problems(np.array([[[0.5, 0.6]], [[1.0, 0.0]]]), 2, 1)
    assert policy_problems(np.array([[0.5, 0.4]]), 1, 2)
    assert not policy_problems(np.array([[0.5, 0.5]]), 1, 2)


def test_nominal_value_matches_linear_solve():
    for seed in range(5):
        inst, P, pi = _random(seed)
        v = nominal_value(pi, P, inst)
        np.testing.assert_allclose(v, oracles.policy_value(inst.rewards, P, pi, inst.discount), atol=1e-12)
        np.testing.assert_allclose(nominal_bellman(v, pi, P, inst), v, atol=1e-12)


def test_policy_matrices_rows_are_stochastic():
    inst, P, pi = _random(1)
    p_pi, r_pi = policy_matrices(pi, P, inst)
    np.testing.assert_allclose(p_pi.sum(axis=1), 1.0)
    assert r_pi.shape == (4,)


def test_batched_values():
    inst, P, pi = _random(2)
    p_pi, r_pi = policy_matrices(pi, P, inst)
    out = batched_policy_values(np.stack([p_pi, p_pi]), np.stack([r_pi, r_pi]), inst.discount)
    np.testing.assert_allclose(out[0], nominal_value(pi, P, inst), atol=1e-12)
    np.testing.assert_allclose(out[1], out[0])


def test_deterministic_policy():
    np.testing.assert_array_equal(deterministic_policy([1, 0], 3), [[0, 1, 0], [1, 0, 0]])
