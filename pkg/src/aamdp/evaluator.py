"""Ground-truth policy evaluation and dynamic-programming checks.

Static kernels are drawn once, so a policy's value at each state is a random
variable over joint kernels; it is enumerated exactly when the joint support
is small and sampled otherwise.  Resampled kernels are redrawn every period;
values are computed over truncated horizons.  For ess inf and ess sup in the
resampled setting the extreme is computed exactly by propagating the set of
reachable value vectors, since sampling cannot find an extreme sequence.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .bellman import (
    EXACT,
    GreedyStrategy,
    IncompatibleStrategy,
    KernelDistribution,
    SamplingMode,
    apply_optimal_operator,
    apply_policy_operator,
)
from .mdp import MdpInstance, batched_policy_values, deterministic_policy, nominal_value
from .risk import RiskKind, RiskSpec, rho_batch

BLOCK = 1024
BOOTSTRAP = 200
DET_POLICY_CAP = 256
PARETO_TOL = 1e-12


@dataclass(frozen=True)
class EvalParams:
    budget: int = 100_000
    n_samples: int = 20_000
    horizon: int | None = None
    seed: int = 0
    bootstrap: int = BOOTSTRAP

    def __post_init__(self):
        if self.budget < 1 or self.n_samples < 1 or self.bootstrap < 2:
            raise ValueError("budget, n_samples must be >= 1 and bootstrap >= 2")
        if self.horizon is not None and self.horizon < 1:
            raise ValueError("horizon must be >= 1")


@dataclass
class EvalEstimate:
    value: np.ndarray
    method: str
    stderr: np.ndarray
    truncation_bound: float = 0.0
    n_samples: int = 0
    horizon: int = 0
    seed: int | None = None
    samples: np.ndarray | None = field(default=None, repr=False)

    def as_dict(self) -> dict:
        return {
            "value": self.value.tolist(),
            "method": self.method,
            "stderr": self.stderr.tolist(),
            "truncation_bound": self.truncation_bound,
            "n_samples": self.n_samples,
            "horizon": self.horizon,
            "seed": self.seed,
        }


def default_horizon(instance: MdpInstance, tol: float = 1e-6) -> int:
    """Smallest ``T`` with ``gamma^T max(R_max, 1) / (1 - gamma) <= tol``."""
    gamma = instance.discount
    if gamma == 0.0:
        return 1
    scale = max(instance.r_max, 1.0)
    return max(1, math.ceil(math.log(tol * (1.0 - gamma) / scale) / math.log(gamma)))


def truncation_bound(instance: MdpInstance, horizon: int) -> float:
    return instance.discount**horizon * instance.r_max / (1.0 - instance.discount)


def _block_rng(seed: int, block: int) -> np.random.Generator:
    # counter-based split: block b always gets the same stream
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(block,)))


def _boot_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(2**31 - 1,)))


def _uniform(n: int) -> np.ndarray:
    return np.full(n, 1.0 / n)


def _bootstrap_stderr(spec: RiskSpec, samples: np.ndarray, seed: int, n_boot: int) -> np.ndarray:
    n, S = samples.shape
    if spec.kind is RiskKind.EXPECTATION or (spec.kind is RiskKind.ERM and abs(spec.param) < 1e-12):
        return samples.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros(S)
    rng = _boot_rng(seed)
    est = np.empty((n_boot, S))
    w = _uniform(n)
    for b in range(n_boot):
        pick = rng.integers(0, n, size=n)
        est[b] = rho_batch(spec, samples[pick].T, w)
    return est.std(axis=0, ddof=1)


def _check_policy(policy, instance: MdpInstance, nu: KernelDistribution) -> np.ndarray:
    from .mdp import policy_problems

    policy = np.asarray(policy, dtype=float)
    problems = policy_problems(policy, instance.n_states, instance.n_actions)
    nu.validate(instance)
    if problems:
        raise ValueError("; ".join(problems))
    return policy


def static_samples(policy, nu: KernelDistribution, instance: MdpInstance, params: EvalParams = EvalParams()):
    """Values of ``policy`` per joint kernel: ``(values[n, s], weights[n], exact)``."""
    policy = _check_policy(policy, instance, nu)
    p_pi, r_pi = nu.policy_rows(policy, instance)
    states = np.arange(instance.n_states)
    gamma = instance.discount
    if nu.joint_count <= params.budget:
        idx, w = nu.joint_indices(params.budget)
        return batched_policy_values(p_pi[states, idx], r_pi[states, idx], gamma), w, True
    chunks = []
    for b, lo in enumerate(range(0, params.n_samples, BLOCK)):
        m = min(BLOCK, params.n_samples - lo)
        idx = nu.sample_indices(_block_rng(params.seed, b), m)
        chunks.append(batched_policy_values(p_pi[states, idx], r_pi[states, idx], gamma))
    return np.vstack(chunks), _uniform(params.n_samples), False


def static_value(
    policy, nu: KernelDistribution, spec: RiskSpec, instance: MdpInstance, params: EvalParams = EvalParams()
) -> EvalEstimate:
    """``rho`` of the policy's value under a kernel drawn once.

    Enumerates every joint kernel when there are at most ``params.budget`` of
    them, otherwise samples ``params.n_samples`` joint kernels.
    """
    values, w, exact = static_samples(policy, nu, instance, params)
    est = rho_batch(spec, values.T, w)
    if exact:
        return EvalEstimate(est, "exact", np.zeros_like(est), samples=values)
    se = _bootstrap_stderr(spec, values, params.seed, params.bootstrap)
    return EvalEstimate(est, "monte_carlo", se, 0.0, params.n_samples, 0, params.seed, samples=values)


def resampled_samples(policy, nu: KernelDistribution, instance: MdpInstance, horizon: int, n_samples: int, seed: int):
    """Truncated values ``v0[n, s]`` along ``n_samples`` sampled kernel sequences."""
    policy = _check_policy(policy, instance, nu)
    if horizon < 1 or n_samples < 1:
        raise ValueError("horizon and n_samples must be >= 1")
    p_pi, r_pi = nu.policy_rows(policy, instance)
    chunks = []
    for b, lo in enumerate(range(0, n_samples, BLOCK)):
        m = min(BLOCK, n_samples - lo)
        idx = nu.sample_indices(_block_rng(seed, b), (m, horizon))
        chunks.append(kernels.resampled_backward(p_pi, r_pi, idx, instance.discount))
    return np.vstack(chunks)


def resampled_value_mc(
    policy,
    nu: KernelDistribution,
    spec: RiskSpec,
    horizon: int,
    n_samples: int,
    seed: int,
    instance: MdpInstance,
    bootstrap: int = BOOTSTRAP,
) -> EvalEstimate:
    """Monte-Carlo ``rho`` of the truncated value under resampled kernels."""
    values = resampled_samples(policy, nu, instance, horizon, n_samples, seed)
    est = rho_batch(spec, values.T, _uniform(n_samples))
    se = _bootstrap_stderr(spec, values, seed, bootstrap)
    return EvalEstimate(
        est, "monte_carlo", se, truncation_bound(instance, horizon), n_samples, horizon, seed, samples=values
    )


def _pareto(points: np.ndarray, minimize: bool) -> np.ndarray:
    """Rows not weakly dominated by another row (duplicates collapse to one)."""
    pts = points if minimize else -points
    pts = np.unique(pts, axis=0)
    order = np.argsort(pts.sum(axis=1), kind="stable")
    pts = pts[order]
    keep = []
    for i, p in enumerate(pts):
        if keep:
            kept = pts[keep]
            if np.any(np.all(kept <= p + PARETO_TOL, axis=1)):
                continue
        keep.append(i)
    out = pts[keep]
    return out if minimize else -out


def resampled_value_extremal(
    policy, nu: KernelDistribution, spec: RiskSpec, horizon: int, instance: MdpInstance
) -> EvalEstimate:
    """Exact truncated ess inf / ess sup over all resampled kernel sequences.

    Propagates backwards the set of value vectors reachable by some kernel
    sequence.  For a fixed continuation vector each state's scenario only moves
    that state's coordinate, so the extreme successors are coordinatewise; the
    set is then pruned to its Pareto frontier (lower for ess inf, upper for ess
    sup), which is all that matters because transition rows are nonnegative.
    """
    if spec.kind not in (RiskKind.ESSINF, RiskKind.ESSSUP):
        raise ValueError("extremal evaluation covers ess inf and ess sup only")
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    policy = _check_policy(policy, instance, nu)
    minimize = spec.kind is RiskKind.ESSINF
    p_pi, r_pi = nu.policy_rows(policy, instance)
    S = instance.n_states
    frontier = np.zeros((1, S))
    for _ in range(horizon):
        succ = r_pi[:, :, None] + instance.discount * np.einsum("skt,nt->skn", p_pi, frontier)
        # padded scenarios repeat scenario 0, so they never change the extreme
        succ = succ.min(axis=1) if minimize else succ.max(axis=1)
        frontier = _pareto(succ.T, minimize)
    value = frontier.min(axis=0) if minimize else frontier.max(axis=0)
    return EvalEstimate(value, "extremal", np.zeros(S), truncation_bound(instance, horizon), 0, horizon, None)


def mean_kernel_value(policy, nu: KernelDistribution, instance: MdpInstance) -> np.ndarray:
    """Resampled expectation value: the nominal value under the mean kernel."""
    policy = _check_policy(policy, instance, nu)
    return nominal_value(policy, nu.mean_kernel(), instance)


def evaluate(
    policy,
    nu: KernelDistribution,
    spec: RiskSpec,
    mode: SamplingMode,
    instance: MdpInstance,
    params: EvalParams = EvalParams(),
) -> EvalEstimate:
    """Dispatch to the exact or sampled evaluator suited to ``mode`` and ``spec``."""
    mode = SamplingMode(mode)
    if mode is SamplingMode.STATIC:
        return static_value(policy, nu, spec, instance, params)
    horizon = params.horizon or default_horizon(instance)
    if spec.kind in (RiskKind.ESSINF, RiskKind.ESSSUP):
        return resampled_value_extremal(policy, nu, spec, horizon, instance)
    if nu.joint_count == 1:
        # a single kernel: no randomness, the truncated value is exact
        value = resampled_samples(policy, nu, instance, horizon, 1, params.seed)[0]
        return EvalEstimate(value, "exact", np.zeros_like(value), truncation_bound(instance, horizon), 1, horizon)
    return resampled_value_mc(
        policy, nu, spec, horizon, params.n_samples, params.seed, instance, bootstrap=params.bootstrap
    )


# --- dynamic-programming checks ---------------------------------------------

HOLDS = "holds"
VIOLATED = "violated"
INCONCLUSIVE = "inconclusive"


@dataclass
class DpCheckReport:
    mode: SamplingMode
    value_risk: RiskSpec
    operator_risk: RiskSpec
    V: np.ndarray
    TV: np.ndarray
    residual_per_state: np.ndarray
    residual_sup: float
    mc_stderr: float
    verdict: str
    tolerance: float = 1e-3
    method: str = "exact"
    noise: float = 0.0
    truncation_bound: float = 0.0
    target: str = "policy"
    policy: np.ndarray | None = None
    refinement: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "mode": self.mode.value,
            "value_risk": str(self.value_risk),
            "operator_risk": str(self.operator_risk),
            "target": self.target,
            "V": self.V.tolist(),
            "TV": self.TV.tolist(),
            "residual_per_state": self.residual_per_state.tolist(),
            "residual_sup": self.residual_sup,
            "mc_stderr": self.mc_stderr,
            "noise": self.noise,
            "truncation_bound": self.truncation_bound,
            "tolerance": self.tolerance,
            "method": self.method,
            "verdict": self.verdict,
            "policy": None if self.policy is None else self.policy.tolist(),
            "refinement": self.refinement,
        }


def _candidate_policies(nu, spec, strategy, instance):
    """Deterministic stationary policies (when few) plus the value-iteration policy."""
    from .solvers import value_iteration

    S, A = instance.n_states, instance.n_actions
    cands = []
    if A**S <= DET_POLICY_CAP:
        grids = np.indices((A,) * S).reshape(S, -1).T
        cands = [deterministic_policy(g, A) for g in grids]
    cands.append(value_iteration(nu, spec, strategy, 1e-10, instance).policy)
    return cands


def _operator(V, target, nu, spec, strategy, instance):
    if isinstance(target, str):
        return apply_optimal_operator(V, nu, spec, strategy, instance)[0]
    return apply_policy_operator(V, target, nu, spec, instance)


def _estimate_with_samples(policies, nu, spec, mode, instance, params):
    """Per-candidate estimates; the max over candidates is taken per state."""
    ests = [evaluate(p, nu, spec, mode, instance, params) for p in policies]
    values = np.array([e.value for e in ests])
    best = values.argmax(axis=0)
    V = values[best, np.arange(instance.n_states)]
    return V, ests, best


def dp_check(
    target,
    nu: KernelDistribution,
    value_risk: RiskSpec,
    operator_risk: RiskSpec | None = None,
    mode: SamplingMode = SamplingMode.STATIC,
    tolerance: float = 1e-3,
    params: EvalParams = EvalParams(),
    instance: MdpInstance | None = None,
    strategy: GreedyStrategy | None = None,
) -> DpCheckReport:
    """Compare a value function with its image under the Bellman operator.

    ``target`` is a policy matrix (policy-evaluation equation) or the string
    ``"optimal"`` (optimality equation; the value is the best over all
    deterministic stationary policies and the value-iteration policy).  The
    value is computed under ``value_risk`` and the operator uses
    ``operator_risk``, which defaults to the same measure.

    Verdicts: exact evaluations hold when the sup residual is at most
    ``tolerance``.  Sampled evaluations hold when every state's residual is
    within three bootstrap standard errors of the residual plus the truncation
    bound, are violated when some residual exceeds that noise level plus
    ``tolerance``, and are inconclusive in between.
    """
    if instance is None:
        raise TypeError("instance is required")
    operator_risk = operator_risk or value_risk
    mode = SamplingMode(mode)
    optimal = isinstance(target, str)
    if optimal:
        if target != "optimal":
            raise ValueError(f"unknown target {target!r}")
        strategy = strategy or EXACT
        if not strategy.is_exact_for(operator_risk):
            raise IncompatibleStrategy(f"no exact greedy strategy for {operator_risk}")
        policies = _candidate_policies(nu, operator_risk, strategy, instance)
    else:
        policies = [_check_policy(target, instance, nu)]
        strategy = strategy or EXACT

    V, ests, best = _estimate_with_samples(policies, nu, value_risk, mode, instance, params)
    op_target = "optimal" if optimal else policies[0]
    TV = _operator(V, op_target, nu, operator_risk, strategy, instance)
    diff = V - TV
    residual = np.abs(diff)
    bound = max(e.truncation_bound for e in ests)
    sampled = any(e.method == "monte_carlo" for e in ests)
    S = instance.n_states

    if not sampled:
        se = np.zeros(S)
        noise = np.full(S, bound)
        verdict = HOLDS if residual.max() <= tolerance + bound else VIOLATED
        method = "extremal" if any(e.method == "extremal" for e in ests) else "exact"
    else:
        # bootstrap the signed residual, resampling the same rows for every
        # candidate policy (they share kernel draws through the seed)
        n = ests[0].samples.shape[0]
        w = _uniform(n)
        rng = _boot_rng(params.seed + 1)
        boots = np.empty((params.bootstrap, S))
        for b in range(params.bootstrap):
            pick = rng.integers(0, n, size=n)
            vals = np.array(
                [
                    e.value if e.samples is None else rho_batch(value_risk, e.samples[pick].T, w)
                    for e in ests
                ]
            )
            Vb = vals.max(axis=0)
            boots[b] = Vb - _operator(Vb, op_target, nu, operator_risk, strategy, instance)
        se = boots.std(axis=0, ddof=1)
        noise = 3.0 * se + bound
        if np.all(residual <= noise + 1e-9):
            verdict = HOLDS
        elif np.any(residual > tolerance + noise):
            verdict = VIOLATED
        else:
            verdict = INCONCLUSIVE
        method = "monte_carlo"

    return DpCheckReport(
        mode=mode,
        value_risk=value_risk,
        operator_risk=operator_risk,
        V=V,
        TV=TV,
        residual_per_state=residual,
        residual_sup=float(residual.max()),
        mc_stderr=float(se.max()),
        verdict=verdict,
        tolerance=tolerance,
        method=method,
        noise=float(noise.max()),
        truncation_bound=bound,
        target="optimal" if optimal else "policy",
        policy=None if optimal else policies[0],
    )


def refine_midpoints(nu: KernelDistribution) -> KernelDistribution:
    """Insert the midpoint block between consecutive scenarios of every state.

    Each gap's midpoint receives half of the two neighbours' weight shares, so a
    midpoint discretization of a continuous law doubles in resolution.
    """
    scenarios = []
    for s in range(nu.n_states):
        sc = nu.scenarios(s)
        if len(sc) == 1:
            scenarios.append(sc)
            continue
        out = []
        for k, (w, block) in enumerate(sc):
            out.append((w, block))
            if k + 1 < len(sc):
                w2, block2 = sc[k + 1]
                out.append(((w + w2) / 2.0, 0.5 * (block + block2)))
        total = sum(w for w, _ in out)
        scenarios.append([(w / total, b) for w, b in out])
    return KernelDistribution.from_scenarios(scenarios)


def dp_check_refined(target, nu, value_risk, operator_risk=None, mode=SamplingMode.STATIC, tolerance=1e-3,
                     params: EvalParams = EvalParams(), instance=None, strategy=None, levels: int = 2):
    """``dp_check`` repeated on midpoint refinements of the scenario support.

    A "holds" verdict additionally requires every refinement to at least halve
    the residual (up to 1e-12) and the last residual to be within
    ``tolerance``.  The residual sequence is attached to the report.
    """
    reports = []
    current = nu
    for level in range(levels + 1):
        rep = dp_check(target, current, value_risk, operator_risk, mode, tolerance, params, instance, strategy)
        reports.append(rep)
        if level < levels:
            current = refine_midpoints(current)
    final = reports[-1]
    residuals = [r.residual_sup for r in reports]
    shrinking = all(b <= a / 2.0 + 1e-12 for a, b in zip(residuals, residuals[1:]))
    final.refinement = [
        {"level": i, "max_scenarios": int(refine_count), "residual": r}
        for i, (r, refine_count) in enumerate(zip(residuals, _scenario_counts(nu, levels)))
    ]
    if final.verdict == HOLDS and not (shrinking and residuals[-1] <= tolerance):
        final.verdict = INCONCLUSIVE
    return final


def _scenario_counts(nu, levels):
    k = int(nu.counts.max())
    out = []
    for _ in range(levels + 1):
        out.append(k)
        k = 2 * k - 1 if k > 1 else 1
    return out
