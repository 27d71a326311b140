"""Law-invariant risk measures on finite discrete distributions.

All measures follow the reward convention: larger is better, and the
risk-averse measures (ess inf, VaR, CVaR, ERM with beta < 0, EVaR) look at
the lower tail.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np

WEIGHT_TOL = 1e-12
MERGE_TOL = 1e-12
ERM_ZERO = 1e-12

# EVaR search window and resolution
EVAR_BETA_MIN = 1e-4
EVAR_BETA_MAX = 1e4
EVAR_GRID = 200
EVAR_WIDTH = 1e-8

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class BudgetExceeded(RuntimeError):
    pass


class RiskParseError(ValueError):
    pass


def _canonical(values: np.ndarray, weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    order = np.argsort(values, kind="stable")
    x = values[order]
    w = weights[order]
    keep = w > 0.0
    if not keep.all():
        x, w = x[keep], w[keep]
    if x.size > 1:
        fresh = np.empty(x.size, dtype=bool)
        fresh[0] = True
        np.greater(np.diff(x), MERGE_TOL, out=fresh[1:])
        if not fresh.all():
            group = np.cumsum(fresh) - 1
            w = np.bincount(group, weights=w)
            x = x[fresh]
    return x, w


@dataclass(frozen=True, eq=False)
class DiscreteDistribution:
    """Weighted atoms, stored sorted ascending with equal values merged."""

    values: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.values, dtype=float)).ravel()
        w = np.atleast_1d(np.asarray(self.weights, dtype=float)).ravel()
        if x.size == 0:
            raise ValueError("empty atom list")
        if x.shape != w.shape:
            raise ValueError(f"{x.size} values but {w.size} weights")
        if not np.all(np.isfinite(x)):
            raise ValueError("atom values must be finite")
        if np.any(w < 0.0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be nonnegative")
        total = w.sum()
        if abs(total - 1.0) > WEIGHT_TOL:
            raise ValueError(f"weights sum to {total!r}, not 1")
        x, w = _canonical(x, w / total)
        object.__setattr__(self, "values", x)
        object.__setattr__(self, "weights", w)

    @classmethod
    def _trusted(cls, values, weights) -> "DiscreteDistribution":
        """Skip validation for internally generated atoms; still canonicalizes."""
        obj = object.__new__(cls)
        x, w = _canonical(np.asarray(values, dtype=float), np.asarray(weights, dtype=float))
        object.__setattr__(obj, "values", x)
        object.__setattr__(obj, "weights", w / w.sum())
        return obj

    @classmethod
    def from_atoms(cls, atoms) -> "DiscreteDistribution":
        atoms = list(atoms)
        if not atoms:
            raise ValueError("empty atom list")
        x, w = zip(*atoms)
        return cls(np.array(x, dtype=float), np.array(w, dtype=float))

    @classmethod
    def point(cls, c: float) -> "DiscreteDistribution":
        return cls(np.array([float(c)]), np.array([1.0]))

    @classmethod
    def uniform(cls, values) -> "DiscreteDistribution":
        x = np.asarray(values, dtype=float).ravel()
        return cls(x, np.full(x.size, 1.0 / x.size))

    @classmethod
    def empirical(cls, samples) -> "DiscreteDistribution":
        x = np.asarray(samples, dtype=float).ravel()
        if x.size == 0:
            raise ValueError("empty atom list")
        return cls._trusted(x, np.full(x.size, 1.0 / x.size))

    @property
    def atoms(self) -> list[tuple[float, float]]:
        return list(zip(self.values.tolist(), self.weights.tolist()))

    def __len__(self):
        return self.values.size

    def __eq__(self, other):
        if not isinstance(other, DiscreteDistribution):
            return NotImplemented
        return (
            self.values.shape == other.values.shape
            and np.allclose(self.values, other.values, rtol=0, atol=1e-12)
            and np.allclose(self.weights, other.weights, rtol=0, atol=1e-12)
        )

    def mean(self) -> float:
        return float(self.values @ self.weights)

    def shift(self, c: float) -> "DiscreteDistribution":
        return DiscreteDistribution._trusted(self.values + c, self.weights)

    def scale(self, a: float) -> "DiscreteDistribution":
        return DiscreteDistribution._trusted(self.values * a, self.weights)

    def map(self, fn: Callable[[np.ndarray], np.ndarray]) -> "DiscreteDistribution":
        return DiscreteDistribution._trusted(fn(self.values), self.weights)

    def cdf_points(self) -> np.ndarray:
        c = np.cumsum(self.weights)
        c[-1] = 1.0
        return c


class RiskKind(str, Enum):
    EXPECTATION = "expectation"
    ESSINF = "essinf"
    ESSSUP = "esssup"
    VAR = "var"
    CVAR = "cvar"
    ERM = "erm"
    EVAR = "evar"


_PARAM_KINDS = {RiskKind.VAR, RiskKind.CVAR, RiskKind.ERM, RiskKind.EVAR}


@dataclass(frozen=True)
class RiskSpec:
    """A risk measure choice.  ``param`` is alpha for VaR/CVaR/EVaR and beta for ERM."""

    kind: RiskKind
    param: float | None = None

    def __post_init__(self):
        kind = RiskKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind in _PARAM_KINDS:
            if self.param is None:
                raise ValueError(f"{kind.value} needs a parameter")
            p = float(self.param)
            if not math.isfinite(p):
                raise ValueError(f"{kind.value} parameter must be finite")
            if kind is RiskKind.CVAR and not 0.0 <= p <= 1.0:
                raise ValueError(f"cvar alpha must lie in [0, 1], got {p}")
            if kind in (RiskKind.VAR, RiskKind.EVAR) and not 0.0 < p < 1.0:
                raise ValueError(f"{kind.value} alpha must lie in (0, 1), got {p}")
            object.__setattr__(self, "param", p)
        elif self.param is not None:
            raise ValueError(f"{kind.value} takes no parameter")

    @classmethod
    def parse(cls, text: str) -> "RiskSpec":
        """Parse ``expectation | essinf | esssup | var:<a> | cvar:<a> | erm:<b> | evar:<a>``."""
        text = text.strip().lower()
        name, _, arg = text.partition(":")
        try:
            kind = RiskKind(name)
        except ValueError:
            raise RiskParseError(f"unknown risk measure {name!r}") from None
        if kind in _PARAM_KINDS:
            if not arg:
                raise RiskParseError(f"{name} requires a parameter, e.g. {name}:0.5")
            try:
                value = float(arg)
            except ValueError:
                raise RiskParseError(f"bad parameter {arg!r} for {name}") from None
            try:
                return cls(kind, value)
            except ValueError as exc:
                raise RiskParseError(str(exc)) from None
        if arg:
            raise RiskParseError(f"{name} takes no parameter")
        return cls(kind)

    def __str__(self):
        if self.param is None:
            return self.kind.value
        return f"{self.kind.value}:{self.param:g}"

    @property
    def dp_exact(self) -> bool:
        """True for the measures whose greedy step has an exact solver."""
        return self.kind in (RiskKind.EXPECTATION, RiskKind.ESSINF, RiskKind.ESSSUP)

    def __call__(self, dist: DiscreteDistribution) -> float:
        return rho_eval(self, dist)


EXPECTATION = RiskSpec(RiskKind.EXPECTATION)
ESSINF = RiskSpec(RiskKind.ESSINF)
ESSSUP = RiskSpec(RiskKind.ESSSUP)


def var(alpha: float) -> RiskSpec:
    return RiskSpec(RiskKind.VAR, alpha)


def cvar(alpha: float) -> RiskSpec:
    return RiskSpec(RiskKind.CVAR, alpha)


def erm(beta: float) -> RiskSpec:
    return RiskSpec(RiskKind.ERM, beta)


def evar(alpha: float) -> RiskSpec:
    return RiskSpec(RiskKind.EVAR, alpha)


def _var(x, w, alpha):
    cum = np.cumsum(w)
    # strict inequality F(x) > 1 - alpha; ties within round-off resolve upward
    i = int(np.searchsorted(cum, 1.0 - alpha + WEIGHT_TOL, side="right"))
    return x[min(i, x.size - 1)]


def _cvar(x, w, alpha):
    if alpha == 0.0:
        return float(x @ w)
    if alpha == 1.0:
        return x[0]
    mass = 1.0 - alpha
    before = np.cumsum(w) - w
    take = np.clip(mass - before, 0.0, w)
    return float(take @ x) / mass


def _logsumexp(z, w):
    """``log sum_i w_i exp(z_i)`` along the last axis, shifted by the max."""
    m = z.max(axis=-1, keepdims=True)
    return np.log(np.sum(np.exp(z - m) * w, axis=-1)) + m[..., 0]


def _erm(x, w, beta):
    if abs(beta) < ERM_ZERO:
        return float(x @ w)
    return float(_logsumexp(beta * x, w)) / beta


def _evar_objective(beta, X, w, log_tail):
    """Objective at ``beta`` (shape ``(..., n)``) for the rows of ``X`` (n, K)."""
    return -_logsumexp(-beta[..., None] * X, w) / beta + log_tail / beta


def _evar_rows(X, w, alpha, return_beta=False):
    """EVaR of every row of ``X`` under weights ``w`` (shape (K,) or (n, K)).

    With ``return_beta`` also returns the maximizing beta per row (``inf``
    where the essential-infimum limit wins).

    Grid search over log(beta), then golden-section refinement run in
    lockstep across rows (every row needs the same number of steps).
    """
    X = np.atleast_2d(X)
    n = X.shape[0]
    lo = X.min(axis=1)
    log_tail = math.log1p(-alpha)
    grid = np.linspace(math.log(EVAR_BETA_MIN), math.log(EVAR_BETA_MAX), EVAR_GRID)
    vals = _evar_objective(np.exp(grid)[:, None] * np.ones(n), X, w, log_tail)
    i = np.argmax(vals, axis=0)
    best = vals[i, np.arange(n)]
    # the objective is concave in 1/beta, hence unimodal in log(beta)
    a = grid[np.maximum(i - 1, 0)]
    b = grid[np.minimum(i + 1, grid.size - 1)]
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc = _evar_objective(np.exp(c), X, w, log_tail)
    fd = _evar_objective(np.exp(d), X, w, log_tail)
    steps = math.ceil(math.log(EVAR_WIDTH / (2 * (grid[1] - grid[0]))) / math.log(_GOLDEN))
    for _ in range(max(steps, 0)):
        left = fc >= fd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        keep = np.where(left, c, d)
        fkeep = np.where(left, fc, fd)
        probe = np.where(left, b - _GOLDEN * (b - a), a + _GOLDEN * (b - a))
        fprobe = _evar_objective(np.exp(probe), X, w, log_tail)
        c = np.where(left, probe, keep)
        fc = np.where(left, fprobe, fkeep)
        d = np.where(left, keep, probe)
        fd = np.where(left, fkeep, fprobe)
    refined = fc >= fd
    beta = np.where(refined, np.exp(c), np.exp(d))
    top = np.where(refined, fc, fd)
    beta = np.where(top >= best, beta, np.exp(grid[i]))
    best = np.maximum(best, top)
    # beta -> infinity limit is the essential infimum
    at_inf = lo >= best
    value = np.where(at_inf, lo, best)
    if return_beta:
        return value, np.where(at_inf, np.inf, beta)
    return value


def _evar(x, w, alpha):
    if x.size == 1:
        return x[0]
    return _evar_rows(x[None, :], w, alpha)[0]


def rho_arrays(spec: RiskSpec, x: np.ndarray, w: np.ndarray) -> float:
    """Evaluate ``spec`` on canonical (sorted, merged, positive-weight) atoms."""
    kind = spec.kind
    if kind is RiskKind.EXPECTATION:
        return float(x @ w)
    if kind is RiskKind.ESSINF:
        return float(x[0])
    if kind is RiskKind.ESSSUP:
        return float(x[-1])
    if kind is RiskKind.VAR:
        return float(_var(x, w, spec.param))
    if kind is RiskKind.CVAR:
        return float(_cvar(x, w, spec.param))
    if kind is RiskKind.ERM:
        return _erm(x, w, spec.param)
    if kind is RiskKind.EVAR:
        return float(_evar(x, w, spec.param))
    raise ValueError(f"unknown risk kind {kind}")


def rho_batch(spec: RiskSpec, X, w) -> np.ndarray:
    """Risk of each row of ``X`` (n, K) as a distribution with weights ``w``.

    ``w`` is either shared, shape (K,), or per row, shape (n, K).  Rows need not
    be sorted and zero weights are allowed, but ess inf/ess sup look at every
    entry, so padding entries must repeat a real atom.  Matches ``rho_arrays``
    up to the atom-merge tolerance.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    w = np.asarray(w, dtype=float)
    kind = spec.kind
    if kind is RiskKind.EXPECTATION:
        return np.sum(X * w, axis=1)
    if kind is RiskKind.ESSINF:
        return X.min(axis=1)
    if kind is RiskKind.ESSSUP:
        return X.max(axis=1)
    if kind is RiskKind.ERM:
        if abs(spec.param) < ERM_ZERO:
            return np.sum(X * w, axis=1)
        return _logsumexp(spec.param * X, w) / spec.param
    if kind is RiskKind.EVAR:
        return _evar_rows(X, w, spec.param)
    order = np.argsort(X, axis=1, kind="stable")
    xs = np.take_along_axis(X, order, axis=1)
    ws = np.take_along_axis(np.broadcast_to(w, X.shape), order, axis=1)
    cum = np.cumsum(ws, axis=1)
    if kind is RiskKind.VAR:
        i = np.sum(cum <= 1.0 - spec.param + WEIGHT_TOL, axis=1)
        i = np.minimum(i, X.shape[1] - 1)
        return xs[np.arange(X.shape[0]), i]
    if kind is RiskKind.CVAR:
        alpha = spec.param
        if alpha == 0.0:
            return np.sum(X * w, axis=1)
        if alpha == 1.0:
            return xs[:, 0]
        mass = 1.0 - alpha
        take = np.clip(mass - (cum - ws), 0.0, ws)
        return np.sum(take * xs, axis=1) / mass
    raise ValueError(f"unknown risk kind {kind}")


def rho_eval(spec: RiskSpec, dist: DiscreteDistribution) -> float:
    return rho_arrays(spec, dist.values, dist.weights)


def rho_samples(spec: RiskSpec, values, weights=None) -> float:
    """Risk of raw (unsorted, possibly repeated) atoms; uniform weights by default."""
    values = np.asarray(values, dtype=float).ravel()
    if weights is None:
        weights = np.full(values.size, 1.0 / values.size)
    x, w = _canonical(values, np.asarray(weights, dtype=float).ravel())
    return rho_arrays(spec, x, w / w.sum())


def cvar_variational(dist: DiscreteDistribution, alpha: float, xi) -> np.ndarray:
    """``xi - E[(xi - X)^+] / (1 - alpha)`` evaluated at each ``xi``."""
    xi = np.asarray(xi, dtype=float)
    shortfall = np.maximum(xi[..., None] - dist.values, 0.0) @ dist.weights
    return xi - shortfall / (1.0 - alpha)


def product_measure(dists, fn: Callable[..., np.ndarray], budget: int = 10**7) -> DiscreteDistribution:
    """Law of ``fn(X_1, ..., X_m)`` for independent ``X_i``, by enumerating atom tuples."""
    dists = list(dists)
    count = math.prod(len(d) for d in dists)
    if count > budget:
        raise BudgetExceeded(f"{count} atom combinations exceed budget {budget}")
    grids = np.meshgrid(*[d.values for d in dists], indexing="ij")
    wgrids = np.meshgrid(*[d.weights for d in dists], indexing="ij")
    values = np.asarray(fn(*grids), dtype=float)
    weights = np.prod(np.stack(wgrids), axis=0)
    return DiscreteDistribution._trusted(values.ravel(), weights.ravel())


_COMBINE = {"sum": np.add, "product": np.multiply}


def convolve_independent(
    d1: DiscreteDistribution, d2: DiscreteDistribution, combine="sum", budget: int = 10**7
) -> DiscreteDistribution:
    """Law of ``X + Y`` (or ``X * Y``) for independent ``X ~ d1``, ``Y ~ d2``."""
    fn = _COMBINE[combine] if isinstance(combine, str) else combine
    return product_measure([d1, d2], fn, budget=budget)


def w1_distance(d1: DiscreteDistribution, d2: DiscreteDistribution) -> float:
    """Wasserstein-1 distance as the integral of the quantile-function gap."""
    c1, c2 = d1.cdf_points(), d2.cdf_points()
    u = np.union1d(np.concatenate(([0.0], c1)), c2)
    mids = 0.5 * (u[1:] + u[:-1])
    q1 = d1.values[np.minimum(np.searchsorted(c1, mids, side="left"), len(d1) - 1)]
    q2 = d2.values[np.minimum(np.searchsorted(c2, mids, side="left"), len(d2) - 1)]
    return float(np.abs(q1 - q2) @ np.diff(u))


# --- empirical axiom probes -------------------------------------------------

AXIOMS = (
    "law_invariance",
    "monotonicity",
    "translation_invariance",
    "positive_homogeneity",
    "additive_independence",
    "multiplicativity",
)


@dataclass
class AxiomResult:
    holds: bool
    violation: float
    witness: str | None = None


@dataclass
class AxiomReport:
    spec: RiskSpec
    n_trials: int
    tol: float
    results: dict[str, AxiomResult] = field(default_factory=dict)

    def __getitem__(self, axiom: str) -> AxiomResult:
        return self.results[axiom]

    @property
    def monetary(self) -> bool:
        return self["monotonicity"].holds and self["translation_invariance"].holds

    def as_dict(self) -> dict:
        return {
            "risk": str(self.spec),
            "n_trials": self.n_trials,
            "tol": self.tol,
            "axioms": {
                k: {"holds": r.holds, "violation": r.violation, "witness": r.witness}
                for k, r in self.results.items()
            },
        }


def _random_dist(rng, lo=-5.0, hi=5.0, max_atoms=6) -> DiscreteDistribution:
    k = int(rng.integers(1, max_atoms + 1))
    return DiscreteDistribution(rng.uniform(lo, hi, size=k), rng.dirichlet(np.ones(k)))


def _fmt(d: DiscreteDistribution) -> str:
    return ",".join(f"{x:.6g}:{w:.6g}" for x, w in d.atoms)


def axiom_probe(spec: RiskSpec, n_trials: int = 200, seed: int = 0, tol: float = 1e-8) -> AxiomReport:
    """Search random discrete distributions for violations of the standard axioms.

    Each axiom records the worst violation over all trials and, when it exceeds
    ``tol``, a textual witness.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    rng = np.random.default_rng(seed)
    worst = {a: 0.0 for a in AXIOMS}
    witness: dict[str, str | None] = {a: None for a in AXIOMS}

    def record(axiom, gap, desc):
        gap = float(gap)
        if gap > worst[axiom]:
            worst[axiom] = gap
            witness[axiom] = desc()

    for _ in range(n_trials):
        d = _random_dist(rng)
        e = _random_dist(rng)
        rd, re_ = rho_eval(spec, d), rho_eval(spec, e)

        perm = rng.permutation(len(d))
        split = np.repeat(np.arange(len(d)), 2)
        x2, w2 = d.values[split], d.weights[split] / 2.0
        shuffle = rng.permutation(x2.size)
        alt = rho_samples(spec, x2[shuffle], w2[shuffle])
        alt_perm = rho_samples(spec, d.values[perm], d.weights[perm])
        record("law_invariance", max(abs(alt - rd), abs(alt_perm - rd)), lambda: f"X={_fmt(d)}")

        delta = rng.uniform(0.0, 2.0, size=len(d)) * (rng.random(len(d)) < 0.7)
        up = rho_samples(spec, d.values + delta, d.weights)
        record("monotonicity", rd - up, lambda: f"X={_fmt(d)} shifted by {np.round(delta, 6).tolist()}")

        c = float(rng.uniform(-10.0, 10.0))
        record("translation_invariance", abs(rho_eval(spec, d.shift(c)) - rd - c), lambda: f"X={_fmt(d)} c={c:.6g}")

        a = 0.0 if rng.random() < 0.1 else float(rng.uniform(0.2, 5.0))
        record(
            "positive_homogeneity",
            abs(rho_eval(spec, d.scale(a)) - a * rd),
            lambda: f"X={_fmt(d)} a={a:.6g}",
        )

        both = convolve_independent(d, e, "sum")
        record(
            "additive_independence",
            abs(rho_eval(spec, both) - rd - re_),
            lambda: f"X={_fmt(d)} Y={_fmt(e)}",
        )

        z = _random_dist(rng, 0.0, 5.0)
        y = _random_dist(rng, 0.0, 5.0)
        prod = convolve_independent(z, y, "product")
        record(
            "multiplicativity",
            abs(rho_eval(spec, prod) - rho_eval(spec, z) * rho_eval(spec, y)),
            lambda: f"Z={_fmt(z)} X={_fmt(y)}",
        )

    report = AxiomReport(spec=spec, n_trials=n_trials, tol=tol)
    for axiom in AXIOMS:
        held = worst[axiom] <= tol
        report.results[axiom] = AxiomResult(held, worst[axiom], None if held else witness[axiom])
    return report
