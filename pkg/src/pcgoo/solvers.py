"""Solvers for constrained group-objective optimization.

Three routes to a decision whose loss vector nearly minimizes ``f`` subject
to ``g <= 0``: one exponential-mechanism draw scored by the penalized
objective, an iterative scheme that only talks to a linear optimization
oracle, and Frank-Wolfe over the hull of candidate loss vectors.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import (
    ComposedObjective,
    Dataset,
    FiniteSet,
    GroupLossFunction,
    RandomizedDecision,
    ScalarObjective,
    compose,
    loss_sensitivity_bound,
    penalty_weight,
)
from .errors import CapWarning, InvalidInputError
from .oracles import ExactOracle, FiniteOracle, Oracle
from .privacy import PrivacyBudget, call_rng, exponential_mechanism_pmf, split_budget

DEFAULT_CAP = 10**6
WEIGHT_MODES = ("cumulative", "mixture", "last")


@dataclass
class SolverConfig:
    """Run settings. ``T``, ``G`` and ``tau`` accept ``"auto"``.

    ``weight_mode`` picks the point where the oracle weight is formed:
    ``"last"`` uses the newest iterate (the plain listing), ``"mixture"`` the
    running mixture, and ``"cumulative"`` hands the oracle the sum of all
    mixture gradients so far (dual averaging). ``literal_pseudocode`` drops
    the factor ``G`` on the constraint gradient. ``lifted`` rescales weights
    by ``1 / (3K(1+G))``. ``pure_oracle`` selects the budget split meant for
    oracles with ``delta' = 0``.
    """

    alpha: float = 0.2
    T: int | str = "auto"
    G: float | str = "auto"
    tau: float | str = "auto"
    seed: int | None = 0
    privacy: PrivacyBudget | None = None
    cap: int = DEFAULT_CAP
    theta: float = 0.1
    weight_mode: str = "cumulative"
    pure_oracle: bool = False
    literal_pseudocode: bool = False
    lifted: bool = False
    fw_output: str = "iterate"

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise InvalidInputError("alpha must lie in (0, 1]")
        if self.weight_mode not in WEIGHT_MODES:
            raise InvalidInputError(f"weight_mode must be one of {WEIGHT_MODES}")
        if self.fw_output not in ("iterate", "uniform"):
            raise InvalidInputError("fw_output must be 'iterate' or 'uniform'")
        for name in ("T", "G", "tau"):
            v = getattr(self, name)
            if isinstance(v, str) and v != "auto":
                raise InvalidInputError(f"{name} must be a number or 'auto'")
        if self.cap < 1:
            raise InvalidInputError("cap must be positive")


@dataclass
class SolveResult:
    solver: str
    decision: RandomizedDecision
    mean_loss: np.ndarray
    f_value: float
    g_value: float
    alpha: float
    iterations: int
    resolved: dict
    budget_consumed: PrivacyBudget | None = None
    seed: int | None = None
    trace_path: str | None = None
    history: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    @property
    def feasible_target_alpha(self) -> bool:
        return bool(self.g_value <= self.alpha)

    def sample_member(self, rng: np.random.Generator):
        return self.decision.sample(rng)

    def to_dict(self) -> dict:
        b = self.budget_consumed
        return {
            "solver": self.solver,
            "resolved": dict(self.resolved),
            "f_value": self.f_value,
            "g_value": self.g_value,
            "feasible_target_alpha": self.feasible_target_alpha,
            "seed": self.seed,
            "trace_path": self.trace_path,
            "iterations": self.iterations,
            "mean_loss": [float(v) for v in self.mean_loss],
            "members": _member_summary(self.decision),
            "budget_consumed": None if b is None else {"epsilon": b.epsilon, "delta": b.delta},
            "warnings": list(self.warnings),
        }


def _member_summary(decision: RandomizedDecision):
    if decision.indices is None:
        return {"count": len(decision.members)}
    idx, inv = np.unique(np.asarray(decision.indices), return_inverse=True)
    mass = np.bincount(inv, weights=decision.probabilities)
    return {"indices": [int(i) for i in idx], "weights": [float(m) for m in mass]}


def resolve_iteration_budget(K: int, alpha: float, G: float, cap: int = DEFAULT_CAP, notes: list | None = None) -> int:
    """``ceil(36 (1+K) K^2 (1+G)^2 (3+alpha)^2 / alpha^2)``, capped at ``cap``."""
    if K < 1 or not 0 < alpha <= 1 or G <= 0:
        raise InvalidInputError("need K >= 1, alpha in (0, 1] and G > 0")
    T = math.ceil(36 * (1 + K) * K**2 * (1 + G) ** 2 * (3 + alpha) ** 2 / alpha**2)
    return _cap(T, cap, "iteration budget", notes)


def resolve_oracle_tolerance(K: int, alpha: float, G: float) -> float:
    """``alpha / (6K(1+G))``."""
    if K < 1 or not 0 < alpha <= 1 or G <= 0:
        raise InvalidInputError("need K >= 1, alpha in (0, 1] and G > 0")
    return alpha / (6 * K * (1 + G))


def resolve_frank_wolfe_iterations(K: int, alpha: float, G: float, beta_f: float, beta_g: float, cap: int = DEFAULT_CAP, notes=None) -> int:
    """``ceil(r log r)`` with ``r = 2K(beta_f + G beta_g) / alpha``; at least 1."""
    r = 2 * K * (beta_f + G * beta_g) / alpha
    T = max(1, math.ceil(r * math.log(r))) if r > 1 else 1
    return _cap(T, cap, "Frank-Wolfe iteration count", notes)


def _cap(T: int, cap: int, what: str, notes) -> int:
    if T > cap:
        msg = f"{what} {T} exceeds the cap {cap}; using {cap}"
        warnings.warn(msg, CapWarning, stacklevel=3)
        if notes is not None:
            notes.append(msg)
        return cap
    return T


def _resolve_G(config: SolverConfig, f: ScalarObjective, K: int) -> float:
    if config.G == "auto":
        return penalty_weight(config.alpha, f.lipschitz, K)
    if config.G <= 0:
        raise InvalidInputError("G must be positive")
    return float(config.G)


def evaluate(decision: RandomizedDecision, f: ScalarObjective, g: ScalarObjective, loss: GroupLossFunction | None = None, d: Dataset | None = None, member_losses=None):
    """``(f, g)`` at the mixture's mean loss vector.

    Member losses are recomputed from ``loss`` and ``d`` when given, otherwise
    taken from ``member_losses``.
    """
    mean = _mean_loss(decision, loss, d, member_losses)
    return f(mean), g(mean)


def _mean_loss(decision, loss, d, member_losses):
    if loss is not None and d is not None:
        return decision.loss_vector(loss, d)
    if member_losses is None:
        raise InvalidInputError("need a loss and dataset, or the member loss vectors")
    return decision.mean_loss(member_losses)


@dataclass
class BruteForceResult:
    index: int | None
    decision: object
    f_star: float
    feasible: bool
    losses: np.ndarray


def brute_force_cgoo(candidates: FiniteSet, loss: GroupLossFunction | None, f: ScalarObjective, g: ScalarObjective, d: Dataset | None = None, table=None) -> BruteForceResult:
    """Best single candidate with ``g <= 0``; ``feasible`` is False when none qualifies."""
    L = np.asarray(candidates.loss_table(loss, d) if table is None else table, dtype=np.float64)
    fv = np.array([f(row) for row in L])
    gv = np.array([g(row) for row in L])
    ok = np.flatnonzero(gv <= 0)
    if ok.size == 0:
        return BruteForceResult(None, None, math.inf, False, L)
    i = int(ok[np.argmin(fv[ok])])
    return BruteForceResult(i, candidates[i], float(fv[i]), True, L)


def _result(solver, decision, member_losses, f, g, loss, d, config, resolved, **kw) -> SolveResult:
    mean = _mean_loss(decision, loss, d, member_losses)
    return SolveResult(
        solver=solver, decision=decision, mean_loss=mean, f_value=f(mean), g_value=g(mean),
        alpha=config.alpha, resolved=resolved, seed=config.seed, **kw,
    )


def solve_exponential_sampling(candidates: FiniteSet, loss: GroupLossFunction | None, f: ScalarObjective, g: ScalarObjective, d: Dataset | None,
                               config: SolverConfig, rng: np.random.Generator | None = None, table=None, n: int | None = None) -> SolveResult:
    """One exponential-mechanism draw over candidates scored by ``h(loss(c, D))``.

    The score sensitivity is ``(L_f + G L_g) sqrt(K) / n``.
    """
    if len(candidates) == 0:
        raise InvalidInputError("empty candidate set")
    if config.privacy is None:
        raise InvalidInputError("exponential sampling needs a privacy budget")
    L = np.asarray(candidates.loss_table(loss, d) if table is None else table, dtype=np.float64)
    K = L.shape[1]
    n = n if n is not None else d.n
    notes: list = []
    G = _resolve_G(config, f, K)
    h = compose(f, g, G)
    scores = np.array([h(row) for row in L])
    delta_h = loss_sensitivity_bound(K, n, f.lipschitz, g.lipschitz, G)
    pmf = exponential_mechanism_pmf(scores, delta_h, config.privacy.epsilon)
    rng = rng if rng is not None else call_rng(config.seed, 0)
    i = int(rng.choice(len(pmf), p=pmf.probs))
    decision = RandomizedDecision([candidates[i]], indices=[i])
    resolved = {"G": G, "T": 1, "tau": None, "eps_prime": config.privacy.epsilon, "delta_prime": 0.0, "sensitivity": delta_h}
    res = _result("exp_sampling", decision, [L[i]], f, g, loss, d, config, resolved,
                  iterations=1, budget_consumed=PrivacyBudget(config.privacy.epsilon, 0.0), warnings=notes)
    res.history = [h(res.mean_loss)]
    return res


def solve_iterative_lopt(oracle: Oracle, f: ScalarObjective, g: ScalarObjective, config: SolverConfig,
                         loss: GroupLossFunction | None = None, d: Dataset | None = None, trace_path: str | None = None) -> SolveResult:
    """Repeatedly query a linear optimization oracle with penalized gradients.

    Returns the uniform mixture over the ``T`` oracle answers. The first
    weight is formed at the loss of the lowest-index candidate (the origin
    for parameter balls).
    """
    K = oracle.k
    notes: list = []
    G = _resolve_G(config, f, K)
    tau = resolve_oracle_tolerance(K, config.alpha, G) if config.tau == "auto" else float(config.tau)
    T = resolve_iteration_budget(K, config.alpha, G, config.cap, notes) if config.T == "auto" else int(config.T)
    if T < 1:
        raise InvalidInputError("T must be at least 1")
    h = compose(f, g, G)

    per_call = None
    if oracle.private:
        if config.privacy is None:
            if oracle.budget() is None and getattr(oracle, "sigma_override", None) != 0:
                raise InvalidInputError("private oracle without a privacy budget")
        else:
            if config.pure_oracle and not oracle.pure:
                raise InvalidInputError("the pure budget split needs an oracle with delta' = 0")
            per_call = split_budget(config.privacy, T, pure_oracle=config.pure_oracle)
            oracle = oracle.with_budget(per_call)
    if getattr(oracle, "sensitivity_verified", True) is False:
        notes.append("the oracle's sensitivity bound is not guaranteed for this loss")
    achieved = oracle.tolerance(config.theta)
    if achieved > tau:
        notes.append(f"oracle tolerance {achieved:.3g} exceeds the resolved tau {tau:.3g}")

    if isinstance(oracle, FiniteOracle) or isinstance(getattr(oracle, "inner", None), FiniteOracle):
        start = oracle.loss_of(None, 0)
    else:
        start = oracle.loss_of(np.zeros(getattr(oracle, "ball").dim))
    scale = 1.0 / (3 * K * (1 + G)) if config.lifted else 1.0

    members, indices, losses, history = [], [], [], []
    total = np.zeros(K)
    acc = np.zeros(K)
    for t in range(T):
        if not losses:
            point = start
        elif config.weight_mode == "last":
            point = losses[-1]
        else:
            point = total / len(losses)
        r = h.subgradient(point, scale_penalty=not config.literal_pseudocode)
        if config.weight_mode == "cumulative":
            acc = acc + r
            w = acc
        else:
            w = r
        c, i = oracle.query(scale * w, call_rng(config.seed, t))
        lv = np.asarray(oracle.loss_of(c, i), dtype=np.float64)
        members.append(c)
        indices.append(i)
        losses.append(lv)
        total += lv
        history.append(h(total / len(losses)))

    decision = RandomizedDecision(members, indices=None if any(i is None for i in indices) else indices)
    resolved = {
        "G": G, "T": T, "tau": tau,
        "eps_prime": None if per_call is None else per_call.epsilon_prime,
        "delta_prime": None if per_call is None else per_call.delta_prime,
        "oracle_tolerance": achieved if math.isfinite(achieved) else None,
    }
    return _result("iterative_lopt", decision, losses, f, g, loss, d, config, resolved,
                   iterations=T, budget_consumed=None if per_call is None else per_call.composed(),
                   trace_path=trace_path, history=history, warnings=notes)


def solve_frank_wolfe(oracle: Oracle | FiniteSet, f: ScalarObjective, g: ScalarObjective, config: SolverConfig,
                      loss: GroupLossFunction | None = None, d: Dataset | None = None, table=None) -> SolveResult:
    """Frank-Wolfe on ``h`` over the convex hull of candidate loss vectors.

    Step ``t`` (from 0) moves a fraction ``2/(t+2)`` of the way to the
    oracle's answer, so the first step lands on it and the arbitrary start
    drops out. ``fw_output="iterate"`` returns the weighted mixture whose mean
    loss is the final iterate; ``"uniform"`` the uniform mixture of answers.
    """
    if f.smoothness is None or g.smoothness is None:
        raise InvalidInputError("Frank-Wolfe needs smoothness constants for f and g")
    if isinstance(oracle, FiniteSet):
        oracle = ExactOracle(oracle, loss, d, table)
    if not isinstance(oracle, FiniteOracle):
        raise InvalidInputError("Frank-Wolfe needs a finite candidate oracle")
    K = oracle.k
    notes: list = []
    G = _resolve_G(config, f, K)
    T = (resolve_frank_wolfe_iterations(K, config.alpha, G, f.smoothness, g.smoothness, config.cap, notes)
         if config.T == "auto" else int(config.T))
    h = compose(f, g, G)
    curvature = K * (f.smoothness + G * g.smoothness)

    m = len(oracle.candidates)
    weights = np.zeros(m)
    weights[0] = 1.0
    x = oracle.table[0].copy()
    answers, history = [], []
    for t in range(T):
        gamma = 2.0 / (t + 2)
        c, i = oracle.query(h.subgradient(x), call_rng(config.seed, t))
        weights *= 1 - gamma
        weights[i] += gamma
        x = (1 - gamma) * x + gamma * oracle.table[i]
        answers.append(i)
        history.append(h(x))

    if config.fw_output == "iterate":
        keep = np.flatnonzero(weights > 0)
        decision = RandomizedDecision([oracle.candidates[i] for i in keep], weights[keep] / weights[keep].sum(), indices=keep)
        member_losses = oracle.table[keep]
    else:
        decision = RandomizedDecision([oracle.candidates[i] for i in answers], indices=answers)
        member_losses = oracle.table[answers]
    resolved = {"G": G, "T": T, "tau": 0.0, "eps_prime": None, "delta_prime": None, "curvature_bound": curvature}
    return _result("frank_wolfe", decision, member_losses, f, g, loss, d, config, resolved,
                   iterations=T, history=history, warnings=notes)


def frank_wolfe_bound(t: int, curvature: float, rho: float = 0.0) -> float:
    """Primal gap bound ``2 C (1 + rho) / (t + 2)`` after ``t`` steps."""
    return 2 * curvature * (1 + rho) / (t + 2)


def penalized(f: ScalarObjective, g: ScalarObjective, config: SolverConfig, K: int) -> ComposedObjective:
    return compose(f, g, _resolve_G(config, f, K))
