"""Approximate linear optimization oracles over group-loss vectors.

An oracle receives a weight vector ``w`` and returns a decision whose weighted
loss ``w . loss(c, D)`` is within ``tau * ||w||`` of the best candidate. The
private variants randomize that choice; oracles with a finite range expose
their exact output distribution through ``pmf_on`` so they can be audited.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import Dataset, FiniteSet, GroupLossFunction, ItemizedGroupLoss, ParamBall
from .errors import (
    ContractViolation,
    DegenerateWeightWarning,
    InvalidInputError,
    SensitivityWarning,
    UnsupportedAuditError,
)
from .privacy import (
    FinitePmf,
    PerCallBudget,
    PrivacyBudget,
    audit_finite_mechanism,
    calibrate_gaussian_steps,
    exponential_mechanism_pmf,
    gaussian_perturb,
    max_divergence,
    renyi_divergence,
    smoothed_max_divergence,
)


def weight_vector(values, k: int | None = None, nonnegative_only: bool = False) -> np.ndarray:
    w = np.array(values, dtype=np.float64, ndmin=1)
    if w.ndim != 1 or (k is not None and w.size != k):
        raise InvalidInputError(f"weight vector must have length {k}, got shape {w.shape}")
    if not np.all(np.isfinite(w)):
        raise InvalidInputError("weight vector has non-finite entries")
    if nonnegative_only and np.any(w < 0):
        raise ContractViolation("this oracle only accepts nonnegative weights")
    return w


@dataclass(frozen=True)
class OracleSpec:
    tolerance: float = 0.0
    privacy: PerCallBudget | PrivacyBudget | None = None
    failure_probability: float = 0.0

    def __post_init__(self):
        if self.tolerance < 0:
            raise InvalidInputError("tolerance must be nonnegative")
        if not 0 <= self.failure_probability < 1:
            raise InvalidInputError("failure probability must lie in [0, 1)")

    @property
    def epsilon(self) -> float | None:
        if self.privacy is None:
            return None
        return getattr(self.privacy, "epsilon_prime", None) or self.privacy.epsilon

    @property
    def delta(self) -> float:
        if self.privacy is None:
            return 0.0
        if isinstance(self.privacy, PerCallBudget):
            return self.privacy.delta_prime
        return self.privacy.delta


class JsonlTrace:
    """Appends one JSON object per oracle call to ``path``."""

    def __init__(self, path):
        self.path = path
        self.calls = 0

    def record(self, **fields):
        fields = {"call": self.calls, **fields}
        self.calls += 1
        with open(self.path, "a") as fh:
            fh.write(json.dumps(fields, sort_keys=True) + "\n")


class Oracle:
    """Common interface: ``query(w, rng) -> (decision, candidate index or None)``."""

    nonnegative_only = False
    private = False
    pure = True
    trace: JsonlTrace | None = None
    k: int

    def query(self, w, rng: np.random.Generator | None = None):
        raise NotImplementedError

    def __call__(self, w, rng=None):
        return self.query(w, rng)[0]

    def with_budget(self, budget: PerCallBudget) -> "Oracle":
        return self

    def budget(self) -> PrivacyBudget | None:
        return None

    def tolerance(self, theta: float = 0.1) -> float:
        return 0.0

    def loss_of(self, decision, index=None) -> np.ndarray:
        """Loss vector of a decision this oracle returned."""
        raise NotImplementedError

    def _trace(self, w, score, index=None):
        if self.trace is not None:
            b = self.budget()
            self.trace.record(
                w_norm=float(np.linalg.norm(w)), score=float(score), index=index,
                epsilon=None if b is None else b.epsilon, delta=None if b is None else b.delta,
            )


class FiniteOracle(Oracle):
    """Oracle over a finite candidate set with a cached loss table."""

    def __init__(self, candidates: FiniteSet, loss: GroupLossFunction | None, data: Dataset | None, table=None):
        if len(candidates) == 0:
            raise InvalidInputError("empty candidate set")
        self.candidates = candidates
        self.loss = loss
        self.data = data
        self.table = np.asarray(candidates.loss_table(loss, data) if table is None else table, dtype=np.float64)
        self.k = self.table.shape[1]

    def table_on(self, data: Dataset | None) -> np.ndarray:
        if data is None or data is self.data:
            return self.table
        return np.asarray(self.candidates.loss_table(self.loss, data), dtype=np.float64)

    def loss_of(self, decision, index=None) -> np.ndarray:
        if index is None:
            index = self.candidates.decisions.index(decision)
        return self.table[index]

    def scores(self, w, data: Dataset | None = None) -> np.ndarray:
        w = weight_vector(w, self.k, self.nonnegative_only)
        return self.table_on(data) @ w

    def pmf_on(self, w, data: Dataset | None = None) -> FinitePmf:
        raise NotImplementedError


class ExactOracle(FiniteOracle):
    """Exact minimizer of ``w . loss`` over the candidates, lowest index on ties."""

    def query(self, w, rng=None):
        s = self.scores(w)
        i = int(np.argmin(s))
        self._trace(w, s[i], i)
        return self.candidates[i], i

    def pmf_on(self, w, data=None) -> FinitePmf:
        s = self.scores(w, data)
        return FinitePmf.point_mass(int(np.argmin(s)), s.size)


class ExpMechOracle(FiniteOracle):
    """Exponential mechanism over candidates scored by ``w . loss(c, D)``.

    The score sensitivity is ``||w|| sqrt(K) / n``, which holds for losses
    averaged over rows with entries in ``[0, 1]``. Other losses (conditional
    rates, for instance) get a ``SensitivityWarning`` and
    ``sensitivity_verified = False``. ``sensitivity_scale`` only exists to
    inject a calibration bug in audits.
    """

    private = True
    pure = True

    def __init__(self, candidates, loss, data, epsilon: float | None = None, table=None, sensitivity_scale: float = 1.0, n: int | None = None, _quiet: bool = False):
        super().__init__(candidates, loss, data, table)
        if epsilon is not None and epsilon <= 0:
            raise InvalidInputError("epsilon must be positive")
        self.epsilon = epsilon
        self.sensitivity_scale = sensitivity_scale
        self.n = n if n is not None else (data.n if data is not None else None)
        if self.n is None:
            raise InvalidInputError("need the dataset size to calibrate the mechanism")
        self.sensitivity_verified = loss is None or isinstance(loss, ItemizedGroupLoss)
        if not self.sensitivity_verified and not _quiet:
            warnings.warn(f"{type(loss).__name__} is not a row average; the sensitivity "
                          "||w|| sqrt(K) / n is not guaranteed for it", SensitivityWarning, stacklevel=2)

    def with_budget(self, budget: PerCallBudget | float) -> "ExpMechOracle":
        eps = budget.epsilon_prime if isinstance(budget, PerCallBudget) else float(budget)
        clone = ExpMechOracle(self.candidates, self.loss, self.data, eps, self.table, self.sensitivity_scale, self.n, _quiet=True)
        clone.trace = self.trace
        return clone

    def budget(self):
        return None if self.epsilon is None else PrivacyBudget(self.epsilon, 0.0)

    def sensitivity(self, w, n: int | None = None) -> float:
        return self.sensitivity_scale * float(np.linalg.norm(w)) * math.sqrt(self.k) / (n or self.n)

    def pmf_on(self, w, data: Dataset | None = None) -> FinitePmf:
        if self.epsilon is None:
            raise InvalidInputError("oracle has no privacy budget; call with_budget first")
        w = weight_vector(w, self.k, self.nonnegative_only)
        m = len(self.candidates)
        if not np.any(w):
            warnings.warn("zero weight vector; sampling uniformly", DegenerateWeightWarning, stacklevel=2)
            return FinitePmf(np.full(m, -math.log(m)))
        n = data.n if data is not None else self.n
        return exponential_mechanism_pmf(self.table_on(data) @ w, self.sensitivity(w, n), self.epsilon)

    def query(self, w, rng=None):
        if rng is None:
            raise InvalidInputError("a private oracle needs an explicit generator")
        pmf = self.pmf_on(w)
        i = int(rng.choice(len(pmf), p=pmf.probs))
        self._trace(w, self.table[i] @ np.asarray(w, dtype=np.float64), i)
        return self.candidates[i], i

    def tolerance(self, theta: float = 0.1) -> float:
        """Tolerance met with probability ``1 - theta`` at the current ``n``."""
        if self.epsilon is None:
            return math.inf
        m = len(self.candidates)
        return 2 * math.sqrt(self.k) * (math.log(m) + math.log(1 / theta)) / (self.n * self.epsilon)


def expmech_sample_size(k: int, eps: float, tau: float, theta: float, n_candidates: int | None = None, dim: int | None = None) -> int:
    """Rows needed for the exponential-mechanism oracle to reach tolerance ``tau``
    with probability ``1 - theta``.

    ``n0 = ceil(8 sqrt(K) / (eps tau) * ((P + 1) ln 3 + ln(1/theta)))`` where
    ``P`` is the parameter dimension, or ``ln |set|`` for a finite set.
    """
    if eps <= 0 or tau <= 0 or not 0 < theta < 1:
        raise InvalidInputError("need eps > 0, tau > 0 and theta in (0, 1)")
    if (n_candidates is None) == (dim is None):
        raise InvalidInputError("give exactly one of n_candidates and dim")
    P = math.log(n_candidates) if n_candidates is not None else dim
    return math.ceil(8 * math.sqrt(k) / (eps * tau) * ((P + 1) * math.log(3) + math.log(1 / theta)))


class NoisySGDOracle(Oracle):
    """Noisy projected full-batch gradient descent over the unit ball.

    Each step adds Gaussian noise calibrated so that all steps together
    compose to the per-call budget; the full-gradient sensitivity is
    ``2 L_item ||w|| / n``. Returns the average iterate. ``sigma=0`` turns
    privacy off.
    """

    nonnegative_only = True
    private = True
    pure = False

    def __init__(self, ball: ParamBall, loss: ItemizedGroupLoss, data: Dataset, budget: PerCallBudget | PrivacyBudget | None = None,
                 steps: int | None = None, step_size: float | Callable[[int], float] | None = None,
                 sigma: float | None = None, item_lipschitz: float | None = None):
        if getattr(loss, "convex", None) is False:
            raise ContractViolation("noisy SGD needs a loss that is convex in the parameters")
        if not hasattr(loss, "itemized_gradient"):
            raise ContractViolation("noisy SGD needs itemized gradients")
        self.ball = ball
        self.loss = loss
        self.data = data
        self.k = loss.k
        self.steps = int(steps) if steps is not None else data.n ** 2
        if self.steps < 1:
            raise InvalidInputError("need at least one step")
        self.step_size = step_size
        self.item_lipschitz = float(item_lipschitz if item_lipschitz is not None else loss.item_lipschitz)
        self.sigma_override = sigma
        self.per_call = budget
        if budget is not None:
            eps, delta = _eps_delta(budget)
            if delta <= 0:
                raise InvalidInputError("the Gaussian mechanism needs delta' > 0")

    def with_budget(self, budget):
        clone = NoisySGDOracle(self.ball, self.loss, self.data, budget, self.steps, self.step_size, self.sigma_override, self.item_lipschitz)
        clone.trace = self.trace
        return clone

    def budget(self):
        if self.per_call is None or self.sigma_override == 0:
            return None
        return PrivacyBudget(*_eps_delta(self.per_call))

    def sensitivity(self, w) -> float:
        return 2 * self.item_lipschitz * float(np.linalg.norm(w)) / self.data.n

    def calibration(self, w):
        eps, delta = _eps_delta(self.per_call)
        return calibrate_gaussian_steps(eps, delta, self.steps, self.sensitivity(w))

    def noise_scale(self, w) -> float:
        if self.sigma_override is not None:
            return float(self.sigma_override)
        if self.per_call is None:
            raise InvalidInputError("noisy SGD needs a budget or an explicit sigma")
        return self.calibration(w).sigma

    def loss_of(self, decision, index=None) -> np.ndarray:
        return self.loss.loss(decision, self.data)

    def objective(self, c, w) -> float:
        return float(np.asarray(w) @ self.loss.loss(c, self.data))

    def _eta(self, t: int, w) -> float:
        if callable(self.step_size):
            return float(self.step_size(t))
        if self.step_size is not None:
            return float(self.step_size)
        lip = self.item_lipschitz * float(np.linalg.norm(w)) or 1.0
        return 2.0 / (lip * math.sqrt(t))

    def query(self, w, rng=None):
        w = weight_vector(w, self.k, nonnegative_only=True)
        sigma = self.noise_scale(w)
        if sigma > 0 and rng is None:
            raise InvalidInputError("a private oracle needs an explicit generator")
        c = np.zeros(self.ball.dim)
        total = np.zeros(self.ball.dim)
        for t in range(1, self.steps + 1):
            grad = np.einsum("k,nkp->p", w, self.loss.itemized_gradient(c, self.data)) / self.data.n
            c = self.ball.project(c - self._eta(t, w) * gaussian_perturb(grad, sigma, rng))
            total += c
        out = total / self.steps
        self._trace(w, self.objective(out, w))
        return out, None

    def pmf_on(self, w, data=None):
        raise UnsupportedAuditError("noisy SGD has a continuous output; no analytic distribution")


def _eps_delta(budget) -> tuple[float, float]:
    if isinstance(budget, PerCallBudget):
        return budget.epsilon_prime, budget.delta_prime
    if isinstance(budget, PrivacyBudget):
        return budget.epsilon, budget.delta
    eps, delta = budget
    return float(eps), float(delta)


def lopt_exact(candidates: FiniteSet, loss: GroupLossFunction, w, d: Dataset):
    return ExactOracle(candidates, loss, d).query(w)[0]


def lopt_expmech(candidates: FiniteSet, loss: GroupLossFunction, w, d: Dataset, spec: OracleSpec | float, rng: np.random.Generator):
    eps = spec.epsilon if isinstance(spec, OracleSpec) else float(spec)
    if eps is None:
        raise InvalidInputError("the exponential-mechanism oracle needs an epsilon")
    return ExpMechOracle(candidates, loss, d, eps).query(w, rng)[0]


def lopt_noisy_sgd(ball: ParamBall, loss: ItemizedGroupLoss, w, d: Dataset, spec: OracleSpec | PerCallBudget | PrivacyBudget | None,
                   steps: int | None = None, step_size=None, rng: np.random.Generator | None = None, sigma: float | None = None):
    budget = spec.privacy if isinstance(spec, OracleSpec) else spec
    return NoisySGDOracle(ball, loss, d, budget, steps, step_size, sigma).query(w, rng)[0]


def group_embedding(x, k: int, K: int) -> np.ndarray:
    """Place ``x`` in block ``k`` (1-based) of a ``K``-block zero vector."""
    x = np.asarray(x, dtype=np.float64).ravel()
    if not 1 <= k <= K:
        raise InvalidInputError(f"group id {k} outside 1..{K}")
    out = np.zeros(x.size * K)
    out[(k - 1) * x.size:k * x.size] = x
    return out


class DivergenceOracle(Oracle):
    """An oracle tagged with a divergence contract and an audit hook.

    ``kind`` is ``"pure"`` (max divergence), ``"smoothed"`` (max divergence
    smoothed by ``delta``) or ``"renyi"`` (order ``phi``).
    """

    def __init__(self, inner: Oracle, kind: str, bound: float, delta: float = 0.0, phi: float | None = None):
        if kind not in ("pure", "smoothed", "renyi"):
            raise InvalidInputError(f"unknown divergence kind {kind!r}")
        if kind == "renyi" and (phi is None or phi <= 1):
            raise InvalidInputError("a Renyi contract needs an order phi > 1")
        self.inner = inner
        self.kind = kind
        self.bound = float(bound)
        self.delta = float(delta) if kind == "smoothed" else 0.0
        self.phi = phi
        self.k = inner.k
        self.nonnegative_only = inner.nonnegative_only
        self.private = inner.private
        self.pure = inner.pure

    def query(self, w, rng=None):
        return self.inner.query(w, rng)

    def loss_of(self, decision, index=None):
        return self.inner.loss_of(decision, index)

    def with_budget(self, budget):
        return DivergenceOracle(self.inner.with_budget(budget), self.kind, self.bound, self.delta, self.phi)

    def budget(self):
        return self.inner.budget()

    def tolerance(self, theta=0.1):
        return self.inner.tolerance(theta)

    def divergence(self, p: FinitePmf, q: FinitePmf) -> float:
        if self.kind == "pure":
            return max_divergence(p, q)
        if self.kind == "smoothed":
            return smoothed_max_divergence(p, q, self.delta)
        return renyi_divergence(p, q, self.phi)

    def audit(self, w, base: Dataset, row_alternatives, mechanism: str = ""):
        pmf_on = getattr(self.inner, "pmf_on", None)
        if pmf_on is None:
            raise UnsupportedAuditError(f"{type(self.inner).__name__} has no analytic output distribution")
        # probe once so oracles that refuse analytic output fail before the sweep
        pmf_on(w, base)
        return audit_finite_mechanism(
            lambda d: pmf_on(w, d), base, row_alternatives,
            PrivacyBudget(self.bound, self.delta), mechanism or f"{self.kind}:{type(self.inner).__name__}",
            divergence=self.divergence,
        )


def wrap_divergence_oracle(inner: Oracle, kind: str, bound: float, delta: float = 0.0, phi: float | None = None) -> DivergenceOracle:
    return DivergenceOracle(inner, kind, bound, delta, phi)
