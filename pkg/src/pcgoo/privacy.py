"""Privacy accounting, the exponential mechanism and analytic divergence audits.

All audits here are exact: they compare closed-form output distributions of a
finite-range mechanism on neighboring datasets instead of sampling.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.special import logsumexp

from .core import Dataset, Row
from .errors import InvalidInputError

AUDIT_SLACK = 1e-9


@dataclass(frozen=True)
class PrivacyBudget:
    epsilon: float
    delta: float = 0.0

    def __post_init__(self):
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise InvalidInputError(f"epsilon must be positive and finite, got {self.epsilon}")
        if not 0 <= self.delta <= 1:
            raise InvalidInputError(f"delta must lie in [0, 1], got {self.delta}")


@dataclass(frozen=True)
class PerCallBudget:
    """Per-iteration share of a total budget; build it with :func:`split_budget`."""

    epsilon_prime: float
    delta_prime: float
    iterations: int
    pure: bool
    total: PrivacyBudget

    def composed(self) -> PrivacyBudget:
        """Total obtained by composing ``iterations`` calls back together."""
        # the approximate branch reserves half of delta for the composition slack
        slack = self.total.delta if self.pure else self.total.delta / 2
        return advanced_composition(self.epsilon_prime, self.delta_prime, self.iterations, slack)


@dataclass(frozen=True)
class FinitePmf:
    """Distribution over outcomes ``0..m-1``; ``logp`` is kept for stable ratios."""

    logp: np.ndarray

    def __post_init__(self):
        lp = np.asarray(self.logp, dtype=np.float64)
        if lp.ndim != 1 or lp.size == 0:
            raise InvalidInputError("pmf needs a nonempty one-dimensional support")
        if np.any(np.isnan(lp)) or np.any(lp > 1e-12):
            raise InvalidInputError("log-probabilities must be <= 0")
        if abs(np.exp(logsumexp(lp)) - 1) > 1e-12:
            raise InvalidInputError("probabilities must sum to 1")
        object.__setattr__(self, "logp", lp)

    @classmethod
    def from_probs(cls, probs) -> "FinitePmf":
        p = np.asarray(probs, dtype=np.float64)
        if np.any(p < 0):
            raise InvalidInputError("probabilities must be nonnegative")
        with np.errstate(divide="ignore"):
            return cls(np.log(p))

    @classmethod
    def point_mass(cls, i: int, m: int) -> "FinitePmf":
        lp = np.full(m, -np.inf)
        lp[i] = 0.0
        return cls(lp)

    @property
    def probs(self) -> np.ndarray:
        return np.exp(self.logp)

    def __len__(self):
        return self.logp.size


def advanced_composition(eps_each: float, delta_each: float, k: int, delta_bar: float) -> PrivacyBudget:
    """Total budget of ``k`` adaptive ``(eps_each, delta_each)`` computations.

    ``eps_bar = eps sqrt(2k ln(1/delta_bar)) + k eps (e^eps - 1)`` and
    ``delta_total = k delta_each + delta_bar`` (capped at 1).
    """
    if k < 1 or int(k) != k:
        raise InvalidInputError("k must be a positive integer")
    if eps_each <= 0:
        raise InvalidInputError("per-step epsilon must be positive")
    if not 0 <= delta_each <= 1:
        raise InvalidInputError("per-step delta must lie in [0, 1]")
    if not 0 < delta_bar <= 1:
        raise InvalidInputError("delta_bar must lie in (0, 1)")
    if delta_bar == 1:
        warnings.warn("delta_bar = 1 gives a vacuous delta; only the linear term remains", RuntimeWarning, stacklevel=2)
    eps_bar = eps_each * math.sqrt(2 * k * math.log(1 / delta_bar)) + k * eps_each * math.expm1(eps_each)
    return PrivacyBudget(eps_bar, min(1.0, k * delta_each + delta_bar))


def split_budget(total: PrivacyBudget, T: int, pure_oracle: bool = False) -> PerCallBudget:
    """Per-call budget for ``T`` oracle calls.

    Approximate oracles get ``delta' = delta / 2T`` and
    ``eps' = eps / (2 sqrt(2T ln(2/delta')))``; pure oracles get ``delta' = 0``
    and ``eps' = eps / (2 sqrt(2T ln(1/delta)))``.
    """
    if T < 1 or int(T) != T:
        raise InvalidInputError("T must be a positive integer")
    if total.delta <= 0:
        raise InvalidInputError("splitting needs delta > 0 for the composition slack")
    if pure_oracle:
        if total.delta >= 1:
            raise InvalidInputError("pure split needs delta < 1")
        eps = total.epsilon / (2 * math.sqrt(2 * T * math.log(1 / total.delta)))
        return PerCallBudget(eps, 0.0, int(T), True, total)
    dp = total.delta / (2 * T)
    eps = total.epsilon / (2 * math.sqrt(2 * T * math.log(2 / dp)))
    return PerCallBudget(eps, dp, int(T), False, total)


def _check_scores(scores, sensitivity: float, eps: float) -> np.ndarray:
    s = np.asarray(scores, dtype=np.float64).ravel()
    if s.size == 0:
        raise InvalidInputError("no candidates to sample from")
    if sensitivity <= 0 or eps <= 0:
        raise InvalidInputError("sensitivity and epsilon must be positive")
    if np.any(np.isnan(s)) or np.any(s == -np.inf):
        raise InvalidInputError("scores must be finite or +inf")
    if np.all(np.isinf(s)):
        raise InvalidInputError("every score is infinite")
    return s


def exponential_mechanism_pmf(scores, sensitivity: float, eps: float) -> FinitePmf:
    """Exact pmf ``p_i ∝ exp(-eps s_i / (2 sensitivity))``; low scores are favored."""
    s = _check_scores(scores, sensitivity, eps)
    z = -eps * s / (2 * sensitivity)
    # shift first so the normalizer is computed on O(1) numbers
    z = z - z[np.isfinite(z)].max()
    return FinitePmf(z - logsumexp(z))


def exponential_mechanism_sample(scores, sensitivity: float, eps: float, rng: np.random.Generator) -> int:
    pmf = exponential_mechanism_pmf(scores, sensitivity, eps)
    return int(rng.choice(len(pmf), p=pmf.probs))


def gaussian_perturb(vector, sigma: float, rng: np.random.Generator) -> np.ndarray:
    if sigma < 0:
        raise InvalidInputError("sigma must be nonnegative")
    v = np.asarray(vector, dtype=np.float64)
    if sigma == 0:
        return v.copy()
    return v + rng.normal(0.0, sigma, size=v.shape)


def gaussian_sigma(l2_sensitivity: float, eps: float, delta: float) -> float:
    """Classical Gaussian-mechanism scale ``Δ sqrt(2 ln(1.25/δ)) / ε`` (valid for ε < 1)."""
    if eps <= 0 or not 0 < delta < 1:
        raise InvalidInputError("Gaussian mechanism needs eps > 0 and delta in (0, 1)")
    if eps >= 1:
        warnings.warn("Gaussian calibration is only certified for eps < 1", RuntimeWarning, stacklevel=2)
    return l2_sensitivity * math.sqrt(2 * math.log(1.25 / delta)) / eps


@dataclass(frozen=True)
class GaussianCalibration:
    sigma: float
    steps: int
    eps_step: float
    delta_step: float
    delta_slack: float

    def composed(self) -> PrivacyBudget:
        return advanced_composition(self.eps_step, self.delta_step, self.steps, self.delta_slack)


def calibrate_gaussian_steps(eps_total: float, delta_total: float, steps: int, l2_sensitivity: float) -> GaussianCalibration:
    """Noise scale such that ``steps`` Gaussian releases compose to ``(eps_total, delta_total)``.

    Half of ``delta_total`` is the composition slack and the other half is
    spread evenly over the steps; the per-step epsilon is the root of the
    composition formula.
    """
    if eps_total <= 0 or not 0 < delta_total < 1:
        raise InvalidInputError("need eps > 0 and delta in (0, 1)")
    if steps < 1:
        raise InvalidInputError("need at least one step")
    slack = delta_total / 2
    d_step = delta_total / (2 * steps)

    def excess(e):
        return advanced_composition(e, d_step, steps, slack).epsilon - eps_total

    hi = eps_total
    while excess(hi) < 0:
        hi *= 2
    e_step = brentq(excess, 1e-300, hi, xtol=1e-300, rtol=1e-15)
    # brentq may land a hair above the root; step down until the total fits
    while excess(e_step) > 0:
        e_step = math.nextafter(e_step, 0.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        sigma = gaussian_sigma(l2_sensitivity, e_step, d_step)
    return GaussianCalibration(sigma, int(steps), e_step, d_step, slack)


def _shared_support(p: FinitePmf, q: FinitePmf):
    if len(p) != len(q):
        raise InvalidInputError(f"supports differ in size: {len(p)} vs {len(q)}")
    return p.logp, q.logp


def max_divergence(p: FinitePmf, q: FinitePmf) -> float:
    """``max_i ln(p_i / q_i)`` over points with ``p_i > 0``."""
    lp, lq = _shared_support(p, q)
    on = lp > -np.inf
    if np.any(lq[on] == -np.inf):
        return math.inf
    return float(np.max(lp[on] - lq[on]))


def smoothed_max_divergence(p: FinitePmf, q: FinitePmf, delta: float) -> float:
    """``max_S ln((p(S) - delta) / q(S))`` over sets with ``p(S) >= delta``.

    Points where ``q`` vanishes are always worth including; the rest of the
    optimal set is a prefix of the support sorted by decreasing ``p/q``.
    """
    if not 0 <= delta < 1:
        raise InvalidInputError("delta must lie in [0, 1)")
    if delta == 0:
        return max_divergence(p, q)
    lp, lq = _shared_support(p, q)
    pp, qq = np.exp(lp), np.exp(lq)
    free = (qq == 0) & (pp > 0)
    p_free = float(pp[free].sum())
    if p_free > delta:
        return math.inf
    rest = np.flatnonzero(qq > 0)
    order = rest[np.argsort(-(lp[rest] - lq[rest]), kind="stable")]
    cum_p = p_free + np.cumsum(pp[order])
    cum_q = np.cumsum(qq[order])
    num = cum_p - delta
    ok = num > 0
    if not ok.any():
        return -math.inf
    return float(np.max(np.log(num[ok]) - np.log(cum_q[ok])))


def renyi_divergence(p: FinitePmf, q: FinitePmf, phi: float) -> float:
    """``(1/(phi-1)) ln sum_i q_i (p_i/q_i)^phi``."""
    if not phi > 1:
        raise InvalidInputError("Renyi order must exceed 1")
    lp, lq = _shared_support(p, q)
    on = lp > -np.inf
    if np.any(lq[on] == -np.inf):
        return math.inf
    if math.isinf(phi):
        return max_divergence(p, q)
    return float(logsumexp(phi * lp[on] - (phi - 1) * lq[on]) / (phi - 1))


@dataclass
class AuditReport:
    mechanism: str
    epsilon_claimed: float
    delta_claimed: float
    observed: float
    passed: bool
    worst_neighbor_index: int | None
    worst_alternative_index: int | None = None
    neighbors_checked: int = 0
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        obs = self.observed if math.isfinite(self.observed) else str(self.observed)
        out = {
            "mechanism": self.mechanism,
            "epsilon_claimed": self.epsilon_claimed,
            "delta_claimed": self.delta_claimed,
            "observed": obs,
            "pass": self.passed,
            "worst_neighbor_index": self.worst_neighbor_index,
            "worst_alternative_index": self.worst_alternative_index,
            "neighbors_checked": self.neighbors_checked,
        }
        out.update(self.extra)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def sensitive_swaps(d: Dataset, n_groups: int | None = None) -> Callable[[int], list]:
    """Alternatives for row ``i``: same features and label, every other group id."""
    groups = n_groups or d.n_groups

    def alternatives(i):
        r = d.row(i)
        return [Row(r.features, a, r.label) for a in range(1, groups + 1) if a != r.sensitive]

    return alternatives


def audit_finite_mechanism(
    pmf_builder: Callable[[Dataset], FinitePmf],
    base: Dataset,
    row_alternatives: Sequence | Callable[[int], Sequence],
    budget: PrivacyBudget,
    mechanism: str = "mechanism",
    divergence: Callable[[FinitePmf, FinitePmf], float] | None = None,
) -> AuditReport:
    """Exact audit over every neighbor obtained by replacing one row.

    ``row_alternatives`` is either a list of replacement rows tried at every
    position or a callable giving the replacements for row ``i``. Both
    directed divergences are checked; the mechanism passes iff the worst is at
    most ``epsilon`` (smoothed by the claimed ``delta``). A custom
    ``divergence`` replaces the smoothed max divergence.
    """
    if divergence is None:
        divergence = lambda p, q: smoothed_max_divergence(p, q, budget.delta)  # noqa: E731
    if callable(row_alternatives):
        alts_for = row_alternatives
    else:
        fixed = list(row_alternatives)
        if not fixed:
            raise InvalidInputError("no row alternatives given")
        alts_for = lambda i: fixed  # noqa: E731

    p0 = pmf_builder(base)
    worst, worst_i, worst_j, count = -math.inf, None, None, 0
    for i in range(base.n):
        for j, alt in enumerate(alts_for(i)):
            p1 = pmf_builder(base.replace_row(i, alt))
            obs = max(divergence(p0, p1), divergence(p1, p0))
            count += 1
            if obs > worst:
                worst, worst_i, worst_j = obs, i, j
    if count == 0:
        raise InvalidInputError("no neighboring datasets to audit")
    return AuditReport(
        mechanism, budget.epsilon, budget.delta, float(worst),
        bool(worst <= budget.epsilon + AUDIT_SLACK), worst_i, worst_j, count,
    )


def call_rng(seed: int | None, call_index: int) -> np.random.Generator:
    """Independent generator for oracle call ``call_index`` of a seeded run."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(int(call_index),)))
