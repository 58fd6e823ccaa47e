import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pcgoo.core import Dataset, Row
from pcgoo.errors import InvalidInputError
from pcgoo.privacy import (
    FinitePmf,
    PrivacyBudget,
    advanced_composition,
    audit_finite_mechanism,
    calibrate_gaussian_steps,
    call_rng,
    exponential_mechanism_pmf,
    exponential_mechanism_sample,
    gaussian_perturb,
    gaussian_sigma,
    max_divergence,
    renyi_divergence,
    sensitive_swaps,
    smoothed_max_divergence,
    split_budget,
)

# reference values evaluated with mpmath at 40 digits
COMPOSITION_REF = 1.767429054344757549850802233986860069665
LINEAR_TERM_REF = 0.01051709180756476248117078264902466682246
SPLIT_APPROX_REF = 0.008450482678863588212534074022915851739452
SPLIT_PURE_REF = 0.1041986662466525801320754321706250771047


def test_advanced_composition_examples():
    b = advanced_composition(0.1, 0.0, 10, 1e-6)
    assert abs(b.epsilon - COMPOSITION_REF) <= 1e-12
    assert b.delta == 1e-6
    with pytest.warns(RuntimeWarning):
        b = advanced_composition(0.1, 0.0, 1, 1.0)
    assert b.epsilon == pytest.approx(LINEAR_TERM_REF, rel=1e-14)
    with pytest.raises(InvalidInputError):
        advanced_composition(0.1, 0.0, 0, 1e-6)
    with pytest.raises(InvalidInputError):
        advanced_composition(0.1, 0.0, 3, 0.0)


def test_split_budget_examples():
    pc = split_budget(PrivacyBudget(1.0, 1e-5), 100)
    assert pc.delta_prime == pytest.approx(5e-8, rel=1e-15)
    assert pc.epsilon_prime == pytest.approx(SPLIT_APPROX_REF, rel=1e-13)
    pc = split_budget(PrivacyBudget(1.0, 1e-5), 1, pure_oracle=True)
    assert pc.delta_prime == 0 and pc.epsilon_prime == pytest.approx(SPLIT_PURE_REF, rel=1e-13)
    with pytest.raises(InvalidInputError):
        split_budget(PrivacyBudget(1.0, 1e-5), 0)
    with pytest.raises(InvalidInputError):
        split_budget(PrivacyBudget(1.0, 0.0), 5)


@pytest.mark.parametrize("pure", [False, True])
@pytest.mark.parametrize("T", [1, 7, 100, 5000])
@pytest.mark.parametrize("eps,delta", [(0.1, 1e-6), (1.0, 1e-5), (4.0, 1e-3)])
def test_split_round_trip(pure, T, eps, delta):
    total = PrivacyBudget(eps, delta)
    back = split_budget(total, T, pure).composed()
    assert back.epsilon <= eps and back.delta <= delta * (1 + 1e-12)


def test_budget_validation():
    with pytest.raises(InvalidInputError):
        PrivacyBudget(0.0)
    with pytest.raises(InvalidInputError):
        PrivacyBudget(1.0, 1.5)


def test_exponential_pmf_examples():
    p = exponential_mechanism_pmf([0, 1], 1, 2).probs
    assert p == pytest.approx([0.7310585786300049, 0.2689414213699951], rel=1e-14)
    assert exponential_mechanism_pmf([3, 3, 3], 1, 5).probs == pytest.approx([1 / 3] * 3)
    assert np.allclose(exponential_mechanism_pmf([0, 10], 1, 1e-4).probs, 0.5, atol=1e-3)
    a = exponential_mechanism_pmf([0.2, 0.9, 0.4], 0.3, 1.5).probs
    b = exponential_mechanism_pmf([100.2, 100.9, 100.4], 0.3, 1.5).probs
    assert np.allclose(a, b, rtol=1e-12)
    p = exponential_mechanism_pmf([0, 0, 1], 1, 2).probs
    assert p[0] == pytest.approx(0.4223187982515182, rel=1e-14) and p[0] == p[1]


def test_exponential_pmf_extreme_exponents():
    p = exponential_mechanism_pmf([0.0, 1e-3, 5.0], 1e-6, 10.0)
    assert p.probs[0] == pytest.approx(1.0) and np.isfinite(p.logp[0])


def test_exponential_errors():
    with pytest.raises(InvalidInputError):
        exponential_mechanism_pmf([], 1, 1)
    with pytest.raises(InvalidInputError):
        exponential_mechanism_pmf([np.inf, np.inf], 1, 1)
    with pytest.raises(InvalidInputError):
        exponential_mechanism_pmf([0, 1], 0, 1)


def test_exponential_sample_is_seeded():
    a = [exponential_mechanism_sample([0, 0.5, 1], 1, 1, np.random.default_rng(5)) for _ in range(3)]
    b = [exponential_mechanism_sample([0, 0.5, 1], 1, 1, np.random.default_rng(5)) for _ in range(3)]
    assert a == b


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.floats(-5, 5), min_size=2, max_size=12),
    st.floats(0.05, 5),
    st.floats(0.01, 3),
    st.integers(0, 2**31),
)
def test_exponential_mechanism_ratio_bound(scores, eps, sens, seed):
    s = np.array(scores)
    rng = np.random.default_rng(seed)
    t = s + rng.uniform(-sens, sens, size=s.size)
    p = exponential_mechanism_pmf(s, sens, eps)
    q = exponential_mechanism_pmf(t, sens, eps)
    assert np.max(np.abs(p.logp - q.logp)) <= eps + 1e-9


def test_exponential_mechanism_utility_monte_carlo():
    rng = np.random.default_rng(11)
    scores = rng.uniform(0, 1, 40)
    eps, sens, rho = 1.0, 0.05, 0.1
    thresh = scores.min() + 2 * sens / eps * math.log(scores.size / rho)
    pmf = exponential_mechanism_pmf(scores, sens, eps)
    draws = rng.choice(scores.size, size=10**4, p=pmf.probs)
    freq = np.mean(scores[draws] >= thresh)
    assert freq <= rho + 3 * math.sqrt(rho * (1 - rho) / 10**4)


def test_gaussian_perturb():
    assert np.array_equal(gaussian_perturb([1.0, 2.0], 0.0, np.random.default_rng(0)), [1.0, 2.0])
    a = gaussian_perturb([1.0, 2.0], 1.0, np.random.default_rng(3))
    b = gaussian_perturb([1.0, 2.0], 1.0, np.random.default_rng(3))
    assert np.array_equal(a, b)
    draws = gaussian_perturb(np.zeros(10**5), 1.0, np.random.default_rng(4))
    assert abs(draws.mean()) <= 0.02
    with pytest.raises(InvalidInputError):
        gaussian_perturb([1.0], -1.0, np.random.default_rng(0))


def test_gaussian_calibration_round_trip():
    cal = calibrate_gaussian_steps(0.05, 1e-7, 300, 0.01)
    back = cal.composed()
    assert back.epsilon <= 0.05 and back.epsilon == pytest.approx(0.05, rel=1e-9)
    assert back.delta <= 1e-7 * (1 + 1e-12)
    assert cal.sigma == pytest.approx(gaussian_sigma(0.01, cal.eps_step, cal.delta_step))


def pmf(*p):
    return FinitePmf.from_probs(p)


def test_divergence_examples():
    a, b = pmf(0.7310585786300049, 0.2689414213699951), pmf(0.2689414213699951, 0.7310585786300049)
    assert max_divergence(a, b) == pytest.approx(1.0, rel=1e-12)
    assert max_divergence(a, a) == 0
    assert max_divergence(pmf(1, 0), pmf(0.5, 0.5)) == pytest.approx(math.log(2))
    assert max_divergence(pmf(0.5, 0.5), pmf(1, 0)) == math.inf
    assert smoothed_max_divergence(pmf(1, 0), pmf(0.5, 0.5), 0.5) == pytest.approx(0.0, abs=1e-15)
    assert smoothed_max_divergence(a, b, 0.0) == max_divergence(a, b)
    assert renyi_divergence(a, a, 2) == pytest.approx(0.0, abs=1e-15)
    assert renyi_divergence(pmf(1, 0), pmf(0.5, 0.5), 2) == pytest.approx(math.log(2))
    with pytest.raises(InvalidInputError):
        renyi_divergence(a, b, 1.0)
    with pytest.raises(InvalidInputError):
        max_divergence(a, pmf(0.2, 0.3, 0.5))


def brute_smoothed(p, q, delta):
    best = -math.inf
    for r in range(1, len(p) + 1):
        for S in itertools.combinations(range(len(p)), r):
            ps, qs = sum(p[i] for i in S), sum(q[i] for i in S)
            if ps < delta or ps - delta <= 0:
                continue
            best = max(best, math.inf if qs == 0 else math.log((ps - delta) / qs))
    return best


def test_smoothed_divergence_matches_subset_enumeration():
    rng = np.random.default_rng(8)
    for _ in range(200):
        p = rng.dirichlet(np.ones(5) * 0.7)
        q = rng.dirichlet(np.ones(5) * 0.7)
        if rng.uniform() < 0.2:
            q[rng.integers(5)] = 0
            q /= q.sum()
        delta = float(rng.choice([0.0, 0.01, 0.1, 0.3]))
        got = smoothed_max_divergence(FinitePmf.from_probs(p), FinitePmf.from_probs(q), delta)
        want = brute_smoothed(p, q, delta)
        if math.isinf(want):
            assert got == want
        else:
            assert got == pytest.approx(want, abs=1e-12)


def test_renyi_increases_toward_max_divergence():
    rng = np.random.default_rng(9)
    for _ in range(30):
        p = FinitePmf.from_probs(rng.dirichlet(np.ones(6)))
        q = FinitePmf.from_probs(rng.dirichlet(np.ones(6)))
        vals = [renyi_divergence(p, q, 2.0**j) for j in range(1, 11)]
        assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))
        assert vals[-1] <= max_divergence(p, q) + 1e-12
        assert vals[0] >= 0


def test_divergences_nonnegative_and_zero_iff_equal():
    rng = np.random.default_rng(10)
    for _ in range(50):
        p = FinitePmf.from_probs(rng.dirichlet(np.ones(4)))
        q = FinitePmf.from_probs(rng.dirichlet(np.ones(4)))
        assert max_divergence(p, q) > 0
        assert renyi_divergence(p, q, 3) > 0
        assert max_divergence(p, p) == 0


def eight_rows():
    rng = np.random.default_rng(12)
    return Dataset(rng.uniform(-1, 1, (8, 1)), np.array([1, 2] * 4), rng.integers(0, 2, 8))


def test_audit_constant_mechanism():
    d = eight_rows()
    rep = audit_finite_mechanism(lambda _: pmf(0.2, 0.8), d, sensitive_swaps(d), PrivacyBudget(0.5))
    assert rep.observed == 0 and rep.passed and rep.neighbors_checked == 8


def test_audit_flags_a_leaky_mechanism():
    d = eight_rows()

    def leaky(data):
        share = float(np.mean(data.sensitive == 1))
        return pmf(0.1 + 0.8 * share, 0.9 - 0.8 * share)

    rep = audit_finite_mechanism(leaky, d, sensitive_swaps(d), PrivacyBudget(0.01), mechanism="leaky")
    assert not rep.passed and rep.worst_neighbor_index is not None
    doc = json.loads(rep.to_json())
    assert {"mechanism", "epsilon_claimed", "delta_claimed", "observed", "pass", "worst_neighbor_index"} <= set(doc)
    assert doc["pass"] is False and doc["mechanism"] == "leaky"


def test_audit_accepts_fixed_alternatives():
    d = eight_rows()
    alts = [Row(np.zeros(1), 1, 0), Row(np.ones(1), 2, 1)]
    rep = audit_finite_mechanism(lambda _: pmf(1.0), d, alts, PrivacyBudget(1.0))
    assert rep.neighbors_checked == 16
    with pytest.raises(InvalidInputError):
        audit_finite_mechanism(lambda _: pmf(1.0), d, [], PrivacyBudget(1.0))


def test_call_rng_is_deterministic_and_distinct():
    a = call_rng(3, 0).uniform(size=4)
    assert np.array_equal(a, call_rng(3, 0).uniform(size=4))
    assert not np.array_equal(a, call_rng(3, 1).uniform(size=4))


def test_finite_pmf_validation():
    with pytest.raises(InvalidInputError):
        FinitePmf.from_probs([0.5, 0.6])
    with pytest.raises(InvalidInputError):
        FinitePmf.from_probs([-0.1, 1.1])
