import json
import math

import numpy as np
import pytest

from pcgoo.core import Dataset, FiniteSet, ParamBall
from pcgoo.errors import ContractViolation, DegenerateWeightWarning, InvalidInputError, UnsupportedAuditError
from pcgoo.objectives import GroupErrorLoss, ThresholdClassifier, WeightedLSLoss, threshold_grid
from pcgoo.oracles import (
    ExactOracle,
    ExpMechOracle,
    JsonlTrace,
    NoisySGDOracle,
    OracleSpec,
    expmech_sample_size,
    group_embedding,
    lopt_exact,
    lopt_expmech,
    lopt_noisy_sgd,
    wrap_divergence_oracle,
)
from pcgoo.privacy import PrivacyBudget, sensitive_swaps, split_budget
from pcgoo.synthetic import ball_net, ball_uniform, table_instance

TWO = FiniteSet(("c1", "c2"), losses=[[0.2, 0.8], [0.6, 0.1]])


def test_lopt_exact_examples():
    assert lopt_exact(TWO, None, [1, 1], None) == "c2"
    assert lopt_exact(TWO, None, [0, 0], None) == "c1"


def test_lopt_exact_matches_scan():
    rng = np.random.default_rng(0)
    for _ in range(20):
        table = rng.uniform(size=(50, 3))
        s = FiniteSet(tuple(range(50)), losses=table)
        w = rng.normal(size=3)
        scores = [float(np.dot(w, row)) for row in table]
        best = min(range(50), key=lambda i: (scores[i], i))
        assert lopt_exact(s, None, w, None) == best


def test_expmech_pmf_example():
    orc = ExpMechOracle(TWO, None, None, epsilon=2.0, n=10)
    p = orc.pmf_on([1.0, 1.0]).probs
    assert p[1] / p[0] == pytest.approx(math.exp(1.5), rel=1e-12)


def test_expmech_large_epsilon_is_exact():
    orc = ExpMechOracle(TWO, None, None, epsilon=1e6, n=10)
    assert orc.pmf_on([1.0, 1.0]).probs[1] >= 1 - 1e-9


def test_expmech_zero_weight_is_uniform_with_warning():
    orc = ExpMechOracle(TWO, None, None, epsilon=1.0, n=10)
    with pytest.warns(DegenerateWeightWarning):
        assert orc.pmf_on([0.0, 0.0]).probs == pytest.approx([0.5, 0.5])


def test_expmech_needs_rng_and_budget():
    orc = ExpMechOracle(TWO, None, None, n=10)
    with pytest.raises(InvalidInputError):
        orc.pmf_on([1.0, 1.0])
    with pytest.raises(InvalidInputError):
        orc.with_budget(1.0).query([1.0, 1.0])


def threshold_rows(seed=3, n=8):
    rng = np.random.default_rng(seed)
    a = np.array([1, 2] * (n // 2))
    return Dataset(rng.uniform(-1, 1, (n, 1)), a, rng.integers(0, 2, n))


def test_expmech_audit_over_swaps():
    d = threshold_rows()
    cands = FiniteSet(threshold_grid(-1, 1, 16))
    loss = GroupErrorLoss(2)
    for eps in (0.5, 1.0, 2.0):
        orc = wrap_divergence_oracle(ExpMechOracle(cands, loss, d, eps), "pure", eps)
        rep = orc.audit([0.7, 0.3], d, sensitive_swaps(d))
        assert rep.passed and rep.observed <= eps + 1e-9


def test_lopt_expmech_is_seeded():
    d = threshold_rows()
    cands = FiniteSet(threshold_grid(-1, 1, 16))
    a = lopt_expmech(cands, GroupErrorLoss(2), [1, 1], d, OracleSpec(privacy=PrivacyBudget(1.0)), np.random.default_rng(2))
    b = lopt_expmech(cands, GroupErrorLoss(2), [1, 1], d, 1.0, np.random.default_rng(2))
    assert a == b


def test_expmech_sample_size_formula():
    n0 = expmech_sample_size(4, 1.0, 0.01, 0.1, n_candidates=64)
    assert n0 == math.ceil(8 * 2 / 0.01 * ((math.log(64) + 1) * math.log(3) + math.log(10)))
    assert expmech_sample_size(1, 1.0, 0.1, 0.5, dim=2) == math.ceil(80 * (3 * math.log(3) + math.log(2)))
    with pytest.raises(InvalidInputError):
        expmech_sample_size(1, 1.0, 0.1, 0.5)


def test_expmech_tolerance_contract_at_threshold():
    inst = table_instance(5)
    eps, tau, theta = 1.0, 0.05, 0.1
    n = expmech_sample_size(inst.k, eps, tau, theta, n_candidates=len(inst.candidates))
    d = inst.dataset(n)
    orc = ExpMechOracle(inst.candidates, inst.loss, d, eps)
    rng = np.random.default_rng(0)
    hits = 0
    for trial in range(200):
        w = rng.uniform(0, 1, inst.k)
        _, i = orc.query(w, np.random.default_rng([7, trial]))
        scores = orc.table @ w
        hits += scores[i] <= scores.min() + tau * np.linalg.norm(w)
    assert hits / 200 >= 1 - theta


def test_exact_oracle_point_mass_and_optimality():
    inst = table_instance(2)
    d = inst.dataset(500)
    orc = ExactOracle(inst.candidates, inst.loss, d)
    w = np.linspace(1, 2, inst.k)
    c, i = orc.query(w)
    assert np.all(orc.table @ w >= (orc.table @ w)[i])
    assert orc.pmf_on(w).probs[i] == 1


def test_trace_records(tmp_path):
    path = tmp_path / "trace.jsonl"
    orc = ExpMechOracle(TWO, None, None, epsilon=1.0, n=10)
    orc.trace = JsonlTrace(path)
    for t in range(3):
        orc.query([1.0, 0.5], np.random.default_rng(t))
    recs = [json.loads(line) for line in path.read_text().splitlines()]
    assert [r["call"] for r in recs] == [0, 1, 2]
    assert recs[0]["epsilon"] == 1.0 and recs[0]["w_norm"] == pytest.approx(math.hypot(1, 0.5))


def ls_data(seed=4, n=30):
    x = ball_uniform(seed, n, 2)
    rng = np.random.default_rng(seed)
    y = (x[:, 0] + 0.2 * rng.normal(size=n) > 0).astype(int)
    return Dataset(x, np.arange(n) % 2 + 1, y)


def test_noisy_sgd_without_noise_matches_net():
    d = ls_data()
    loss = WeightedLSLoss(2)
    w = np.array([1.0, 0.5])
    beta = float(np.linalg.norm(w)) * 0.5
    c = lopt_noisy_sgd(ParamBall(2), loss, w, d, None, steps=3000, step_size=1 / beta, sigma=0.0)
    net = FiniteSet(list(ball_net(2, 1000)))
    best = lopt_exact(net, loss, w, d)
    gap = float(w @ loss.loss(c, d)) - float(w @ loss.loss(best, d))
    assert gap <= 1e-3


def test_noisy_sgd_accounting_round_trip():
    d = ls_data()
    per_call = split_budget(PrivacyBudget(1.0, 1e-5), 20)
    orc = NoisySGDOracle(ParamBall(2), WeightedLSLoss(2), d, per_call, steps=40)
    w = np.array([1.0, 2.0])
    cal = orc.calibration(w)
    back = cal.composed()
    assert back.epsilon <= per_call.epsilon_prime and back.delta <= per_call.delta_prime * (1 + 1e-12)
    assert cal.sigma > 0 and orc.sensitivity(w) == pytest.approx(2 * np.linalg.norm(w) / d.n)
    c, idx = orc.query(w, np.random.default_rng(0))
    assert idx is None and np.linalg.norm(c) <= 1 + 1e-12


def test_noisy_sgd_contracts():
    d = ls_data()
    with pytest.raises(ContractViolation):
        NoisySGDOracle(ParamBall(1), GroupErrorLoss(2), d, None)
    with pytest.raises(InvalidInputError):
        NoisySGDOracle(ParamBall(2), WeightedLSLoss(2), d, (1.0, 0.0))
    orc = NoisySGDOracle(ParamBall(2), WeightedLSLoss(2), d, (1.0, 1e-6), steps=5)
    with pytest.raises(ContractViolation):
        orc.query([1.0, -0.5], np.random.default_rng(0))
    with pytest.raises(UnsupportedAuditError):
        wrap_divergence_oracle(orc, "smoothed", 1.0, delta=1e-6).audit([1.0, 1.0], d, sensitive_swaps(d))


def test_noisy_sgd_default_schedule():
    d = ls_data(n=6)
    orc = NoisySGDOracle(ParamBall(2), WeightedLSLoss(2), d, None, sigma=0.0)
    assert orc.steps == 36
    c, _ = orc.query([1.0, 1.0])
    assert np.linalg.norm(c) <= 1 + 1e-12


def test_group_embedding():
    assert np.array_equal(group_embedding([0.6, 0.8], 2, 2), [0, 0, 0.6, 0.8])
    assert np.array_equal(group_embedding([0.6, 0.8], 1, 2), [0.6, 0.8, 0, 0])
    rng = np.random.default_rng(1)
    for _ in range(20):
        x, y = rng.normal(size=3), rng.normal(size=3)
        k = int(rng.integers(1, 5))
        assert np.linalg.norm(group_embedding(x, k, 4)) == pytest.approx(np.linalg.norm(x))
        assert np.allclose(group_embedding(x + y, k, 4), group_embedding(x, k, 4) + group_embedding(y, k, 4))
    with pytest.raises(InvalidInputError):
        group_embedding([1.0], 3, 2)


def test_divergence_wrappers_agree():
    d = threshold_rows(seed=5)
    cands = FiniteSet(threshold_grid(-1, 1, 12))
    inner = ExpMechOracle(cands, GroupErrorLoss(2), d, 1.0)
    w = [1.0, 0.2]
    pure = wrap_divergence_oracle(inner, "pure", 1.0).audit(w, d, sensitive_swaps(d))
    smooth = wrap_divergence_oracle(inner, "smoothed", 1.0, delta=0.0).audit(w, d, sensitive_swaps(d))
    renyi = wrap_divergence_oracle(inner, "renyi", 1.0, phi=2.0).audit(w, d, sensitive_swaps(d))
    assert pure.passed and smooth.observed == pure.observed
    assert renyi.observed <= pure.observed + 1e-12
    with pytest.raises(InvalidInputError):
        wrap_divergence_oracle(inner, "renyi", 1.0)


def test_exact_oracle_fails_audit():
    d = threshold_rows(seed=6)
    cands = FiniteSet(threshold_grid(-1, 1, 12))
    rep = wrap_divergence_oracle(ExactOracle(cands, GroupErrorLoss(2), d), "pure", 1.0).audit([1.0, 0.0], d, sensitive_swaps(d))
    assert not rep.passed and rep.observed == math.inf


def test_oracle_spec_validation():
    with pytest.raises(InvalidInputError):
        OracleSpec(tolerance=-1)
    spec = OracleSpec(privacy=split_budget(PrivacyBudget(1.0, 1e-5), 10))
    assert spec.delta == pytest.approx(5e-7)


def test_single_threshold_classifier_predictions():
    c = ThresholdClassifier(0.0)
    assert np.array_equal(c.predict(np.array([[-0.1], [0.0], [0.3]])), [0, 1, 1])


def test_expmech_flags_non_average_losses():
    from pcgoo.errors import SensitivityWarning
    from pcgoo.objectives import EqualizedOddsLoss
    from pcgoo.solvers import SolverConfig, solve_iterative_lopt
    from pcgoo.core import linear_objective

    d = threshold_rows(n=40)
    cands = FiniteSet(threshold_grid(-1, 1, 8))
    with pytest.warns(SensitivityWarning):
        orc = ExpMechOracle(cands, EqualizedOddsLoss(2), d)
    assert not orc.sensitivity_verified
    f, g = linear_objective(np.ones(6) / 6), linear_objective(np.eye(6)[0], -0.5)
    res = solve_iterative_lopt(orc, f, g, SolverConfig(T=3, privacy=PrivacyBudget(1.0, 1e-5)))
    assert any("not guaranteed" in w for w in res.warnings)
    assert ExpMechOracle(cands, GroupErrorLoss(2), d).sensitivity_verified
