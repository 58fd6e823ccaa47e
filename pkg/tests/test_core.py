import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pcgoo.core import (
    Dataset,
    FiniteSet,
    ItemizedGroupLoss,
    ParamBall,
    RandomizedDecision,
    ScalarObjective,
    average_itemized_loss,
    compose,
    linear_objective,
    loss_sensitivity_bound,
    loss_vector,
    penalty_weight,
    quadratic_objective,
    unit_grid,
    verify_composition_guarantee,
)
from pcgoo.errors import InvalidInputError, PreconditionError
from pcgoo.objectives import GroupErrorLoss, ThresholdClassifier


class FixedItems(ItemizedGroupLoss):
    """Itemized losses read from a fixed (n, k) array, ignoring the decision."""

    def __init__(self, items):
        self.items = np.asarray(items, dtype=np.float64)
        self.k = self.items.shape[1]

    def itemized(self, c, d):
        return self.items


def tiny(n, k=1):
    return Dataset(np.zeros((n, 1)), np.ones(n, dtype=int), np.zeros(n, dtype=int), n_groups=k)


def test_average_itemized_examples():
    assert np.allclose(average_itemized_loss(FixedItems([[0, 1], [1, 0]]), None, tiny(2)), [0.5, 0.5])
    assert np.allclose(average_itemized_loss(FixedItems([[0.3, 0.7]]), None, tiny(1)), [0.3, 0.7])
    assert np.all(average_itemized_loss(FixedItems(np.zeros((4, 2))), None, tiny(4)) == 0)


def test_average_itemized_shape_mismatch():
    with pytest.raises(InvalidInputError):
        average_itemized_loss(FixedItems([[0.1, 0.2]]), None, tiny(2))


def test_average_is_accurate_at_scale():
    rng = np.random.default_rng(0)
    items = rng.uniform(size=(10**6, 2))
    got = average_itemized_loss(FixedItems(items), None, tiny(10**6))
    exact = [math.fsum(items[:, j]) / 10**6 for j in range(2)]
    assert np.max(np.abs(got - exact)) <= 1e-12


def test_loss_vector_validation():
    with pytest.raises(InvalidInputError):
        loss_vector([0.5, 1.2])
    assert np.allclose(loss_vector([0.5, 1.2], clip=True), [0.5, 1.0])
    with pytest.raises(InvalidInputError):
        loss_vector([0.5], k=2)


def test_dataset_invariants():
    with pytest.raises(InvalidInputError):
        Dataset(np.zeros((2, 1)), np.array([1, 3]), np.array([0, 0]))
    with pytest.raises(InvalidInputError):
        Dataset(np.zeros((2, 1)), np.array([0, 1]), np.array([0, 0]))
    d = Dataset(np.zeros((2, 1)), np.array([1, 3]), np.array([0, 0]), n_groups=3)
    assert d.n_groups == 3
    d2 = d.replace_row(0, (np.ones(1), 2, 1))
    assert d.sensitive[0] == 1 and d2.sensitive[0] == 2 and d2.labels[0] == 1


def test_param_ball_projection():
    ball = ParamBall(2)
    assert np.allclose(ball.project([3, 4]), [0.6, 0.8])
    assert np.allclose(ball.project([0.3, 0.4]), [0.3, 0.4])
    assert ball.contains(ball.project([30, -1]))


def test_finite_set_rejects_empty():
    with pytest.raises(InvalidInputError):
        FiniteSet(())


def test_penalty_weight_examples():
    assert penalty_weight(0.1, 1, 4) == pytest.approx(21)
    assert penalty_weight(1, 0, 9) == 1
    assert penalty_weight(0.5, 1, 1) == pytest.approx(3)
    with pytest.raises(InvalidInputError):
        penalty_weight(0, 1, 1)


def _f_g():
    return linear_objective([1.0]), linear_objective([1.0], -0.5)


def test_compose_examples():
    f, g = _f_g()
    h = compose(f, g, 2)
    assert h([0.8]) == pytest.approx(1.4)
    assert h([0.2]) == pytest.approx(0.2)
    assert h.subgradient([0.8]) == pytest.approx([3.0])
    # active branch at g = 0
    assert h.subgradient([0.5]) == pytest.approx([3.0])
    assert h.subgradient([0.8], scale_penalty=False) == pytest.approx([2.0])


def test_compose_dimension_mismatch():
    with pytest.raises(InvalidInputError):
        compose(linear_objective([1.0]), linear_objective([1.0, 1.0]), 2)


def test_verify_composition_examples():
    f, g = _f_g()
    grid = np.linspace(0, 1, 11)[:, None]
    rep = verify_composition_guarantee(f, g, 21, grid, 0.1)
    assert rep.passed and rep.h_min == 0
    rep = verify_composition_guarantee(f, g, 1e6, grid, 0.1)
    assert rep.passed
    with pytest.raises(PreconditionError):
        verify_composition_guarantee(f, linear_objective([1.0], 2.0), 21, grid, 0.1)


def test_verify_composition_reports_witnesses():
    # a Lipschitz constant declared too small voids the constraint bound
    f = ScalarObjective(lambda x: -float(x[0]), lambda x: np.array([-1.0]), 0.0)
    g = linear_objective([1.0], -0.5)
    rep = verify_composition_guarantee(f, g, 0.5, np.linspace(0, 1, 11)[:, None], 0.1)
    assert not rep.passed and rep.witnesses


def test_sensitivity_bound_examples():
    assert loss_sensitivity_bound(4, 100, 1, 1, 21) == pytest.approx(0.44)
    assert loss_sensitivity_bound(1, 1, 1, 1, 1) == 2


def test_sensitivity_bound_holds_on_swaps():
    rng = np.random.default_rng(1)
    for _ in range(20):
        n = 10
        d = Dataset(rng.uniform(-1, 1, (n, 1)), rng.integers(1, 3, n), rng.integers(0, 2, n), n_groups=2)
        d = Dataset(d.features, d.sensitive, d.labels, n_groups=2)
        loss = GroupErrorLoss(2)
        c = ThresholdClassifier(float(rng.uniform(-1, 1)))
        f = linear_objective(rng.uniform(0, 1, 2))
        g = linear_objective(rng.normal(size=2), -0.2)
        G = 3.0
        h = compose(f, g, G)
        bound = loss_sensitivity_bound(loss, n, f.lipschitz, g.lipschitz, G)
        base = h(loss.loss(c, d))
        for i in range(n):
            for a in (1, 2):
                for y in (0, 1):
                    d2 = d.replace_row(i, (d.features[i], a, y))
                    assert abs(h(loss.loss(c, d2)) - base) <= bound + 1e-12


def test_randomized_decision_mean():
    loss = GroupErrorLoss(2)
    d = Dataset(np.array([[-0.5], [0.5], [0.1]]), np.array([1, 2, 1]), np.array([1, 0, 1]))
    cs = [ThresholdClassifier(t) for t in (-1.0, 0.0, 1.0)]
    mix = RandomizedDecision(cs)
    expected = np.mean([loss.loss(c, d) for c in cs], axis=0)
    assert np.array_equal(mix.loss_vector(loss, d), expected)
    w = RandomizedDecision(cs, weights=[0.5, 0.25, 0.25])
    assert np.allclose(w.loss_vector(loss, d), 0.5 * loss.loss(cs[0], d) + 0.25 * loss.loss(cs[1], d) + 0.25 * loss.loss(cs[2], d))


unit_pts = st.lists(st.floats(0, 1), min_size=3, max_size=3)


@settings(max_examples=200, deadline=None)
@given(unit_pts, unit_pts)
def test_quadratic_objective_lipschitz_and_convexity(x, y):
    f = quadratic_objective(np.diag([1.0, 2.0, 0.5]), [0.2, 0.5, 0.9], [0.1, -0.2, 0.3])
    g = linear_objective([1.0, -1.0, 0.5], -0.1)
    x, y = np.array(x), np.array(y)
    assert abs(f(x) - f(y)) <= f.lipschitz * np.linalg.norm(x - y) + 1e-12
    h = compose(f, g, 5.0)
    assert h((x + y) / 2) <= (h(x) + h(y)) / 2 + 1e-12
    assert abs(h(x) - h(y)) <= h.lipschitz * np.linalg.norm(x - y) + 1e-12


def test_declared_gradients_match_finite_differences():
    rng = np.random.default_rng(2)
    f = quadratic_objective(np.diag([1.0, 2.0]), [0.3, 0.6], [0.2, 0.1])
    for _ in range(50):
        x = rng.uniform(0.1, 0.9, 2)
        fd = np.array([(f(x + e) - f(x - e)) / 2e-6 for e in np.eye(2) * 1e-6])
        assert np.allclose(f.grad(x), fd, rtol=1e-6, atol=1e-8)


def test_unit_grid():
    g = unit_grid(2, 0.5)
    assert g.shape == (9, 2) and g.min() == 0 and g.max() == 1


def test_scalar_objective_rejects_negative_constants():
    with pytest.raises(InvalidInputError):
        ScalarObjective(lambda x: 0.0, lambda x: x, -1.0)
