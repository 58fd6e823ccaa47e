"""Seeded synthetic instances and candidate nets."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Dataset, FiniteSet, ScalarObjective, linear_objective
from .errors import InvalidInputError
from .objectives import LookupTableLoss


@dataclass
class TableInstance:
    """Random finite instance: candidate ids, a table loss and convex ``f``, ``g``."""

    seed: int
    candidates: FiniteSet
    loss: LookupTableLoss
    f: ScalarObjective
    g: ScalarObjective
    cell_probs: np.ndarray

    @property
    def k(self) -> int:
        return self.loss.k

    def dataset(self, n: int) -> Dataset:
        """``n`` rows whose (group, label) cells are drawn from ``cell_probs``.

        The rows carry no features; the same ``(seed, n)`` always yields the
        same data.
        """
        if n < 1:
            raise InvalidInputError("need at least one row")
        _, _, A, Y = self.loss.table.shape
        rng = np.random.default_rng([self.seed, n])
        cells = rng.choice(A * Y, size=n, p=self.cell_probs)
        a = (cells // Y + 1).astype(np.int8)
        y = (cells % Y).astype(np.int8)
        return Dataset(np.zeros((n, 0)), a, y, n_groups=A)


def table_instance(seed: int, max_k: int = 4, max_candidates: int = 64, n_groups: int = 2, n_labels: int = 2) -> TableInstance:
    """Instance with ``K <= max_k`` groups and ``8..max_candidates`` candidates.

    ``f(x) = a.x + Q ||x - m||^2 / (2K)`` with ``a`` a nonnegative unit vector;
    ``g(x) = b.x - t`` where ``t`` is a quantile of the candidate scores, so
    some candidate is feasible on data close to the cell distribution.
    """
    rng = np.random.default_rng(seed)
    K = int(rng.integers(1, max_k + 1))
    m = int(rng.integers(min(8, max_candidates), max_candidates + 1))
    table = rng.uniform(0, 1, (m, K, n_groups, n_labels))
    probs = rng.dirichlet(np.full(n_groups * n_labels, 4.0))

    a = rng.uniform(0, 1, K)
    a /= np.linalg.norm(a)
    Q = float(rng.uniform(0, 1))
    center = rng.uniform(0, 1, K)
    f = ScalarObjective(
        value=lambda x: float(a @ x) + 0.5 * Q * float(np.sum((x - center) ** 2)) / K,
        gradient=lambda x: a + Q * (x - center) / K,
        lipschitz=1 + Q * math.sqrt(K) / K,
        smoothness=Q / K,
        dim=K,
        name="linear_plus_quadratic",
    )
    b = rng.normal(size=K)
    b /= np.linalg.norm(b)
    expected = table.reshape(m, K, -1) @ probs
    t = float(np.quantile(expected @ b, rng.uniform(0.1, 0.6)))
    g = linear_objective(b, -t, name="linear_constraint")

    loss = LookupTableLoss(table)
    return TableInstance(seed, FiniteSet(tuple(range(m))), loss, f, g, probs)


def threshold_data(seed: int, n: int, base_rates=(0.3, 0.6), shift: float = 0.3) -> Dataset:
    """Two groups with a scalar score in ``[-1, 1]`` and binary labels.

    Group ``a`` has positive rate ``base_rates[a-1]``; positives score higher
    by ``shift`` on average, and group 2 is shifted up by ``shift / 2``.
    """
    rng = np.random.default_rng(seed)
    a = rng.integers(1, 3, size=n)
    a[:2] = (1, 2)
    rates = np.asarray(base_rates, dtype=np.float64)[a - 1]
    y = (rng.uniform(size=n) < rates).astype(np.int64)
    x = rng.normal(0.0, 0.35, size=n) + shift * (y - 0.5) + shift / 2 * (a - 1.5)
    return Dataset(np.clip(x, -1, 1)[:, None], a, y)


def ball_uniform(seed: int, n: int, dim: int) -> np.ndarray:
    """``n`` points uniform in the ``dim``-dimensional unit ball."""
    rng = np.random.default_rng(seed)
    z = rng.normal(size=(n, dim))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    return z * rng.uniform(size=(n, 1)) ** (1.0 / dim)


def ball_net(dim: int, m: int) -> np.ndarray:
    """Deterministic net of about ``m`` points covering the unit ball.

    In two dimensions this is a sunflower spiral of exactly ``m`` points whose
    outermost point lies on the circle; otherwise a cube grid restricted to
    the ball.
    """
    if dim < 1 or m < 1:
        raise InvalidInputError("need dim >= 1 and m >= 1")
    if dim == 2:
        i = np.arange(1, m + 1)
        r = np.sqrt(i / m)
        phi = i * math.pi * (3 - math.sqrt(5))
        return np.stack([r * np.cos(phi), r * np.sin(phi)], axis=1)
    side = max(2, math.ceil((m * 2**dim / _ball_fraction(dim)) ** (1.0 / dim)))
    axis = np.linspace(-1, 1, side)
    grid = np.stack([g.ravel() for g in np.meshgrid(*([axis] * dim), indexing="ij")], axis=1)
    return grid[np.linalg.norm(grid, axis=1) <= 1 + 1e-12]


def _ball_fraction(dim: int) -> float:
    # volume of the unit ball
    return math.pi ** (dim / 2) / math.gamma(dim / 2 + 1)
