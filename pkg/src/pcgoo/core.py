"""Domain types: datasets, group losses, decision sets and the penalized objective.

A *group loss* maps a decision and a dataset to a vector in ``[0, 1]^K``; an
error objective ``f`` and a constraint ``g`` act on that vector and are merged
into the single penalized objective ``h = f + G * max(0, g)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, NamedTuple, Sequence

import numpy as np

from .errors import InvalidInputError, PreconditionError

#: slack tolerated on the [0, 1] bounds before a loss vector is rejected
BOUND_SLACK = 1e-12


def loss_vector(values, k: int | None = None, clip: bool = False) -> np.ndarray:
    """Validate ``values`` as a K-dimensional loss vector in ``[0, 1]^K``.

    Entries outside the unit interval raise unless ``clip`` is set; float
    round-off within ``BOUND_SLACK`` is always clipped silently.
    """
    v = np.array(values, dtype=np.float64, ndmin=1)
    if v.ndim != 1:
        raise InvalidInputError(f"loss vector must be one-dimensional, got shape {v.shape}")
    if k is not None and v.shape[0] != k:
        raise InvalidInputError(f"expected {k} group losses, got {v.shape[0]}")
    if not np.all(np.isfinite(v)):
        raise InvalidInputError("loss vector has non-finite entries")
    if not clip and (v.min() < -BOUND_SLACK or v.max() > 1 + BOUND_SLACK):
        raise InvalidInputError(f"loss entries must lie in [0, 1], got range [{v.min()}, {v.max()}]")
    return np.clip(v, 0.0, 1.0)


class Row(NamedTuple):
    features: np.ndarray
    sensitive: int
    label: int


@dataclass(frozen=True, eq=False)
class Dataset:
    """Rows ``(x_i, a_i, y_i)`` stored column-wise.

    Sensitive ids run from 1 to ``n_groups``. When ``n_groups`` is not given
    it is inferred as the largest id and every id in between must occur.
    """

    features: np.ndarray
    sensitive: np.ndarray
    labels: np.ndarray
    n_groups: int = 0

    def __post_init__(self):
        x = np.asarray(self.features, dtype=np.float64)
        if x.ndim == 1:
            x = x[:, None]
        a = np.asarray(self.sensitive)
        y = np.asarray(self.labels)
        if x.ndim != 2 or x.shape[0] < 1:
            raise InvalidInputError("dataset needs at least one row of features")
        n = x.shape[0]
        if a.shape != (n,) or y.shape != (n,):
            raise InvalidInputError("features, sensitive and labels must have the same number of rows")
        if not (np.issubdtype(a.dtype, np.integer) and np.issubdtype(y.dtype, np.integer)):
            raise InvalidInputError("sensitive attributes and labels must be integers")
        if a.min() < 1:
            raise InvalidInputError("sensitive attribute ids start at 1")
        groups = self.n_groups
        if groups == 0:
            groups = int(a.max())
            if np.unique(a).size != groups:
                raise InvalidInputError("sensitive attribute ids must be contiguous from 1")
        elif a.max() > groups:
            raise InvalidInputError(f"sensitive id {int(a.max())} exceeds n_groups={groups}")
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "sensitive", a)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "n_groups", groups)

    @classmethod
    def from_rows(cls, rows: Sequence[Row | tuple], n_groups: int = 0) -> "Dataset":
        x = np.array([np.atleast_1d(np.asarray(r[0], dtype=np.float64)) for r in rows])
        a = np.array([int(r[1]) for r in rows])
        y = np.array([int(r[2]) for r in rows])
        return cls(x, a, y, n_groups)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def __len__(self):
        return self.n

    def row(self, i: int) -> Row:
        return Row(self.features[i].copy(), int(self.sensitive[i]), int(self.labels[i]))

    def rows(self):
        for i in range(self.n):
            yield self.row(i)

    def replace_row(self, i: int, row: Row | tuple) -> "Dataset":
        """Neighboring dataset with row ``i`` swapped for ``row``."""
        x = self.features.copy()
        a = self.sensitive.copy()
        y = self.labels.copy()
        x[i] = np.asarray(row[0], dtype=np.float64)
        a[i] = int(row[1])
        y[i] = int(row[2])
        return Dataset(x, a, y, n_groups=max(self.n_groups, int(row[1])))


class GroupLossFunction:
    """Maps ``(decision, dataset)`` to a loss vector in ``[0, 1]^k``.

    Subclasses implement :meth:`loss`. Losses that are row averages should
    derive from :class:`ItemizedGroupLoss` instead.
    """

    k: int = 1

    def loss(self, decision, data: Dataset) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, decision, data: Dataset) -> np.ndarray:
        return self.loss(decision, data)

    def loss_table(self, decisions: Sequence, data: Dataset) -> np.ndarray:
        """Stack the loss vectors of ``decisions`` into an ``(m, k)`` array."""
        return np.array([self.loss(c, data) for c in decisions]).reshape(len(decisions), self.k)


class ItemizedGroupLoss(GroupLossFunction):
    """Group loss defined as the average of per-row (itemized) losses."""

    def itemized(self, decision, data: Dataset) -> np.ndarray:
        """Per-row losses, shape ``(n, k)``, each row in ``[0, 1]^k``."""
        raise NotImplementedError

    def loss(self, decision, data: Dataset) -> np.ndarray:
        return average_itemized_loss(self, decision, data)


def average_itemized_loss(loss: ItemizedGroupLoss, c, d: Dataset) -> np.ndarray:
    """Row average of the itemized losses, using pairwise summation."""
    items = np.asarray(loss.itemized(c, d), dtype=np.float64)
    if items.shape != (d.n, loss.k):
        raise InvalidInputError(f"itemized loss has shape {items.shape}, expected {(d.n, loss.k)}")
    # numpy sums the contiguous axis pairwise
    total = np.add.reduce(np.ascontiguousarray(items.T), axis=1)
    return loss_vector(total / d.n, loss.k)


@dataclass(frozen=True)
class FiniteSet:
    """Finite candidate set; decisions are referred to by their index."""

    decisions: tuple
    losses: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "decisions", tuple(self.decisions))
        if not self.decisions:
            raise InvalidInputError("finite decision set is empty")
        if self.losses is not None:
            table = np.asarray(self.losses, dtype=np.float64)
            if table.ndim != 2 or table.shape[0] != len(self.decisions):
                raise InvalidInputError("precomputed loss table must have one row per decision")
            object.__setattr__(self, "losses", table)

    def __len__(self):
        return len(self.decisions)

    def __getitem__(self, i):
        return self.decisions[i]

    def loss_table(self, loss: GroupLossFunction | None = None, data: Dataset | None = None) -> np.ndarray:
        if loss is None or data is None:
            if self.losses is None:
                raise InvalidInputError("no precomputed loss table; pass a loss and a dataset")
            return self.losses
        return loss.loss_table(self.decisions, data)


@dataclass(frozen=True)
class ParamBall:
    """Closed Euclidean unit ball of linear decisions in ``dim`` dimensions."""

    dim: int

    def project(self, c) -> np.ndarray:
        c = np.asarray(c, dtype=np.float64)
        if c.shape != (self.dim,):
            raise InvalidInputError(f"expected a {self.dim}-vector, got shape {c.shape}")
        return c / max(1.0, float(np.linalg.norm(c)))

    def contains(self, c, tol: float = 1e-12) -> bool:
        c = np.asarray(c, dtype=np.float64)
        return c.shape == (self.dim,) and float(np.linalg.norm(c)) <= 1 + tol


@dataclass(frozen=True)
class RandomizedDecision:
    """Mixture over member decisions.

    Uniform unless ``weights`` is given. ``indices`` records the candidate
    index of each member when the members come from a :class:`FiniteSet`.
    """

    members: tuple
    weights: np.ndarray | None = None
    indices: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(self.members))
        if not self.members:
            raise InvalidInputError("a randomized decision needs at least one member")
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=np.float64)
            if w.shape != (len(self.members),) or w.min() < 0 or abs(w.sum() - 1) > 1e-9:
                raise InvalidInputError("mixture weights must be a probability vector over the members")
            object.__setattr__(self, "weights", w / w.sum())
        if self.indices is not None:
            object.__setattr__(self, "indices", tuple(int(i) for i in self.indices))

    @property
    def probabilities(self) -> np.ndarray:
        if self.weights is None:
            return np.full(len(self.members), 1.0 / len(self.members))
        return self.weights

    def mean_loss(self, member_losses) -> np.ndarray:
        """Mixture loss from per-member loss vectors (same order as ``members``)."""
        table = np.asarray(member_losses, dtype=np.float64)
        return self.probabilities @ table

    def loss_vector(self, loss: GroupLossFunction, data: Dataset) -> np.ndarray:
        # repeated members are evaluated once
        keys = self.indices if self.indices is not None else [id(m) for m in self.members]
        cache: dict = {}
        rows = []
        for key, member in zip(keys, self.members):
            if key not in cache:
                cache[key] = np.asarray(loss.loss(member, data), dtype=np.float64)
            rows.append(cache[key])
        return self.mean_loss(rows)

    def sample(self, rng: np.random.Generator):
        i = int(rng.choice(len(self.members), p=self.probabilities))
        return self.members[i]


@dataclass(frozen=True)
class ScalarObjective:
    """A real function on ``[0, 1]^K`` with its gradient and regularity constants.

    ``smoothness`` is ``None`` when no gradient-Lipschitz bound is known.
    ``exact`` optionally holds the unsmoothed function a smoothed objective
    approximates, so the smoothing bias can be reported.
    """

    value: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    lipschitz: float
    smoothness: float | None = None
    monotone_nondecreasing: bool = False
    convex: bool = True
    dim: int | None = None
    exact: Callable[[np.ndarray], float] | None = None
    name: str = ""

    def __post_init__(self):
        if self.lipschitz < 0:
            raise InvalidInputError("Lipschitz constant must be nonnegative")
        if self.smoothness is not None and self.smoothness < 0:
            raise InvalidInputError("smoothness constant must be nonnegative")

    def __call__(self, x) -> float:
        return float(self.value(np.asarray(x, dtype=np.float64)))

    def grad(self, x) -> np.ndarray:
        return np.asarray(self.gradient(np.asarray(x, dtype=np.float64)), dtype=np.float64)

    def smoothing_bias(self, x) -> float:
        """``exact(x) - value(x)``; zero for objectives without a smoothed form."""
        if self.exact is None:
            return 0.0
        x = np.asarray(x, dtype=np.float64)
        return float(self.exact(x)) - float(self.value(x))


def linear_objective(weights, offset: float = 0.0, name: str = "linear") -> ScalarObjective:
    """``x -> weights . x + offset``."""
    w = np.array(weights, dtype=np.float64)
    return ScalarObjective(
        value=lambda x: float(w @ x) + offset,
        gradient=lambda x: w.copy(),
        lipschitz=float(np.linalg.norm(w)),
        smoothness=0.0,
        monotone_nondecreasing=bool(np.all(w >= 0)),
        dim=w.size,
        name=name,
    )


def quadratic_objective(matrix, center, linear=None, offset: float = 0.0, name: str = "quadratic") -> ScalarObjective:
    """``x -> 0.5 (x-m)' A (x-m) + b . x + offset`` with ``A`` symmetric PSD.

    The Lipschitz constant is taken over the unit cube: ``max ||A(x-m) + b||``
    is bounded by ``||A||_2 * max ||x - m|| + ||b||``.
    """
    A = np.array(matrix, dtype=np.float64)
    m = np.array(center, dtype=np.float64)
    b = np.zeros_like(m) if linear is None else np.array(linear, dtype=np.float64)
    A = 0.5 * (A + A.T)
    eig = np.linalg.eigvalsh(A)
    if eig.min() < -1e-12:
        raise InvalidInputError("quadratic objective needs a positive semidefinite matrix")
    beta = float(eig.max())
    far = np.linalg.norm(np.maximum(np.abs(m), np.abs(1 - m)))
    return ScalarObjective(
        value=lambda x: 0.5 * float((x - m) @ A @ (x - m)) + float(b @ x) + offset,
        gradient=lambda x: A @ (x - m) + b,
        lipschitz=beta * float(far) + float(np.linalg.norm(b)),
        smoothness=beta,
        dim=m.size,
        name=name,
    )


@dataclass(frozen=True)
class ComposedObjective:
    """``h(x) = f(x) + G * max(0, g(x))``."""

    f: ScalarObjective
    g: ScalarObjective
    penalty_weight: float

    @property
    def lipschitz(self) -> float:
        return self.f.lipschitz + self.penalty_weight * self.g.lipschitz

    @property
    def smoothness(self) -> float | None:
        if self.f.smoothness is None or self.g.smoothness is None:
            return None
        return self.f.smoothness + self.penalty_weight * self.g.smoothness

    def __call__(self, x) -> float:
        x = np.asarray(x, dtype=np.float64)
        return self.f(x) + self.penalty_weight * max(0.0, self.g(x))

    def subgradient(self, x, scale_penalty: bool = True) -> np.ndarray:
        """``grad f + G * 1[g >= 0] * grad g``; the active branch is taken at ``g = 0``.

        ``scale_penalty=False`` drops the factor ``G`` on the constraint term.
        """
        x = np.asarray(x, dtype=np.float64)
        r = self.f.grad(x)
        if self.g(x) >= 0:
            r = r + (self.penalty_weight if scale_penalty else 1.0) * self.g.grad(x)
        return r


def penalty_weight(alpha: float, lipschitz_f: float, k: int) -> float:
    """Penalty weight ``(alpha + L_f sqrt(K)) / alpha`` that turns an
    alpha-minimizer of ``h`` into an alpha-solution of the constrained problem."""
    if alpha <= 0:
        raise InvalidInputError("alpha must be positive")
    if lipschitz_f < 0 or k < 1:
        raise InvalidInputError("need L_f >= 0 and K >= 1")
    return (alpha + lipschitz_f * math.sqrt(k)) / alpha


def compose(f: ScalarObjective, g: ScalarObjective, G: float) -> ComposedObjective:
    if G <= 0:
        raise InvalidInputError("penalty weight G must be positive")
    if f.dim is not None and g.dim is not None and f.dim != g.dim:
        raise InvalidInputError(f"f acts on {f.dim} groups but g on {g.dim}")
    return ComposedObjective(f, g, float(G))


@dataclass
class CompositionCheck:
    passed: bool
    h_min: float
    f_star: float
    g_bound: float
    n_near_minimizers: int
    witnesses: list = field(default_factory=list)


def verify_composition_guarantee(f: ScalarObjective, g: ScalarObjective, G: float, grid, alpha: float) -> CompositionCheck:
    """Brute-force check of the penalty guarantee on a finite grid of ``[0, 1]^K``.

    Every grid point within ``alpha`` of the grid minimum of ``h`` must satisfy
    ``f <= min_{g<=0} f + alpha`` and ``g <= (alpha + L_f sqrt(K)) / G``.
    Failing points are returned as witnesses.
    """
    pts = np.atleast_2d(np.asarray(grid, dtype=np.float64))
    k = pts.shape[1]
    fv = np.array([f(p) for p in pts])
    gv = np.array([g(p) for p in pts])
    feasible = gv <= 0
    if not feasible.any():
        raise PreconditionError("no grid point satisfies g <= 0")
    hv = fv + G * np.maximum(0.0, gv)
    h_min = float(hv.min())
    f_star = float(fv[feasible].min())
    g_bound = (alpha + f.lipschitz * math.sqrt(k)) / G
    near = np.flatnonzero(hv <= h_min + alpha)
    witnesses = [
        {"point": pts[i].tolist(), "f": float(fv[i]), "g": float(gv[i])}
        for i in near
        if fv[i] > f_star + alpha + 1e-12 or gv[i] > g_bound + 1e-12
    ]
    return CompositionCheck(not witnesses, h_min, f_star, g_bound, int(near.size), witnesses)


def loss_sensitivity_bound(loss: GroupLossFunction | int, n: int, lipschitz_f: float, lipschitz_g: float, G: float) -> float:
    """Neighboring-dataset sensitivity ``(L_f + G L_g) sqrt(K) / n`` of ``h o loss``."""
    if n < 1:
        raise InvalidInputError("n must be at least 1")
    k = loss if isinstance(loss, int) else loss.k
    return (lipschitz_f + G * lipschitz_g) * math.sqrt(k) / n


def unit_grid(k: int, step: float) -> np.ndarray:
    """Regular grid of ``[0, 1]^k`` with the given step (endpoints included)."""
    m = int(round(1.0 / step))
    axis = np.linspace(0.0, 1.0, m + 1)
    mesh = np.meshgrid(*([axis] * k), indexing="ij")
    return np.stack([a.ravel() for a in mesh], axis=1)


def as_objective(obj: Any) -> ScalarObjective:
    if not isinstance(obj, ScalarObjective):
        raise InvalidInputError(f"expected a ScalarObjective, got {type(obj).__name__}")
    return obj
