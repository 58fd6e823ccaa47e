"""Ready-made objectives, constraints and group losses.

Includes confusion-matrix measures, smoothed equalized odds, demographic
parity, a Gini-index constraint, weighted least squares, table-driven losses
for synthetic instances and the closed-form lower-bound instance.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable

import numpy as np
from scipy.special import logsumexp, softmax

from .core import Dataset, ItemizedGroupLoss, GroupLossFunction, ScalarObjective, loss_vector
from .errors import DegenerateInstanceError, InvalidInputError, UndefinedRateError

SMOOTHINGS = ("smax", "lse")


# ----------------------------------------------------------------- confusion

@dataclass(frozen=True)
class ConfusionMatrix:
    """``entries[p-1, q-1]`` is the frequency of (label p, prediction q)."""

    entries: np.ndarray

    def __post_init__(self):
        C = np.asarray(self.entries, dtype=np.float64)
        if C.ndim != 2 or C.shape[0] != C.shape[1] or C.shape[0] < 1:
            raise InvalidInputError("confusion matrix must be square")
        if np.any(C < 0) or abs(C.sum() - 1) > 1e-12:
            raise InvalidInputError("confusion entries must be nonnegative and sum to 1")
        object.__setattr__(self, "entries", C)

    @property
    def L(self) -> int:
        return self.entries.shape[0]


def _as_matrix(C) -> np.ndarray:
    return C.entries if isinstance(C, ConfusionMatrix) else ConfusionMatrix(C).entries


def confusion_matrix(predictions, labels, L: int) -> ConfusionMatrix:
    """Empirical confusion matrix for classes ``1..L``."""
    pred = np.asarray(predictions)
    lab = np.asarray(labels)
    if pred.shape != lab.shape or pred.ndim != 1 or pred.size == 0:
        raise InvalidInputError("predictions and labels must be equal-length nonempty sequences")
    for name, v in (("prediction", pred), ("label", lab)):
        if np.any(v < 1) or np.any(v > L) or np.any(v != np.round(v)):
            raise InvalidInputError(f"{name} ids must be integers in 1..{L}")
    flat = (lab.astype(np.int64) - 1) * L + (pred.astype(np.int64) - 1)
    counts = np.bincount(flat, minlength=L * L)
    return ConfusionMatrix((counts / pred.size).reshape(L, L))


def confusion_to_loss_vector(C) -> np.ndarray:
    """Row-major flattening: entry (p, q) goes to slot ``L(p-1) + q`` (1-based)."""
    return loss_vector(_as_matrix(C).ravel())


def loss_vector_to_confusion(v) -> ConfusionMatrix:
    v = np.asarray(v, dtype=np.float64)
    L = math.isqrt(v.size)
    if L * L != v.size:
        raise InvalidInputError("vector length is not a square")
    return ConfusionMatrix(v.reshape(L, L))


def g_mean(C) -> float:
    """Geometric mean of per-class recalls."""
    M = _as_matrix(C)
    rows = M.sum(axis=1)
    if np.any(rows <= 0):
        raise UndefinedRateError("a class never occurs, so its recall is undefined")
    return float(np.prod(np.diag(M) / rows) ** (1.0 / M.shape[0]))


def h_mean(C) -> float:
    """``L / sum_i (column sum i / C_ii)``."""
    M = _as_matrix(C)
    diag = np.diag(M)
    if np.any(diag <= 0):
        raise UndefinedRateError("a zero diagonal entry leaves the H-mean undefined")
    return float(M.shape[0] / np.sum(M.sum(axis=0) / diag))


def decay_matrix(L: int, decay: float, order: str = "column") -> np.ndarray:
    """Normalized matrix whose entries shrink by ``decay`` along the flattening order.

    ``order`` is ``"row"`` or ``"column"`` (major), or ``"toeplitz"`` for the
    symmetric matrix with ``C_ij`` proportional to ``decay^|i-j|``.
    """
    if order == "toeplitz":
        i = np.arange(L)
        M = decay ** np.abs(i[:, None] - i[None, :]).astype(np.float64)
    else:
        M = (decay ** np.arange(L * L, dtype=np.float64)).reshape(L, L)
        if order == "column":
            M = M.T
        elif order != "row":
            raise InvalidInputError(f"unknown decay order {order!r}")
    return M / M.sum()


FIGURE_COLUMNS = (
    "L", "gmean_balanced", "hmean_balanced", "gmean_geometric", "hmean_geometric",
    "gmean_geometric_rowmajor", "hmean_geometric_rowmajor", "gmean_symmetric", "hmean_symmetric",
)


def figure_means(L_max: int, decay: float = 1 / 3) -> list[dict]:
    """G-mean and H-mean for ``L = 2..L_max`` under each matrix construction.

    ``balanced`` is the uniform matrix, ``geometric`` the column-major decay,
    ``geometric_rowmajor`` the row-major decay and ``symmetric`` the Toeplitz
    decay.
    """
    if L_max < 2:
        raise InvalidInputError("L_max must be at least 2")
    if not 0 < decay <= 1:
        raise InvalidInputError("decay must lie in (0, 1]")
    out = []
    for L in range(2, L_max + 1):
        uni = np.full((L, L), 1.0 / (L * L))
        mats = {
            "balanced": uni,
            "geometric": decay_matrix(L, decay, "column"),
            "geometric_rowmajor": decay_matrix(L, decay, "row"),
            "symmetric": decay_matrix(L, decay, "toeplitz"),
        }
        row = {"L": L}
        for name, M in mats.items():
            row[f"gmean_{name}"] = g_mean(M)
            row[f"hmean_{name}"] = h_mean(M)
        out.append({k: row[k] for k in FIGURE_COLUMNS})
    return out


# ----------------------------------------------------------------- smoothing

def smax(values, eta: float) -> float:
    """Boltzmann-weighted average ``sum y_i e^{eta y_i} / sum e^{eta y_i}``."""
    y = np.asarray(values, dtype=np.float64).ravel()
    if y.size == 0 or eta <= 0:
        raise InvalidInputError("smax needs nonempty values and eta > 0")
    return float(softmax(eta * y) @ y)


def smax_gradient(values, eta: float) -> np.ndarray:
    y = np.asarray(values, dtype=np.float64).ravel()
    if y.size == 0 or eta <= 0:
        raise InvalidInputError("smax needs nonempty values and eta > 0")
    s = softmax(eta * y)
    return s * (1 + eta * (y - s @ y))


def lse(values, eta: float) -> float:
    """``(1/eta) log sum e^{eta y_i}``: a convex upper smoothing of max."""
    y = np.asarray(values, dtype=np.float64).ravel()
    return float(logsumexp(eta * y) / eta)


def lse_gradient(values, eta: float) -> np.ndarray:
    y = np.asarray(values, dtype=np.float64).ravel()
    return softmax(eta * y)


def smax_lipschitz(m: int) -> float:
    """Bound on the l1 norm of the smax gradient over ``m`` inputs, for any eta."""
    return 1 + 2 * (m - 1) / math.e


def _abs_slope_bound() -> float:
    # sup over u of |d/du (u tanh u)| = |tanh u + u sech^2 u|
    u = np.linspace(0, 5, 200001)
    return float(np.max(np.tanh(u) + u / np.cosh(u) ** 2)) + 1e-9


ABS_SLOPE = _abs_slope_bound()


@dataclass(frozen=True)
class Smoother:
    """Smoothed max and absolute value sharing one ``eta``."""

    eta: float
    kind: str = "smax"

    def __post_init__(self):
        if self.eta <= 0:
            raise InvalidInputError("eta must be positive")
        if self.kind not in SMOOTHINGS:
            raise InvalidInputError(f"smoothing must be one of {SMOOTHINGS}")

    def max(self, y) -> float:
        return smax(y, self.eta) if self.kind == "smax" else lse(y, self.eta)

    def max_grad(self, y) -> np.ndarray:
        return smax_gradient(y, self.eta) if self.kind == "smax" else lse_gradient(y, self.eta)

    def abs(self, v: float) -> float:
        return self.max((v, -v))

    def abs_grad(self, v: float) -> float:
        g = self.max_grad((v, -v))
        return float(g[0] - g[1])

    @property
    def convex(self) -> bool:
        return self.kind == "lse"

    def max_lipschitz(self, m: int) -> float:
        return smax_lipschitz(m) if self.kind == "smax" else 1.0

    @property
    def abs_slope(self) -> float:
        return ABS_SLOPE if self.kind == "smax" else 1.0


# ----------------------------------------------------------------- fairness

@dataclass(frozen=True)
class ThresholdClassifier:
    """Predicts 1 when ``sign * x[feature] >= sign * threshold``."""

    threshold: float
    feature: int = 0
    sign: int = 1

    def predict(self, features) -> np.ndarray:
        x = np.asarray(features, dtype=np.float64)
        x = x[:, self.feature] if x.ndim == 2 else x
        return (self.sign * x >= self.sign * self.threshold).astype(np.int64)


def threshold_grid(lo: float, hi: float, m: int, feature: int = 0) -> list[ThresholdClassifier]:
    return [ThresholdClassifier(float(t), feature) for t in np.linspace(lo, hi, m)]


@dataclass
class RateVector:
    fp: np.ndarray
    tp: np.ndarray
    fn: np.ndarray
    counts: np.ndarray  # counts[a-1, y] for y in {0, 1}
    degenerate: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=bool))

    def as_loss_vector(self) -> np.ndarray:
        return loss_vector(np.concatenate([self.fp, self.tp, self.fn]))

    @property
    def any_degenerate(self) -> bool:
        return bool(self.degenerate.any())


def _binary_labels(d: Dataset) -> np.ndarray:
    y = d.labels
    if not np.all((y == 0) | (y == 1)):
        raise InvalidInputError("equalized odds needs binary labels in {0, 1}")
    return y


def equalized_odds_rates(classifier, d: Dataset, n_groups: int | None = None) -> RateVector:
    """Per-group false-positive, true-positive and false-negative rates.

    A group with no negatives (or no positives) gets rate 0 in the affected
    block and is flagged in ``degenerate``.
    """
    y = _binary_labels(d)
    A = n_groups or d.n_groups
    pred = np.asarray(classifier.predict(d.features))
    a = d.sensitive.astype(np.int64) - 1
    counts = np.zeros((A, 2))
    np.add.at(counts, (a, y), 1)
    hits = np.zeros((A, 2))
    np.add.at(hits, (a, y), pred)
    empty = counts == 0
    with np.errstate(invalid="ignore", divide="ignore"):
        rate = np.where(empty, 0.0, hits / np.where(empty, 1, counts))
    fp, tp = rate[:, 0], rate[:, 1]
    fn = np.where(empty[:, 1], 0.0, 1 - tp)
    return RateVector(fp, tp, fn, counts, empty)


class EqualizedOddsLoss(GroupLossFunction):
    """Loss vector ``(FP_1..FP_A, TP_1..TP_A, FN_1..FN_A)``.

    The rates are conditional frequencies, not row averages, so this loss is
    not itemized.
    """

    def __init__(self, n_groups: int):
        self.n_groups = n_groups
        self.k = 3 * n_groups

    def rates(self, classifier, d: Dataset) -> RateVector:
        return equalized_odds_rates(classifier, d, self.n_groups)

    def loss(self, classifier, d: Dataset) -> np.ndarray:
        return self.rates(classifier, d).as_loss_vector()


def equalized_odds_loss(classifier, d: Dataset) -> np.ndarray:
    return EqualizedOddsLoss(d.n_groups).loss(classifier, d)


def _eo_pairs(n_groups: int):
    return list(combinations(range(n_groups), 2))


def equalized_odds_constraint(alpha: float, eta: float, n_groups: int, smoothing: str = "smax") -> ScalarObjective:
    """Smoothed equalized-odds gap minus ``alpha``.

    For each unordered pair of groups the larger of the smoothed FP and TP
    gaps is taken (smoothed), then a smoothed max runs over the pairs.
    """
    if not 0 < alpha <= 1:
        raise InvalidInputError("alpha must lie in (0, 1]")
    sm = Smoother(eta, smoothing)
    A = n_groups
    pairs = _eo_pairs(A)
    k = 3 * A

    if not pairs:
        return ScalarObjective(lambda x: -alpha, lambda x: np.zeros(k), 0.0, 0.0, True, True, k, lambda x: -alpha, "equalized_odds")

    def parts(x):
        fp, tp = x[:A], x[A:2 * A]
        gaps = np.array([(fp[i] - fp[j], tp[i] - tp[j]) for i, j in pairs])
        absd = np.array([[sm.abs(v) for v in row] for row in gaps])
        inner = np.array([sm.max(row) for row in absd])
        return gaps, absd, inner

    def value(x):
        return sm.max(parts(x)[2]) - alpha

    def gradient(x):
        gaps, absd, inner = parts(x)
        outer = sm.max_grad(inner)
        grad = np.zeros(k)
        for p, (i, j) in enumerate(pairs):
            pg = sm.max_grad(absd[p])
            for block, slot in ((0, 0), (A, 1)):
                c = outer[p] * pg[slot] * sm.abs_grad(gaps[p, slot])
                grad[block + i] += c
                grad[block + j] -= c
        return grad

    def exact(x):
        fp, tp = x[:A], x[A:2 * A]
        return max(max(abs(fp[i] - fp[j]), abs(tp[i] - tp[j])) for i, j in pairs) - alpha

    lip = 2 * sm.abs_slope * sm.max_lipschitz(2) * sm.max_lipschitz(len(pairs))
    return ScalarObjective(value, gradient, lip, None, False, sm.convex, k, exact, "equalized_odds")


def classification_error_objective(n_groups: int) -> ScalarObjective:
    """Sum of the FP and FN blocks of the equalized-odds layout."""
    A = n_groups
    mask = np.zeros(3 * A)
    mask[:A] = 1
    mask[2 * A:] = 1
    return ScalarObjective(
        value=lambda x: float(mask @ x),
        gradient=lambda x: mask.copy(),
        lipschitz=math.sqrt(2 * A),
        smoothness=0.0,
        monotone_nondecreasing=True,
        dim=3 * A,
        name="classification_error",
    )


def demographic_parity_constraint(M, c_hat, eta: float = 50.0, smoothing: str = "smax") -> ScalarObjective:
    """Smoothed ``max_i (M l - c_hat)_i``."""
    M = np.atleast_2d(np.asarray(M, dtype=np.float64))
    c = np.asarray(c_hat, dtype=np.float64).ravel()
    if c.size != M.shape[0]:
        raise InvalidInputError(f"c_hat has {c.size} entries but M has {M.shape[0]} rows")
    sm = Smoother(eta, smoothing)
    k = M.shape[1]

    def check(x):
        if x.shape != (k,):
            raise InvalidInputError(f"expected a {k}-vector")
        return x

    row_norm = float(np.linalg.norm(M, axis=1).max())
    return ScalarObjective(
        value=lambda x: sm.max(M @ check(x) - c),
        gradient=lambda x: M.T @ sm.max_grad(M @ check(x) - c),
        lipschitz=sm.max_lipschitz(M.shape[0]) * row_norm,
        smoothness=eta * float(np.linalg.norm(M, 2)) ** 2 if smoothing == "lse" else None,
        convex=sm.convex,
        dim=k,
        exact=lambda x: float(np.max(M @ x - c)),
        name="demographic_parity",
    )


# ----------------------------------------------------------------- inequality

def gini_index(l) -> float:
    """``sum_ij |l_i - l_j| / (2 K sum l)`` with ``K = len(l)``."""
    v = np.asarray(l, dtype=np.float64).ravel()
    if np.any(v < 0):
        raise InvalidInputError("Gini index needs nonnegative values")
    total = v.sum()
    if total <= 0:
        raise UndefinedRateError("Gini index is undefined when every value is 0")
    return float(np.abs(v[:, None] - v[None, :]).sum() / (2 * v.size * total))


def gini_constraint(theta: float, k: int, eta: float = 50.0, smoothing: str = "smax") -> ScalarObjective:
    """``sum_ij |l_i - l_j| - 2 K theta sum l`` with a smoothed absolute value."""
    if not 0 <= theta <= 1:
        raise InvalidInputError("theta must lie in [0, 1]")
    sm = Smoother(eta, smoothing)
    iu, ju = np.triu_indices(k, 1)

    def value(x):
        d = x[iu] - x[ju]
        return 2 * sum(sm.abs(v) for v in d) - 2 * k * theta * float(x.sum())

    def gradient(x):
        grad = np.full(k, -2 * k * theta)
        for i, j in zip(iu, ju):
            s = 2 * sm.abs_grad(x[i] - x[j])
            grad[i] += s
            grad[j] -= s
        return grad

    def exact(x):
        return float(np.abs(x[:, None] - x[None, :]).sum()) - 2 * k * theta * float(x.sum())

    lip = math.sqrt(k) * (2 * (k - 1) * sm.abs_slope + 2 * k * theta)
    return ScalarObjective(value, gradient, lip, None, False, sm.convex, k, exact, "gini")


def negative_total_objective(k: int) -> ScalarObjective:
    """``f(l) = -sum l``."""
    return ScalarObjective(
        value=lambda x: -float(np.sum(x)),
        gradient=lambda x: -np.ones(k),
        lipschitz=math.sqrt(k),
        smoothness=0.0,
        dim=k,
        name="negative_total",
    )


# ----------------------------------------------------------------- group losses

class WeightedLSLoss(ItemizedGroupLoss):
    """Per-group squared residual ``1[d(x) = k] (<c, x> - y)^2 / 4``.

    Residuals are at most 2 in magnitude, so dividing by 4 keeps every entry
    in ``[0, 1]``; with that factor each per-row gradient has norm at most 1.
    """

    scale = 0.25
    item_lipschitz = 1.0
    convex = True

    def __init__(self, k: int, group_map: Callable[[np.ndarray], np.ndarray] | None = None):
        self.k = k
        self.group_map = group_map

    def _parts(self, c, d: Dataset):
        c = np.asarray(c, dtype=np.float64)
        if c.shape != (d.dim,):
            raise InvalidInputError(f"decision has {c.size} parameters, features have {d.dim}")
        if np.any(np.linalg.norm(d.features, axis=1) > 1 + 1e-12):
            raise InvalidInputError("features must lie in the unit ball")
        groups = d.sensitive if self.group_map is None else np.asarray(self.group_map(d.features))
        if groups.min() < 1 or groups.max() > self.k:
            raise InvalidInputError(f"group ids must lie in 1..{self.k}")
        onehot = np.zeros((d.n, self.k))
        onehot[np.arange(d.n), groups.astype(np.int64) - 1] = 1.0
        return d.features @ c - d.labels, onehot

    def itemized(self, c, d: Dataset) -> np.ndarray:
        r, onehot = self._parts(c, d)
        return np.minimum(1.0, onehot * (self.scale * r * r)[:, None])

    def itemized_gradient(self, c, d: Dataset) -> np.ndarray:
        """Per-row gradients with respect to ``c``, shape ``(n, k, P)``."""
        r, onehot = self._parts(c, d)
        return onehot[:, :, None] * (2 * self.scale * r[:, None] * d.features)[:, None, :]


def weighted_ls_itemized_loss(k: int, group_map=None) -> WeightedLSLoss:
    return WeightedLSLoss(k, group_map)


class GroupErrorLoss(ItemizedGroupLoss):
    """``loss_k = share of rows in group k that the classifier gets wrong``."""

    convex = False

    def __init__(self, n_groups: int):
        self.k = n_groups

    def itemized(self, classifier, d: Dataset) -> np.ndarray:
        wrong = (np.asarray(classifier.predict(d.features)) != d.labels).astype(np.float64)
        out = np.zeros((d.n, self.k))
        out[np.arange(d.n), d.sensitive.astype(np.int64) - 1] = wrong
        return out


class LookupTableLoss(ItemizedGroupLoss):
    """Itemized loss read from ``table[c, :, a-1, y]``.

    Decisions are integer candidate ids. A row's loss depends only on its
    (group, label) cell, so loss tables come from cell frequencies.
    """

    convex = False

    def __init__(self, table):
        t = np.asarray(table, dtype=np.float64)
        if t.ndim != 4:
            raise InvalidInputError("table must have shape (candidates, K, groups, labels)")
        if t.min() < 0 or t.max() > 1:
            raise InvalidInputError("table entries must lie in [0, 1]")
        self.table = t
        self.k = t.shape[1]
        self._freq = (None, None)

    def _cells(self, d: Dataset) -> np.ndarray:
        _, _, A, Y = self.table.shape
        a = d.sensitive.astype(np.int64, copy=False) - 1
        y = d.labels.astype(np.int64, copy=False)
        if a.max() >= A or y.min() < 0 or y.max() >= Y:
            raise InvalidInputError("row falls outside the table's (group, label) cells")
        return a * Y + y

    def itemized(self, c, d: Dataset) -> np.ndarray:
        _, K, A, Y = self.table.shape
        return self.table[int(c)].reshape(K, A * Y)[:, self._cells(d)].T

    def cell_frequencies(self, d: Dataset) -> np.ndarray:
        # datasets are immutable, so the last one seen is worth remembering
        if self._freq[0] is d:
            return self._freq[1]
        _, _, A, Y = self.table.shape
        freq = np.bincount(self._cells(d), minlength=A * Y) / d.n
        self._freq = (d, freq)
        return freq

    def loss(self, c, d: Dataset) -> np.ndarray:
        return self.loss_table([c], d)[0]

    def loss_table(self, decisions, d: Dataset) -> np.ndarray:
        m, K, A, Y = self.table.shape
        idx = np.asarray(decisions, dtype=np.int64)
        out = self.table[idx].reshape(idx.size, K, A * Y) @ self.cell_frequencies(d)
        return np.clip(out, 0.0, 1.0)


# ----------------------------------------------------------------- lower bound

@dataclass(frozen=True)
class LowerBoundInstance:
    """``f(c) = -(1/n) sum <c, x_i>`` and ``g(c) = f(c) + ||sum x_i|| / n``."""

    points: np.ndarray
    c_star: np.ndarray
    sum_norm: float

    @property
    def n(self) -> int:
        return self.points.shape[0]

    def loss(self, c) -> np.ndarray:
        """Coordinatewise group loss ``(1/n) sum_i c_k x_ik``."""
        return np.asarray(c, dtype=np.float64) * self.points.mean(axis=0)

    def f(self, c) -> float:
        return -float(self.points.sum(axis=0) @ np.asarray(c, dtype=np.float64)) / self.n

    def g(self, c) -> float:
        return self.f(c) + self.sum_norm / self.n

    def excess(self, c) -> float:
        return self.f(c) - self.f(self.c_star)

    def excess_closed_form(self, c) -> float:
        """``(||sum x|| / 2n) ||c - c*||^2``; equals :meth:`excess` on the unit sphere."""
        diff = np.asarray(c, dtype=np.float64) - self.c_star
        return self.sum_norm / (2 * self.n) * float(diff @ diff)


def lower_bound_instance(points) -> LowerBoundInstance:
    x = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if np.any(np.linalg.norm(x, axis=1) > 1 + 1e-12):
        raise InvalidInputError("points must lie in the unit ball")
    s = x.sum(axis=0)
    norm = float(np.linalg.norm(s))
    if norm == 0:
        raise DegenerateInstanceError("the points sum to zero, so no direction is optimal")
    return LowerBoundInstance(x, s / norm, norm)


class ShiftedLinearLoss(ItemizedGroupLoss):
    """``loss_k = (1 + c_k * mean_i x_ik) / 2`` for decisions in the unit ball.

    Itemized as ``(1 + c_k x_ik) / 2`` so every entry stays in ``[0, 1]``;
    the lower-bound objective is affine in this vector.
    """

    convex = True
    item_lipschitz = 0.5

    def __init__(self, k: int):
        self.k = k

    def itemized(self, c, d: Dataset) -> np.ndarray:
        c = np.asarray(c, dtype=np.float64)
        if c.shape != (self.k,) or d.dim != self.k:
            raise InvalidInputError(f"decision and features must both have {self.k} entries")
        return 0.5 * (1 + d.features * c)

    def itemized_gradient(self, c, d: Dataset) -> np.ndarray:
        out = np.zeros((d.n, self.k, self.k))
        idx = np.arange(self.k)
        out[:, idx, idx] = 0.5 * d.features
        return out


def lower_bound_objectives(instance: LowerBoundInstance) -> tuple[ScalarObjective, ScalarObjective]:
    """``f`` and ``g`` of the lower-bound instance as functions of the shifted loss.

    With ``l = (1 + c * mean x) / 2`` one has ``f = K - 2 sum l``.
    """
    K = instance.points.shape[1]
    shift = instance.sum_norm / instance.n

    def make(offset, name):
        return ScalarObjective(
            value=lambda x: K - 2 * float(np.sum(x)) + offset,
            gradient=lambda x: np.full(K, -2.0),
            lipschitz=2 * math.sqrt(K),
            smoothness=0.0,
            dim=K,
            name=name,
        )

    return make(0.0, "lower_bound_f"), make(shift, "lower_bound_g")


class ParityLoss(GroupLossFunction):
    """``(overall error, P(pred = 1 | group 1), ..., P(pred = 1 | group A))``."""

    def __init__(self, n_groups: int):
        self.n_groups = n_groups
        self.k = n_groups + 1

    def loss(self, classifier, d: Dataset) -> np.ndarray:
        pred = np.asarray(classifier.predict(d.features))
        a = d.sensitive.astype(np.int64) - 1
        counts = np.bincount(a, minlength=self.n_groups)
        pos = np.bincount(a, weights=pred, minlength=self.n_groups)
        rates = np.where(counts > 0, pos / np.maximum(counts, 1), 0.0)
        return loss_vector(np.concatenate([[np.mean(pred != d.labels)], rates]))


def parity_moments(n_groups: int, slack: float) -> tuple[np.ndarray, np.ndarray]:
    """Rows ``rate_a - rate_b`` for every ordered pair, each bounded by ``slack``."""
    rows = []
    for i in range(n_groups):
        for j in range(n_groups):
            if i != j:
                r = np.zeros(n_groups + 1)
                r[1 + i], r[1 + j] = 1.0, -1.0
                rows.append(r)
    M = np.array(rows).reshape(-1, n_groups + 1)
    return M, np.full(M.shape[0], slack)
