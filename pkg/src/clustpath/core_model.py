"""Problem data, grouped path state and the linear algebra shared by both penalties.

Along a ray ``[lambda1, lambda2] = eta * [lambda1_bar, lambda2_bar]`` the solution
is piecewise linear. Between events, coefficients are organised into *fused
groups* (equal values for the clustered Lasso, equal absolute values for OSCAR),
and the nonzero grouped coefficients solve a small linear system whose inverse
is cached and updated in blocks when groups fuse or split.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import InputError, NumericalError, RankDeficientError

RANK_RTOL = 1e-10
DEFAULT_RIDGE = 1e-6


class Model(str, enum.Enum):
    CLASSO = "classo"
    OSCAR = "oscar"


def _readonly(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dataset:
    """Response ``y`` (n,) and design ``X`` (n, p) with full column rank."""

    y: np.ndarray
    X: np.ndarray
    augmented: bool = False
    epsilon: float = 0.0

    def __post_init__(self):
        y = _readonly(self.y)
        X = _readonly(self.X)
        if X.ndim != 2:
            raise InputError(f"X must be two-dimensional, got shape {X.shape}")
        if y.ndim != 1 or y.shape[0] != X.shape[0]:
            raise InputError(f"y has shape {y.shape}, expected ({X.shape[0]},)")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise InputError("X and y must be finite")
        n, p = X.shape
        if p == 0:
            raise InputError("X has no columns")
        if n < p:
            raise RankDeficientError(
                f"n={n} < p={p}: the design cannot have full column rank; "
                "apply a ridge augmentation"
            )
        sv = np.linalg.svd(X, compute_uv=False)
        if sv[-1] <= RANK_RTOL * sv[0]:
            raise RankDeficientError(
                f"design is numerically rank deficient (sigma_min/sigma_max = "
                f"{sv[-1] / sv[0] if sv[0] > 0 else 0.0:.3g}); apply a ridge augmentation"
            )
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]


def ridge_augment(y, X, epsilon: float = DEFAULT_RIDGE) -> Dataset:
    """Append ``sqrt(epsilon) * I`` rows to ``X`` and zeros to ``y``.

    With the halved squared loss this adds ``0.5 * epsilon * ||beta||^2`` to the
    objective and makes the design full column rank for any ``X``.
    """
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise InputError("X and y must be finite")
    if not epsilon > 0:
        raise InputError(f"ridge weight must be positive, got {epsilon}")
    if X.ndim != 2:
        raise InputError(f"X must be two-dimensional, got shape {X.shape}")
    p = X.shape[1]
    X_aug = np.vstack([X, np.sqrt(epsilon) * np.eye(p)])
    y_aug = np.concatenate([y, np.zeros(p)])
    return Dataset(y_aug, X_aug, augmented=True, epsilon=float(epsilon))


@dataclass(frozen=True)
class PathConfig:
    lambda1_bar: float = 0.0
    lambda2_bar: float = 1.0
    model: Model = Model.CLASSO
    eta_max: float | None = None
    max_iters: int | None = None  # None -> 50 * p**2
    tie_tol: float = 1e-10
    slope_tol: float = 1e-12
    recompute_period: int = 512
    track_inverse_drift: bool = False

    def __post_init__(self):
        object.__setattr__(self, "model", Model(self.model))
        if self.lambda1_bar < 0 or not np.isfinite(self.lambda1_bar):
            raise InputError("lambda1_bar must be a nonnegative finite number")
        if not self.lambda2_bar > 0 or not np.isfinite(self.lambda2_bar):
            raise InputError("lambda2_bar must be positive (lambda2_bar = 0 is the plain Lasso)")
        if self.eta_max is not None and not self.eta_max > 0:
            raise InputError("eta_max must be positive")
        if self.max_iters is not None and self.max_iters < 1:
            raise InputError("max_iters must be a positive integer")
        if self.tie_tol <= 0 or self.slope_tol <= 0 or self.recompute_period < 1:
            raise InputError("tolerances and recompute_period must be positive")

    def iteration_cap(self, p: int) -> int:
        return self.max_iters if self.max_iters is not None else 50 * p * p


# ---------------------------------------------------------------------------
# objective


def pairwise_penalty(beta, model: Model) -> float:
    """Sum over pairs j < k of ``|b_j - b_k|`` (classo) or ``max(|b_j|, |b_k|)`` (OSCAR).

    Uses the rank-weighted form of the sorted vector, O(p log p).
    """
    beta = np.asarray(beta, dtype=float)
    p = beta.size
    ranks = np.arange(p, dtype=float)
    if Model(model) is Model.CLASSO:
        return float(np.sort(beta) @ (2.0 * ranks - (p - 1)))
    return float(np.sort(np.abs(beta)) @ ranks)


def objective_value(dataset: Dataset, beta, lambda1: float, lambda2: float, model: Model) -> float:
    beta = np.asarray(beta, dtype=float)
    if not np.all(np.isfinite(beta)):
        raise InputError("beta must be finite")
    r = dataset.y - dataset.X @ beta
    return float(
        0.5 * (r @ r) + lambda1 * np.abs(beta).sum() + lambda2 * pairwise_penalty(beta, model)
    )


# ---------------------------------------------------------------------------
# group structure


@dataclass
class GroupStructure:
    """Ordered fused groups.

    Group ``g`` (a list index) holds the coefficients ``order[bounds[g]:bounds[g+1]]``.
    Groups are listed by increasing value (clustered Lasso) or absolute value
    (OSCAR); ``zero`` is the list index of the zero group, which may be empty.
    For OSCAR ``zero`` is always 0. ``signs`` is all ones for the clustered Lasso.
    """

    model: Model
    order: np.ndarray
    bounds: np.ndarray
    zero: int
    signs: np.ndarray

    def copy(self) -> "GroupStructure":
        return GroupStructure(
            self.model, self.order.copy(), self.bounds.copy(), self.zero, self.signs.copy()
        )

    @property
    def p(self) -> int:
        return self.order.size

    @property
    def n_groups(self) -> int:
        return self.bounds.size - 1

    @property
    def sizes(self) -> np.ndarray:
        return np.diff(self.bounds)

    @property
    def prefix(self) -> np.ndarray:
        """``q_g``: number of coefficients listed before group ``g``."""
        return self.bounds[:-1]

    @property
    def rank_offsets(self) -> np.ndarray:
        """``r_g = q_g - (p - q_{g+1})`` (smaller minus larger counts)."""
        return self.bounds[:-1] - (self.p - self.bounds[1:])

    @property
    def nonzero(self) -> np.ndarray:
        g = np.arange(self.n_groups)
        return g[g != self.zero]

    def group_signs(self) -> np.ndarray:
        """Sign of each group's value: -1 below the zero group, +1 above, 0 for it."""
        return np.sign(np.arange(self.n_groups) - self.zero).astype(float)

    def group_of_position(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_groups), self.sizes)

    def labels(self) -> np.ndarray:
        """Per-coefficient group label relative to the zero group (0 = zero group)."""
        lab = np.empty(self.p, dtype=np.int64)
        lab[self.order] = self.group_of_position() - self.zero
        return lab

    def members(self, g: int) -> np.ndarray:
        return self.order[self.bounds[g] : self.bounds[g + 1]]


def grouped_columns(X, structure: GroupStructure, groups=None) -> np.ndarray:
    """Columns ``sum_{j in G_g} s_j x_j`` for the requested groups (default: nonzero ones)."""
    if groups is None:
        groups = structure.nonzero
    out = np.empty((X.shape[0], len(groups)))
    for c, g in enumerate(groups):
        idx = structure.members(g)
        out[:, c] = X[:, idx] @ structure.signs[idx]
    return out


def compute_offsets(structure: GroupStructure, config: PathConfig) -> np.ndarray:
    """Per-unit-eta linear term of the reduced problem, for nonzero groups."""
    nz = structure.nonzero
    sizes = structure.sizes[nz].astype(float)
    if structure.model is Model.CLASSO:
        sgn = structure.group_signs()[nz]
        r = structure.rank_offsets[nz]
        return -config.lambda1_bar * sizes * sgn - config.lambda2_bar * sizes * r
    q = structure.prefix[nz]
    return -config.lambda1_bar * sizes - config.lambda2_bar * sizes * (q + (sizes - 1) / 2.0)


def expand(structure: GroupStructure, values) -> np.ndarray:
    """Full coefficient vector from per-group values."""
    beta = np.empty(structure.p)
    beta[structure.order] = np.asarray(values)[structure.group_of_position()]
    beta *= structure.signs
    if structure.model is Model.OSCAR:
        beta[structure.members(structure.zero)] = 0.0
    return beta


# ---------------------------------------------------------------------------
# grouped linear algebra


def full_inverse(x_grouped) -> np.ndarray:
    """``[(X^G_{-0})^T X^G_{-0}]^{-1}`` by Cholesky."""
    k = x_grouped.shape[1]
    if k == 0:
        return np.zeros((0, 0))
    gram = x_grouped.T @ x_grouped
    try:
        c = linalg.cho_factor(gram)
    except linalg.LinAlgError as exc:
        raise NumericalError("grouped Gram matrix is not positive definite") from exc
    z = linalg.cho_solve(c, np.eye(k))
    return 0.5 * (z + z.T)


def inverse_update(z, x_grouped, removed, added) -> np.ndarray:
    """Replace a few columns of the grouped design and update the inverse Gram in blocks.

    Parameters
    ----------
    z : (k, k) current inverse of ``x_grouped.T @ x_grouped``.
    x_grouped : (n, k) current grouped design.
    removed : column indices (at most two) dropped from ``x_grouped``.
    added : (n, m) new columns, ``m <= 2``.

    Returns
    -------
    The inverse for the design ``[x_grouped[:, kept], added]`` with the kept
    columns in their original relative order followed by the added ones.
    Costs O(n * k); raises NumericalError when the new block is singular.
    """
    removed = np.asarray(sorted(removed), dtype=int)
    added = np.asarray(added, dtype=float).reshape(x_grouped.shape[0], -1)
    k = z.shape[0]
    keep = np.setdiff1d(np.arange(k), removed)
    if removed.size:
        z12 = z[np.ix_(keep, removed)]
        z22 = z[np.ix_(removed, removed)]
        try:
            u = z[np.ix_(keep, keep)] - z12 @ np.linalg.solve(z22, z12.T)
        except np.linalg.LinAlgError as exc:
            raise NumericalError("removed block of the inverse is singular") from exc
    else:
        u = z.copy()
    m = added.shape[1]
    if m == 0:
        return 0.5 * (u + u.T)
    v = x_grouped[:, keep].T @ added
    uv = u @ v
    s = added.T @ added - v.T @ uv
    s = 0.5 * (s + s.T)
    scale = max(float(np.abs(added.T @ added).max()), 1e-300)
    if np.linalg.cond(s) > 1e12 or np.abs(s).max() <= 1e-13 * scale:
        raise NumericalError("new columns are (numerically) dependent on the kept ones")
    w = np.linalg.inv(s)
    uvw = uv @ w
    out = np.empty((keep.size + m, keep.size + m))
    out[: keep.size, : keep.size] = u + uvw @ uv.T
    out[: keep.size, keep.size :] = -uvw
    out[keep.size :, : keep.size] = -uvw.T
    out[keep.size :, keep.size :] = w
    return 0.5 * (out + out.T)


def inverse_drift(z, x_grouped) -> float:
    """``|| Z (X^T X) - I ||_inf`` (max absolute entry)."""
    k = z.shape[0]
    if k == 0:
        return 0.0
    return float(np.abs(z @ (x_grouped.T @ x_grouped) - np.eye(k)).max())


@dataclass
class PathState:
    """Grouped state at ``eta``; ``values``/``slopes`` are per group (zero group pinned at 0)."""

    eta: float
    values: np.ndarray
    slopes: np.ndarray
    x_grouped: np.ndarray
    z_inverse: np.ndarray
    offsets: np.ndarray
    events_since_refresh: int = 0
    drift_log: list = field(default_factory=list)


def grouped_solve(state: PathState, eta: float, y) -> np.ndarray:
    """Nonzero grouped coefficients ``Z (eta * offsets + X_G^T y)`` at ``eta``."""
    return state.z_inverse @ (eta * state.offsets + state.x_grouped.T @ y)


def refresh_state(dataset: Dataset, structure: GroupStructure, config: PathConfig, eta: float,
                  state: PathState | None = None) -> PathState:
    """Rebuild every grouped quantity from scratch (full refactorisation)."""
    xg = grouped_columns(dataset.X, structure)
    z = full_inverse(xg)
    offsets = compute_offsets(structure, config)
    new = PathState(eta, np.zeros(structure.n_groups), np.zeros(structure.n_groups), xg, z, offsets)
    if state is not None:
        new.drift_log = state.drift_log
    set_values(new, structure, dataset.y)
    return new


def set_values(state: PathState, structure: GroupStructure, y) -> None:
    nz = structure.nonzero
    state.values = np.zeros(structure.n_groups)
    state.slopes = np.zeros(structure.n_groups)
    if nz.size:
        state.values[nz] = grouped_solve(state, state.eta, y)
        state.slopes[nz] = state.z_inverse @ state.offsets


def coefficient_gradients(dataset: Dataset, state: PathState, structure: GroupStructure):
    """Per-coefficient signed loss gradient ``s_i x_i^T (X beta - y)`` and its eta-derivative."""
    nz = structure.nonzero
    fit = state.x_grouped @ state.values[nz] - dataset.y
    dfit = state.x_grouped @ state.slopes[nz]
    X = dataset.X
    s = structure.signs
    return s * (X.T @ fit), s * (X.T @ dfit)


def sort_within_groups(structure: GroupStructure, grad, dgrad, tol: float = 0.0) -> None:
    """Order each group by descending signed gradient, ties broken by its derivative.

    ``grad``/``dgrad`` are indexed by coefficient. Gradient differences below
    ``tol`` count as ties.
    """
    gpos = structure.group_of_position()
    g = grad[structure.order]
    d = dgrad[structure.order]
    if tol > 0:
        g = np.round(g / tol) * tol
    perm = np.lexsort((-d, -g, gpos))
    structure.order = structure.order[perm]


# ---------------------------------------------------------------------------
# initial state


def least_squares(dataset: Dataset) -> np.ndarray:
    beta, *_ = np.linalg.lstsq(dataset.X, dataset.y, rcond=None)
    return beta


def _chain_groups(values, tol):
    """Split sorted ``values`` into runs whose consecutive gaps are <= tol."""
    if values.size == 0:
        return []
    cuts = np.flatnonzero(np.diff(values) > tol) + 1
    return np.split(np.arange(values.size), cuts)


def init_state(dataset: Dataset, config: PathConfig):
    """Least-squares start at ``eta = 0`` with the grouping it implies.

    Returns ``(state, structure, beta0)``.
    """
    p = dataset.p
    ols = least_squares(dataset)
    tol = config.tie_tol
    model = config.model
    signs = np.ones(p)
    if model is Model.CLASSO:
        key = ols
    else:
        signs = np.where(ols < 0, -1.0, 1.0)
        key = np.abs(ols)
    zero_mask = np.abs(ols) <= tol
    zero_idx = np.flatnonzero(zero_mask)
    blocks = []  # list of coefficient-index arrays in list order
    if model is Model.CLASSO:
        neg = np.flatnonzero(~zero_mask & (ols < 0))
        neg = neg[np.argsort(key[neg], kind="stable")]
        blocks.extend(neg[run] for run in _chain_groups(key[neg], tol))
    zero = len(blocks)
    blocks.append(zero_idx)
    pos = np.flatnonzero(~zero_mask & (key > 0))
    pos = pos[np.argsort(key[pos], kind="stable")]
    blocks.extend(pos[run] for run in _chain_groups(key[pos], tol))

    order = np.concatenate(blocks).astype(np.int64)
    bounds = np.concatenate([[0], np.cumsum([b.size for b in blocks])]).astype(np.int64)
    structure = GroupStructure(model, order, bounds, zero, signs)
    state = refresh_state(dataset, structure, config, 0.0)

    grad, dgrad = coefficient_gradients(dataset, state, structure)
    scale = 1.0 + np.abs(dataset.X.T @ dataset.y).max()
    noise = 1e-11 * scale
    if model is Model.OSCAR:
        zmem = structure.members(structure.zero)
        # s_i = -sign(grad_i), falling back on the direction grad_i moves in
        raw = grad[zmem] * signs[zmem]
        draw = dgrad[zmem] * signs[zmem]
        use = np.where(np.abs(raw) > noise, raw, draw)
        structure.signs[zmem] = np.where(use > 0, -1.0, 1.0)
        grad, dgrad = coefficient_gradients(dataset, state, structure)
    sort_within_groups(structure, grad, dgrad, tol=noise)
    beta0 = expand(structure, state.values)
    return state, structure, beta0


@dataclass
class GradientTable:
    """Signed loss gradients laid out in path order, affine in eta within a segment.

    ``sg[j]`` is ``s_i x_i^T (X beta - y)`` at ``eta`` for ``i = order[j]`` and
    ``sdg[j]`` its eta-derivative. ``csg``/``csdg`` are cumulative sums with a
    leading zero, so prefix sums over any block cost O(1).
    """

    eta: float
    sg: np.ndarray
    sdg: np.ndarray
    csg: np.ndarray
    csdg: np.ndarray

    @classmethod
    def build(cls, dataset: Dataset, state: PathState, structure: GroupStructure) -> "GradientTable":
        grad, dgrad = coefficient_gradients(dataset, state, structure)
        return cls.from_coefficients(state.eta, structure, grad, dgrad)

    @classmethod
    def from_coefficients(cls, eta, structure, grad, dgrad) -> "GradientTable":
        sg = grad[structure.order]
        sdg = dgrad[structure.order]
        zero = np.zeros(1)
        return cls(eta, sg, sdg, np.concatenate([zero, np.cumsum(sg)]),
                   np.concatenate([zero, np.cumsum(sdg)]))

    def at(self, eta: float) -> np.ndarray:
        return self.sg + (eta - self.eta) * self.sdg

    def swap(self, b: int) -> None:
        """Exchange positions ``b - 1`` and ``b``."""
        i, j = b - 1, b
        self.sg[i], self.sg[j] = self.sg[j], self.sg[i]
        self.sdg[i], self.sdg[j] = self.sdg[j], self.sdg[i]
        self.csg[b] = self.csg[i] + self.sg[i]
        self.csdg[b] = self.csdg[i] + self.sdg[i]

    def flip(self, pos: int) -> None:
        self.csg[pos + 1 :] -= 2.0 * self.sg[pos]
        self.csdg[pos + 1 :] -= 2.0 * self.sdg[pos]
        self.sg[pos] = -self.sg[pos]
        self.sdg[pos] = -self.sdg[pos]
