"""Clustered Lasso: subgradient certificates and event times.

Every within-group optimality condition along a segment has the form
``c(eta) <= 0`` with ``c`` affine in eta, so the time an inequality breaks is
the root of ``c``. Event kernels work on *boundaries*: boundary ``b`` cuts the
path order between positions ``b - 1`` and ``b`` (so a group prefix of size
``k`` ends at boundary ``q_g + k``). Kernels return absolute eta values;
the public ``*_times`` helpers return steps from the state's eta.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .core_model import GradientTable, GroupStructure, PathConfig, PathState
from .errors import InputError, StateCorruptionError

SIGMA_RTOL = 1e-12
CERT_RTOL = 1e-12
CLAMP_RTOL = 1e-9


class Side(str, enum.Enum):
    UPPER = "upper"
    LOWER = "lower"


@dataclass(frozen=True)
class Certificate:
    holds: bool
    violating_k: int | None = None
    side: Side | None = None

    def __bool__(self):
        return self.holds


def _check_sorted(f, descending=True, key=None):
    v = f if key is None else key(f)
    d = np.diff(v)
    slack = 1e-12 * max(1.0, float(np.abs(v).max(initial=0.0)))
    bad = d > slack if descending else d < -slack
    if np.any(bad):
        raise InputError("certificate input is not sorted as required")


def _default_tol(f, lambda1, lambda2):
    m = f.size
    return CERT_RTOL * max(1.0, float(np.abs(f).sum()), lambda1 * m, lambda2 * m * m)


def check_zero_group(f, lambda1: float, lambda2: float, tol: float | None = None) -> Certificate:
    """Subgradients exist for the zero group iff, with ``f`` sorted descending,

    ``sum_{j<=k} f_j <= lambda1 k + lambda2 k (m-k)`` for k = 1..m (upper side) and
    ``sum_{j>k} f_j >= -lambda1 (m-k) - lambda2 k (m-k)`` for k = 0..m-1 (lower side).
    """
    f = np.asarray(f, dtype=float)
    if f.ndim != 1 or f.size == 0:
        raise InputError("f must be a nonempty vector")
    _check_sorted(f)
    tol = _default_tol(f, lambda1, lambda2) if tol is None else tol
    m = f.size
    cs = np.concatenate([[0.0], np.cumsum(f)])
    k = np.arange(m + 1)
    upper = cs[1:] - (lambda1 * k[1:] + lambda2 * k[1:] * (m - k[1:]))  # k = 1..m
    lower = -(cs[m] - cs[:m]) - (lambda1 * (m - k[:m]) + lambda2 * k[:m] * (m - k[:m]))  # k = 0..m-1
    up_bad = np.flatnonzero(upper > tol)
    lo_bad = np.flatnonzero(lower > tol)
    k_up = up_bad[0] + 1 if up_bad.size else None
    k_lo = lo_bad[0] if lo_bad.size else None
    if k_up is None and k_lo is None:
        return Certificate(True)
    if k_lo is None or (k_up is not None and k_up <= k_lo):
        return Certificate(False, int(k_up), Side.UPPER)
    return Certificate(False, int(k_lo), Side.LOWER)


def check_nonzero_group(f, lambda2: float, tol: float | None = None) -> Certificate:
    """Within a nonzero group: ``sum_{j<=k} f_j <= lambda2 k (m-k)`` for k < m and ``sum f = 0``.

    A nonzero total is reported as ``violating_k = m``.
    """
    f = np.asarray(f, dtype=float)
    if f.ndim != 1 or f.size == 0:
        raise InputError("f must be a nonempty vector")
    _check_sorted(f)
    tol = _default_tol(f, 0.0, lambda2) if tol is None else tol
    m = f.size
    cs = np.cumsum(f)
    k = np.arange(1, m)
    bad = np.flatnonzero(cs[:-1] - lambda2 * k * (m - k) > tol)
    if bad.size:
        return Certificate(False, int(bad[0] + 1), Side.UPPER)
    if abs(cs[-1]) > tol:
        return Certificate(False, m, Side.UPPER if cs[-1] > 0 else Side.LOWER)
    return Certificate(True)


# ---------------------------------------------------------------------------
# crossing-time kernel shared by both penalties


def crossing_eta(c_ref, sigma, eta_ref, eta_now, floor, tol):
    """Eta at which ``c_ref + (eta - eta_ref) * sigma`` turns positive.

    ``+inf`` where ``sigma <= floor`` (not heading to a violation). A root just
    behind ``eta_now`` is clamped to ``eta_now`` when the current violation is
    within ``tol``; anything larger means the state is inconsistent.
    """
    c_ref = np.asarray(c_ref, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    out = np.full(c_ref.shape, np.inf)
    live = sigma > floor
    if not np.any(live):
        return out
    t = eta_ref - c_ref[live] / sigma[live]
    behind = t < eta_now
    if np.any(behind):
        c_now = c_ref[live][behind] + sigma[live][behind] * (eta_now - eta_ref)
        tol_b = np.broadcast_to(tol, c_ref.shape)[live][behind]
        if np.any(c_now > tol_b):
            worst = float(np.max(c_now - tol_b))
            raise StateCorruptionError(
                f"optimality condition already violated by {worst:.3g} at eta={eta_now:.17g}",
                dump={"eta": eta_now, "violation": worst},
            )
        t[behind] = eta_now
    out[live] = t
    return out


def fuse_etas(values, slopes, eta_ref, eta_now, tol=0.0):
    """Collision eta for each adjacent pair of groups ``(g, g+1)``."""
    values = np.asarray(values)
    slopes = np.asarray(slopes)
    gap = values[:-1] - values[1:]  # <= 0 while ordered
    closing = slopes[:-1] - slopes[1:]  # > 0 when converging
    floor = SIGMA_RTOL * (np.abs(slopes[:-1]) + np.abs(slopes[1:]))
    return crossing_eta(gap, closing, eta_ref, eta_now, floor, tol)


def _scale_tol(table, config, eta, p):
    base = 1.0 + float(np.abs(table.at(eta)).sum())
    return CLAMP_RTOL * (base + eta * (config.lambda1_bar * p + config.lambda2_bar * p * p))


def lower_split_etas(table: GradientTable, structure: GroupStructure, config: PathConfig,
                     eta_now: float, b) -> np.ndarray:
    """Prefix-split times at boundaries ``b``.

    For a nonzero group the first ``k`` coefficients break away towards smaller
    values; for the zero group they leave zero in the negative direction.
    ``b`` must satisfy ``q_g < b < q_{g+1}`` (nonzero g) or ``q_0 < b <= q_1``.
    """
    b = np.asarray(b, dtype=np.int64)
    if b.size == 0:
        return np.zeros(0)
    gpos = structure.group_of_position()
    g = gpos[b - 1]
    q = structure.bounds[g]
    m = structure.sizes[g]
    k = b - q
    r = structure.rank_offsets[g]
    sgn = structure.group_signs()[g]
    sgn = np.where(g == structure.zero, -1.0, sgn)
    lin = config.lambda1_bar * k * sgn + config.lambda2_bar * k * (r - (m - k))
    P = table.csg[b] - table.csg[q]
    dP = table.csdg[b] - table.csdg[q]
    c_ref = P + table.eta * lin
    sigma = dP + lin
    floor = SIGMA_RTOL * (np.abs(dP) + np.abs(lin)) + 1e-300
    tol = _scale_tol(table, config, eta_now, structure.p)
    return crossing_eta(c_ref, sigma, table.eta, eta_now, floor, tol)


def upper_split_etas(table: GradientTable, structure: GroupStructure, config: PathConfig,
                     eta_now: float, b) -> np.ndarray:
    """Zero-group release times in the positive direction.

    At boundary ``b = q_0 + k`` (k = 0..m-1) the coefficients after the cut leave
    zero upwards.
    """
    b = np.asarray(b, dtype=np.int64)
    if b.size == 0:
        return np.zeros(0)
    z = structure.zero
    q0, q1 = structure.bounds[z], structure.bounds[z + 1]
    m = q1 - q0
    k = b - q0
    r0 = structure.rank_offsets[z]
    lin = config.lambda1_bar * (m - k) + config.lambda2_bar * (m - k) * (r0 + k)
    T = table.csg[q1] - table.csg[b]
    dT = table.csdg[q1] - table.csdg[b]
    # condition T + eta*lin >= 0, negated into <= 0 form
    c_ref = -(T + table.eta * lin)
    sigma = -(dT + lin)
    floor = SIGMA_RTOL * (np.abs(dT) + np.abs(lin)) + 1e-300
    tol = _scale_tol(table, config, eta_now, structure.p)
    return crossing_eta(c_ref, sigma, table.eta, eta_now, floor, tol)


def switch_etas(table: GradientTable, structure: GroupStructure, config: PathConfig,
                eta_now: float, b) -> np.ndarray:
    """Times at which neighbours ``b - 1`` and ``b`` of one group swap gradient order."""
    b = np.asarray(b, dtype=np.int64)
    if b.size == 0:
        return np.zeros(0)
    d = table.sg[b - 1] - table.sg[b]
    dd = table.sdg[b - 1] - table.sdg[b]
    floor = SIGMA_RTOL * (np.abs(table.sdg[b - 1]) + np.abs(table.sdg[b])) + 1e-300
    tol = _scale_tol(table, config, eta_now, structure.p)
    return crossing_eta(-d, -dd, table.eta, eta_now, floor, tol)


def lower_boundaries(structure: GroupStructure) -> np.ndarray:
    bounds = structure.bounds
    out = []
    for g in range(structure.n_groups):
        lo, hi = bounds[g], bounds[g + 1]
        if g == structure.zero:
            out.append(np.arange(lo + 1, hi + 1))
        else:
            out.append(np.arange(lo + 1, hi))
    return np.concatenate(out).astype(np.int64) if out else np.zeros(0, dtype=np.int64)


def upper_boundaries(structure: GroupStructure) -> np.ndarray:
    z = structure.zero
    return np.arange(structure.bounds[z], structure.bounds[z + 1], dtype=np.int64)


def switch_boundaries(structure: GroupStructure) -> np.ndarray:
    gpos = structure.group_of_position()
    b = np.arange(1, structure.p, dtype=np.int64)
    return b[gpos[b - 1] == gpos[b]]


# ---------------------------------------------------------------------------
# public per-family maps (steps measured from state.eta)


def fuse_times(state: PathState, structure: GroupStructure) -> dict:
    """``{g: step}`` for each adjacent pair ``(G_g, G_{g+1})``, g relative to the zero group."""
    t = fuse_etas(state.values, state.slopes, state.eta, state.eta)
    return {int(g - structure.zero): float(x - state.eta) for g, x in enumerate(t)}


def split_times_nonzero(table: GradientTable, state: PathState, structure: GroupStructure,
                        config: PathConfig, g: int) -> dict:
    """``{k: step}`` for k = 1..p_g for the nonzero group with relative label ``g``."""
    gi = g + structure.zero
    if g == 0 or not 0 <= gi < structure.n_groups:
        raise InputError(f"{g} is not a nonzero group label")
    lo, hi = structure.bounds[gi], structure.bounds[gi + 1]
    t = lower_split_etas(table, structure, config, state.eta, np.arange(lo + 1, hi))
    out = {int(k): float(x - state.eta) for k, x in enumerate(t, start=1)}
    out[int(hi - lo)] = np.inf
    return out


def split_times_zero(table: GradientTable, state: PathState, structure: GroupStructure,
                     config: PathConfig) -> dict:
    """Zero-group releases: key ``-k`` (first k leave downwards), key ``k`` (last m-k leave upwards)."""
    z = structure.zero
    lo, hi = structure.bounds[z], structure.bounds[z + 1]
    if hi == lo:
        return {}
    neg = lower_split_etas(table, structure, config, state.eta, np.arange(lo + 1, hi + 1))
    pos = upper_split_etas(table, structure, config, state.eta, np.arange(lo, hi))
    out = {-int(k): float(x - state.eta) for k, x in enumerate(neg, start=1)}
    out.update({int(k): float(x - state.eta) for k, x in enumerate(pos)})
    return out


def switch_times(table: GradientTable, state: PathState, structure: GroupStructure,
                 config: PathConfig) -> dict:
    """``{k: step}`` for within-group neighbours at 1-based positions k, k+1."""
    b = switch_boundaries(structure)
    t = switch_etas(table, structure, config, state.eta, b)
    return {int(k): float(x - state.eta) for k, x in zip(b, t)}
