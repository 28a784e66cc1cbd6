"""OSCAR: certificates and event times over absolute-value ordered, signed groups.

The path order keeps each group sorted by descending ``s_i x_i^T (X beta - y)``.
Inside the zero group ``s_i = -sign(x_i^T (X beta - y))``, so that order is
ascending ``|x_i^T (X beta - y)|``: the zero-group certificate reads directly off
the path order.
"""

from __future__ import annotations

import numpy as np

from .classo_events import (
    SIGMA_RTOL,
    Certificate,
    Side,
    _check_sorted,
    _default_tol,
    _scale_tol,
    check_nonzero_group,
    crossing_eta,
    fuse_etas,
    switch_boundaries,
    switch_etas,
)
from .core_model import GradientTable, GroupStructure, PathConfig, PathState
from .errors import InputError

__all__ = [
    "check_zero_group_oscar",
    "check_nonzero_group_oscar",
    "oscar_offsets",
    "fuse_times_oscar",
    "split_times_oscar",
    "switch_times_oscar",
]


def check_zero_group_oscar(f, lambda1: float, lambda2: float, tol: float | None = None) -> Certificate:
    """``sum_{j>k} |f_j| <= lambda1 (m-k) + lambda2 (m-k)(m+k-1)/2`` for k = 0..m-1.

    ``f`` must be sorted by ascending absolute value.
    """
    f = np.asarray(f, dtype=float)
    if f.ndim != 1 or f.size == 0:
        raise InputError("f must be a nonempty vector")
    a = np.abs(f)
    _check_sorted(a, descending=False)
    tol = _default_tol(f, lambda1, lambda2) if tol is None else tol
    m = f.size
    k = np.arange(m)
    tail = np.cumsum(a[::-1])[::-1]  # tail[k] = sum_{j >= k} (0-based) = sum_{j>k} (1-based)
    slack = tail - (lambda1 * (m - k) + lambda2 * (m - k) * (m + k - 1) / 2.0)
    bad = np.flatnonzero(slack > tol)
    if bad.size:
        return Certificate(False, int(bad[0]), Side.UPPER)
    return Certificate(True)


def check_nonzero_group_oscar(f, lambda2: float, tol: float | None = None) -> Certificate:
    """Nonzero OSCAR group: the clustered-Lasso condition with pair weight ``lambda2 / 2``."""
    return check_nonzero_group(f, lambda2 / 2.0, tol=tol)


def oscar_offsets(structure: GroupStructure, lambda1_bar: float, lambda2_bar: float) -> np.ndarray:
    """``b_g = -lambda1_bar p_g - lambda2_bar p_g (q_g + (p_g - 1)/2)`` for nonzero groups."""
    nz = structure.nonzero
    p_g = structure.sizes[nz].astype(float)
    q_g = structure.prefix[nz]
    return -lambda1_bar * p_g - lambda2_bar * p_g * (q_g + (p_g - 1) / 2.0)


def lower_split_etas(table: GradientTable, structure: GroupStructure, config: PathConfig,
                     eta_now: float, b) -> np.ndarray:
    """Nonzero group split: the first ``k`` members move to a smaller absolute value."""
    b = np.asarray(b, dtype=np.int64)
    if b.size == 0:
        return np.zeros(0)
    g = structure.group_of_position()[b - 1]
    q = structure.bounds[g]
    k = b - q
    lin = config.lambda1_bar * k + config.lambda2_bar * k * (q + (k - 1) / 2.0)
    P = table.csg[b] - table.csg[q]
    dP = table.csdg[b] - table.csdg[q]
    floor = SIGMA_RTOL * (np.abs(dP) + np.abs(lin)) + 1e-300
    tol = _scale_tol(table, config, eta_now, structure.p)
    return crossing_eta(P + table.eta * lin, dP + lin, table.eta, eta_now, floor, tol)


def upper_split_etas(table: GradientTable, structure: GroupStructure, config: PathConfig,
                     eta_now: float, b) -> np.ndarray:
    """Zero-group release: members after boundary ``b = k`` (k = 0..m-1) leave zero."""
    b = np.asarray(b, dtype=np.int64)
    if b.size == 0:
        return np.zeros(0)
    m = structure.bounds[1]
    k = b
    lin = config.lambda1_bar * (m - k) + config.lambda2_bar * (m - k) * (m + k - 1) / 2.0
    T = table.csg[m] - table.csg[b]
    dT = table.csdg[m] - table.csdg[b]
    floor = SIGMA_RTOL * (np.abs(dT) + np.abs(lin)) + 1e-300
    tol = _scale_tol(table, config, eta_now, structure.p)
    return crossing_eta(-(T + table.eta * lin), -(dT + lin), table.eta, eta_now, floor, tol)


def flip_eta(table: GradientTable, structure: GroupStructure, config: PathConfig,
             eta_now: float) -> float:
    """Time at which the first zero-group gradient crosses zero (its sign must flip)."""
    if structure.bounds[1] == 0:
        return np.inf
    floor = SIGMA_RTOL * abs(table.sdg[0]) + 1e-300
    tol = _scale_tol(table, config, eta_now, structure.p)
    return float(crossing_eta(table.sg[:1], table.sdg[:1], table.eta, eta_now, floor, tol)[0])


def lower_boundaries(structure: GroupStructure) -> np.ndarray:
    bounds = structure.bounds
    out = [np.arange(bounds[g] + 1, bounds[g + 1]) for g in range(1, structure.n_groups)]
    return np.concatenate(out).astype(np.int64) if out else np.zeros(0, dtype=np.int64)


def upper_boundaries(structure: GroupStructure) -> np.ndarray:
    return np.arange(0, structure.bounds[1], dtype=np.int64)


def fuse_times_oscar(state: PathState, structure: GroupStructure) -> dict:
    t = fuse_etas(state.values, state.slopes, state.eta, state.eta)
    return {int(g): float(x - state.eta) for g, x in enumerate(t)}


def split_times_oscar(table: GradientTable, state: PathState, structure: GroupStructure,
                      config: PathConfig, g: int) -> dict:
    """``{k: step}``. For ``g = 0`` the keys are k = 0..p_0-1 (zero-group releases)."""
    if not 0 <= g < structure.n_groups:
        raise InputError(f"no group {g}")
    lo, hi = structure.bounds[g], structure.bounds[g + 1]
    if g == 0:
        t = upper_split_etas(table, structure, config, state.eta, np.arange(lo, hi))
        return {int(k): float(x - state.eta) for k, x in enumerate(t)}
    t = lower_split_etas(table, structure, config, state.eta, np.arange(lo + 1, hi))
    out = {int(k): float(x - state.eta) for k, x in enumerate(t, start=1)}
    out[int(hi - lo)] = np.inf
    return out


def switch_times_oscar(table: GradientTable, state: PathState, structure: GroupStructure,
                       config: PathConfig) -> dict:
    """Pair switches keyed by 1-based position k; key 0 is the sign flip of ``o(1)``."""
    b = switch_boundaries(structure)
    t = switch_etas(table, structure, config, state.eta, b)
    out = {int(k): float(x - state.eta) for k, x in zip(b, t)}
    if structure.bounds[1] > 0:
        out[0] = flip_eta(table, structure, config, state.eta) - state.eta
    return out
