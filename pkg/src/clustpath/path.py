"""Event-driven tracking of the exact solution path.

Starting from least squares at ``eta = 0``, :class:`PathTracker` repeatedly takes
the earliest pending event, moves every coefficient linearly up to it and
updates the grouped state:

* fuse / split: block update of the inverse Gram, new slopes and a full
  recomputation of event times, O(n p);
* switch (neighbour reorder or OSCAR sign flip): only the handful of event
  times that depend on the swapped positions are recomputed.

On exactly tied event times fuses win over switches, and switches over splits.
"""

from __future__ import annotations

import enum
import logging
import time
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from . import classo_events, oscar_events
from .core_model import (
    Dataset,
    GradientTable,
    GroupStructure,
    Model,
    PathConfig,
    PathState,
    coefficient_gradients,
    compute_offsets,
    expand,
    init_state,
    inverse_drift,
    inverse_update,
    refresh_state,
    set_values,
    sort_within_groups,
)
from .errors import DegeneracyError, InputError, NumericalError, StateCorruptionError

logger = logging.getLogger(__name__)


class EventKind(str, enum.Enum):
    FUSE = "fuse"
    SPLIT = "split"
    SPLIT_ZERO_NEG = "split_zero_neg"
    SPLIT_ZERO_POS = "split_zero_pos"
    SWITCH = "switch"
    SWITCH_SIGN = "switch_sign"

    @property
    def family(self) -> str:
        if self is EventKind.FUSE:
            return "fuse"
        if self in (EventKind.SWITCH, EventKind.SWITCH_SIGN):
            return "switch"
        return "split"


@dataclass(frozen=True)
class EventRecord:
    """``group`` is relative to the zero group; ``k`` follows the 1-based position convention."""

    kind: EventKind
    group: int | None = None
    k: int | None = None
    delta: float = 0.0

    def detail(self) -> str:
        parts = []
        if self.group is not None:
            parts.append(f"g={self.group}")
        if self.k is not None:
            parts.append(f"k={self.k}")
        return ",".join(parts)


@dataclass
class Breakpoint:
    eta: float
    beta: np.ndarray
    labels: np.ndarray
    events: tuple = ()

    @property
    def gnnz(self) -> int:
        return int(np.unique(self.labels[self.labels != 0]).size)


@dataclass
class DriverStats:
    T_fuse: int = 0
    T_split: int = 0
    T_switch: int = 0
    wall_time: dict = field(default_factory=lambda: defaultdict(list))
    max_jump: float = 0.0
    inverse_drift: list = field(default_factory=list)
    refreshes: int = 0

    @property
    def iterations(self) -> int:
        return self.T_fuse + self.T_split + self.T_switch

    def mean_wall_time(self) -> dict:
        return {k: float(np.mean(v)) for k, v in self.wall_time.items() if v}


@dataclass
class SolutionPath:
    model: Model
    lambda1_bar: float
    lambda2_bar: float
    breakpoints: list
    terminal_eta: float
    reason: str
    stats: DriverStats
    final_slope_norm: float = 0.0
    slope_tol: float = 1e-12

    @property
    def truncated(self) -> bool:
        return self.reason == "max_iters"

    @property
    def near_degenerate(self) -> bool:
        return self.reason == "slope" and self.final_slope_norm > self.slope_tol / 10.0

    @property
    def p(self) -> int:
        return self.breakpoints[0].beta.size

    @property
    def etas(self) -> np.ndarray:
        return np.array([bp.eta for bp in self.breakpoints])

    @property
    def betas(self) -> np.ndarray:
        return np.vstack([bp.beta for bp in self.breakpoints])

    def solution_at(self, eta):
        return solution_at(self, eta)

    def labels_at(self, eta: float) -> np.ndarray:
        etas = self.etas
        i = int(np.searchsorted(etas, eta, side="right")) - 1
        return self.breakpoints[max(i, 0)].labels


def solution_at(path: SolutionPath, eta):
    """Coefficients at ``eta`` by linear interpolation between breakpoints.

    Scalar ``eta`` gives a (p,) vector, an array of etas gives (len, p).
    Beyond the last breakpoint the terminal vector is returned.
    """
    e = np.asarray(eta, dtype=float)
    if np.any(e < 0) or not np.all(np.isfinite(e)):
        raise InputError("eta must be finite and nonnegative")
    etas = path.etas
    betas = path.betas
    flat = np.atleast_1d(e)
    out = np.empty((flat.size, betas.shape[1]))
    i = np.searchsorted(etas, flat, side="right") - 1
    beyond = i >= etas.size - 1
    out[beyond] = betas[-1]
    inside = ~beyond
    if np.any(inside):
        j = i[inside]
        w = ((flat[inside] - etas[j]) / (etas[j + 1] - etas[j]))[:, None]
        out[inside] = (1.0 - w) * betas[j] + w * betas[j + 1]
    return out[0] if e.ndim == 0 else out


class PathTracker:
    """Mutable state of one path run; see :func:`run_path`."""

    def __init__(self, dataset: Dataset, config: PathConfig):
        self.dataset = dataset
        self.config = config
        self.model = config.model
        self.events_mod = classo_events if self.model is Model.CLASSO else oscar_events
        self.p = dataset.p
        self.stats = DriverStats()
        self.state, self.structure, self.beta0 = init_state(dataset, config)
        self.state.eta = 0.0
        self.eta_ref = 0.0
        p1 = self.p + 1
        self._F, self._S, self._L, self._U = 0, p1, 2 * p1, 3 * p1
        self.ev = np.full(4 * p1, np.inf)
        self._rebuild_tables()

    # -- bookkeeping ------------------------------------------------------

    @property
    def eta(self) -> float:
        return self.state.eta

    def beta(self, eta: float | None = None) -> np.ndarray:
        eta = self.state.eta if eta is None else eta
        vals = self.state.values + (eta - self.eta_ref) * self.state.slopes
        return expand(self.structure, vals)

    def slope_norm(self) -> float:
        return float(np.abs(self.state.slopes).max(initial=0.0))

    def _rebuild_tables(self):
        st = self.structure
        grad, dgrad = coefficient_gradients(self.dataset, self.state, st)
        if self.model is Model.OSCAR:
            # zero-group signs are free; keep s_i x_i^T(X beta - y) <= 0 there
            zm = st.members(0)
            noise = 1e-12 * (1.0 + float(np.abs(grad).max(initial=0.0)))
            key = np.where(np.abs(grad[zm]) > noise, grad[zm], dgrad[zm])
            flip = zm[key > 0]
            st.signs[flip] *= -1.0
            grad[flip] *= -1.0
            dgrad[flip] *= -1.0
        sort_within_groups(st, grad, dgrad)
        if self.model is Model.OSCAR and np.any(grad[st.members(0)] > noise):
            raise StateCorruptionError("zero-group order is not ascending in |gradient|")
        self.table = GradientTable.from_coefficients(self.state.eta, st, grad, dgrad)
        self.eta_ref = self.state.eta
        self._reindex()

    def _reindex(self):
        st = self.structure
        self.gpos = st.group_of_position()
        p1 = self.p + 1
        em = self.events_mod
        self.lower_ok = np.zeros(p1, dtype=bool)
        self.lower_ok[em.lower_boundaries(st)] = True
        self.upper_ok = np.zeros(p1, dtype=bool)
        self.upper_ok[em.upper_boundaries(st)] = True
        self.switch_ok = np.zeros(p1, dtype=bool)
        self.switch_ok[classo_events.switch_boundaries(st)] = True
        self._recompute_all()

    def _value_tol(self):
        return 1e-9 * (1.0 + float(np.abs(self.state.values).max(initial=0.0)))

    def _recompute_all(self):
        ev = self.ev
        ev[:] = np.inf
        st, tb, cfg, eta = self.structure, self.table, self.config, self.state.eta
        em = self.events_mod
        G = st.n_groups
        if G > 1:
            ev[self._F : self._F + G - 1] = classo_events.fuse_etas(
                self.state.values, self.state.slopes, self.eta_ref, eta, self._value_tol())
        b = np.flatnonzero(self.switch_ok)
        ev[self._S + b] = classo_events.switch_etas(tb, st, cfg, eta, b)
        if self.model is Model.OSCAR:
            ev[self._S] = oscar_events.flip_eta(tb, st, cfg, eta)
        b = np.flatnonzero(self.lower_ok)
        ev[self._L + b] = em.lower_split_etas(tb, st, cfg, eta, b)
        b = np.flatnonzero(self.upper_ok)
        ev[self._U + b] = em.upper_split_etas(tb, st, cfg, eta, b)

    def _refresh_entries(self, b: int):
        """Event times touched by a change of the gradient entries at positions b-1, b."""
        st, tb, cfg, eta = self.structure, self.table, self.config, self.state.eta
        em = self.events_mod
        ev = self.ev
        for s in (b - 1, b, b + 1):
            if 1 <= s < self.p and self.switch_ok[s]:
                ev[self._S + s] = classo_events.switch_etas(tb, st, cfg, eta, [s])[0]
        if self.lower_ok[b]:
            ev[self._L + b] = em.lower_split_etas(tb, st, cfg, eta, [b])[0]
        if self.upper_ok[b]:
            ev[self._U + b] = em.upper_split_etas(tb, st, cfg, eta, [b])[0]
        if self.model is Model.OSCAR and b <= 1:
            ev[self._S] = oscar_events.flip_eta(tb, st, cfg, eta)

    # -- event selection --------------------------------------------------

    def next_event(self):
        """Earliest pending ``(eta, EventRecord)`` or ``(inf, None)``."""
        i = int(np.argmin(self.ev))
        t = float(self.ev[i])
        if not np.isfinite(t):
            return np.inf, None
        return t, self._decode(i, t - self.state.eta)

    def _decode(self, i: int, delta: float) -> EventRecord:
        st = self.structure
        p1 = self.p + 1
        fam, b = divmod(i, p1)
        if fam == 0:
            if self._free_crossing(b):
                return EventRecord(EventKind.SWITCH_SIGN, b - st.zero, None, delta)
            return EventRecord(EventKind.FUSE, b - st.zero, None, delta)
        if fam == 1:
            if b == 0:
                return EventRecord(EventKind.SWITCH_SIGN, 0, 0, delta)
            return EventRecord(EventKind.SWITCH, int(self.gpos[b] - st.zero), b, delta)
        if fam == 2:
            g = int(self.gpos[b - 1])
            k = int(b - st.bounds[g])
            if g == st.zero:
                return EventRecord(EventKind.SPLIT_ZERO_NEG, 0, k, delta)
            return EventRecord(EventKind.SPLIT, g - st.zero, k, delta)
        k = int(b - st.bounds[st.zero])
        return EventRecord(EventKind.SPLIT_ZERO_POS, 0, k, delta)

    def _free_crossing(self, g: int) -> bool:
        """Pair ``(g, g+1)`` is a group meeting an empty zero group with no l1 kink."""
        st = self.structure
        return (self.model is Model.CLASSO and self.config.lambda1_bar == 0
                and st.zero in (g, g + 1) and st.sizes[st.zero] == 0)

    # -- transitions ------------------------------------------------------

    def advance(self, eta: float) -> None:
        """Move to ``eta`` inside the current segment (no structural change)."""
        if eta < self.state.eta:
            raise StateCorruptionError(f"cannot move backwards from {self.state.eta} to {eta}")
        self.state.eta = eta

    def apply_event(self, event: EventRecord) -> None:
        kind = event.kind
        st = self.structure
        if kind is EventKind.SWITCH:
            self._switch(int(event.k))
        elif kind is EventKind.SWITCH_SIGN:
            if self.model is Model.OSCAR:
                self._flip()
            else:
                self._cross(int(event.group) + st.zero)
        elif kind is EventKind.FUSE:
            self._fuse(int(event.group) + st.zero)
        elif kind is EventKind.SPLIT:
            g = int(event.group) + st.zero
            self._split(g, int(st.bounds[g] + event.k), upper=False)
        elif kind is EventKind.SPLIT_ZERO_NEG:
            self._split(st.zero, int(st.bounds[st.zero] + event.k), upper=False)
        elif kind is EventKind.SPLIT_ZERO_POS:
            self._split(st.zero, int(st.bounds[st.zero] + event.k), upper=True)
        else:  # pragma: no cover
            raise ValueError(kind)

    def _switch(self, b: int):
        st = self.structure
        if not self.switch_ok[b]:
            raise StateCorruptionError(f"positions {b} and {b + 1} are not in one group")
        st.order[b - 1], st.order[b] = st.order[b], st.order[b - 1]
        self.table.swap(b)
        self._refresh_entries(b)

    def _flip(self):
        st = self.structure
        if self.model is not Model.OSCAR or st.bounds[1] == 0:
            raise StateCorruptionError("sign flip requires a nonempty OSCAR zero group")
        st.signs[st.order[0]] *= -1.0
        self.table.flip(0)
        self._refresh_entries(0)
        self._refresh_entries(1)

    def _cross(self, g: int):
        """Move the empty zero group past the group that reaches zero (lambda1 = 0 only)."""
        st = self.structure
        if not self._free_crossing(g):
            raise StateCorruptionError(f"pair {g} is not a free zero crossing")
        z = st.zero
        other = g if z == g + 1 else g + 1
        b = st.bounds
        if other < z:
            b[z] = b[z - 1]
        else:
            b[z + 1] = b[z + 2]
        st.zero = other
        for arr in (self.state.values, self.state.slopes):
            arr[z], arr[other] = arr[other], arr[z]
        # offsets carry no sign term when lambda1 is zero, so the solve is unchanged
        self._reindex()

    def _fuse(self, g: int):
        st = self.structure
        if not 0 <= g < st.n_groups - 1:
            raise StateCorruptionError(f"no adjacent pair at {g}")
        old_nz = list(st.nonzero)
        removed = [old_nz.index(h) for h in (g, g + 1) if h != st.zero]
        new = st.copy()
        new.bounds = np.delete(st.bounds, g + 1)
        if st.zero in (g, g + 1):
            new.zero = g
        elif st.zero > g + 1:
            new.zero = st.zero - 1
        old_to_new = np.arange(st.n_groups)
        old_to_new[g + 1 :] -= 1
        added_ids = []
        added = np.zeros((self.dataset.n, 0))
        if new.zero != g:
            added = self.state.x_grouped[:, removed].sum(axis=1, keepdims=True)
            added_ids = [g]
        self._restructure(new, removed, old_nz, old_to_new, added, added_ids)

    def _split(self, g: int, b: int, upper: bool):
        st = self.structure
        old_nz = list(st.nonzero)
        new = st.copy()
        new.bounds = np.insert(st.bounds, g + 1, b)
        old_to_new = np.arange(st.n_groups)
        old_to_new[g + 1 :] += 1
        X, s = self.dataset.X, st.signs
        lo_idx = st.order[st.bounds[g] : b]
        hi_idx = st.order[b : st.bounds[g + 1]]
        col = lambda idx: (X[:, idx] @ s[idx])[:, None]  # noqa: E731
        if g != st.zero:
            removed = [old_nz.index(g)]
            added = np.hstack([col(lo_idx), col(hi_idx)])
            added_ids = [g, g + 1]
            new.zero = st.zero + 1 if st.zero > g else st.zero
            check = ("separate", g, g + 1)
        elif upper:
            removed = []
            added = col(hi_idx)
            added_ids = [g + 1]
            check = ("up", g + 1)
        else:
            removed = []
            added = col(lo_idx)
            added_ids = [g]
            new.zero = g + 1
            check = ("down", g)
        self._restructure(new, removed, old_nz, old_to_new, added, added_ids)
        sl = self.state.slopes
        scale = 1e-12 * (1.0 + float(np.abs(sl).max(initial=0.0)))
        if check[0] == "separate":
            ok = sl[check[2]] - sl[check[1]] > scale
        elif check[0] == "up":
            ok = sl[check[1]] > scale
        else:
            ok = sl[check[1]] < -scale
        if not ok:
            raise DegeneracyError(
                f"slopes do not separate after split at eta={self.state.eta:.17g} "
                f"({check}, slopes={sl[list(check[1:])]})"
            )

    def _restructure(self, new: GroupStructure, removed, old_nz, old_to_new, added, added_ids):
        state = self.state
        cfg = self.config
        # previous-segment endpoint, for the continuity diagnostic
        left = self.beta()
        kept = [c for c in range(len(old_nz)) if c not in removed]
        ids = [int(old_to_new[old_nz[c]]) for c in kept] + list(added_ids)
        perm = np.argsort(ids, kind="stable")
        xg = np.hstack([state.x_grouped[:, kept], added])[:, perm]
        state.events_since_refresh += 1
        z = None
        if state.events_since_refresh < cfg.recompute_period:
            try:
                z = inverse_update(state.z_inverse, state.x_grouped, removed, added)
                z = z[np.ix_(perm, perm)]
            except NumericalError:
                logger.debug("block inverse update failed at eta=%g; refactorising", state.eta)
                z = None
        self.structure = new
        if z is None:
            self.state = refresh_state(self.dataset, new, cfg, state.eta, state)
            self.stats.refreshes += 1
        else:
            state.x_grouped = xg
            state.z_inverse = z
            state.offsets = compute_offsets(new, cfg)
            set_values(state, new, self.dataset.y)
        if cfg.track_inverse_drift:
            self.stats.inverse_drift.append(inverse_drift(self.state.z_inverse, self.state.x_grouped))
        self._rebuild_tables()
        jump = float(np.abs(self.beta() - left).max(initial=0.0))
        self.stats.max_jump = max(self.stats.max_jump, jump)

    def force_refresh(self) -> None:
        """Full refactorisation of the inverse Gram (keeps eta and grouping)."""
        self.state = refresh_state(self.dataset, self.structure, self.config, self.state.eta, self.state)
        self.stats.refreshes += 1
        self._rebuild_tables()


def apply_event(tracker: PathTracker, event: EventRecord) -> PathTracker:
    """Apply ``event`` at the tracker's current eta (the step must already be taken)."""
    tracker.apply_event(event)
    return tracker


def run_path(dataset: Dataset, config: PathConfig) -> SolutionPath:
    """Compute the whole path from ``eta = 0`` until the slope vanishes.

    Stops early at ``config.eta_max`` or after the iteration cap (the path is
    then flagged as truncated).
    """
    tr = PathTracker(dataset, config)
    stats = tr.stats
    cap = config.iteration_cap(dataset.p)
    bps = [Breakpoint(0.0, tr.beta0.copy(), tr.structure.labels(), ())]
    pending = []  # indices of breakpoints whose beta is filled in afterwards
    zero_steps = 0
    reason = "slope"
    while True:
        if tr.slope_norm() <= config.slope_tol:
            reason = "slope"
            break
        t0 = time.perf_counter()
        eta, event = tr.next_event()
        if event is None:
            raise StateCorruptionError(
                f"nonzero slope but no pending event at eta={tr.eta:.17g}",
                dump={"eta": tr.eta, "slopes": tr.state.slopes.tolist()},
            )
        if config.eta_max is not None and eta >= config.eta_max:
            bps.append(Breakpoint(config.eta_max, tr.beta(config.eta_max), tr.structure.labels(), ()))
            reason = "eta_max"
            break
        if stats.iterations >= cap:
            reason = "max_iters"
            logger.warning("iteration cap %d reached at eta=%g; path truncated", cap, tr.eta)
            break
        step = eta - tr.eta
        if step <= 1e-14 * max(1.0, tr.eta):
            zero_steps += 1
            if zero_steps > 3 * dataset.p:
                raise DegeneracyError(
                    f"{zero_steps} consecutive zero-length steps at eta={tr.eta:.17g}; "
                    "events are not isolated"
                )
        else:
            zero_steps = 0
        tr.advance(eta)
        family = event.kind.family
        try:
            tr.apply_event(event)
        except StateCorruptionError as exc:
            exc.dump.setdefault("breakpoints", [(bp.eta, bp.events) for bp in bps[-5:]])
            raise
        if family == "fuse":
            stats.T_fuse += 1
        elif family == "split":
            stats.T_split += 1
        else:
            stats.T_switch += 1
        stats.wall_time[family].append(time.perf_counter() - t0)

        if bps[-1].eta == eta:
            prev = bps[-1]
            prev.events = prev.events + (event,)
            if family != "switch" or event.kind is EventKind.SWITCH_SIGN:
                prev.labels = tr.structure.labels()
            if family != "switch":
                prev.beta = tr.beta()
                if len(pending) and pending[-1] == len(bps) - 1:
                    pending.pop()
            continue
        if family == "switch":
            labels = tr.structure.labels() if event.kind is EventKind.SWITCH_SIGN else bps[-1].labels
            bps.append(Breakpoint(eta, None, labels, (event,)))
            pending.append(len(bps) - 1)
        else:
            bps.append(Breakpoint(eta, tr.beta(), tr.structure.labels(), (event,)))

    if pending:
        _fill_switch_betas(bps, pending, tr)
    return SolutionPath(
        model=config.model,
        lambda1_bar=config.lambda1_bar,
        lambda2_bar=config.lambda2_bar,
        breakpoints=bps,
        terminal_eta=bps[-1].eta,
        reason=reason,
        stats=stats,
        final_slope_norm=tr.slope_norm(),
        slope_tol=config.slope_tol,
    )


def _fill_switch_betas(bps, pending, tracker):
    """Switch-only breakpoints lie on a straight segment: interpolate their betas."""
    known = [i for i, bp in enumerate(bps) if bp.beta is not None]
    known_eta = np.array([bps[i].eta for i in known])
    for i in pending:
        j = int(np.searchsorted(known_eta, bps[i].eta)) - 1
        a = bps[known[j]]
        if j + 1 < len(known):
            b = bps[known[j + 1]]
            w = (bps[i].eta - a.eta) / (b.eta - a.eta)
            bps[i].beta = (1.0 - w) * a.beta + w * b.beta
        else:
            bps[i].beta = tracker.beta(bps[i].eta)
