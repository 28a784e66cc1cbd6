"""Fixed-eta optimality from a candidate grouping, and exhaustive search for tiny p.

A candidate fixes which coefficients share a value, the order of those values
and which group sits at zero; the objective is then smooth in the group values,
so a single linear solve gives the only possible optimum with that grouping.
It is accepted when the values respect the claimed order and every group admits
valid subgradients (checked with the max-flow networks).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from ..core_model import Dataset, Model
from ..errors import InputError, StateCorruptionError
from . import flow


@dataclass
class Candidate:
    """``groups`` in increasing value (clustered Lasso) or absolute value (OSCAR).

    ``zero`` indexes the zero group inside ``groups`` (it may be empty).
    ``signs`` holds per-coefficient signs; only OSCAR uses them.
    """

    groups: list
    zero: int
    signs: np.ndarray

    def key(self):
        return (tuple(tuple(sorted(map(int, g))) for g in self.groups), self.zero,
                tuple(self.signs.tolist()))


def _counts(cand: Candidate):
    sizes = np.array([len(g) for g in cand.groups])
    before = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    after = sizes.sum() - before - sizes
    return sizes, before, after


def solve_candidate(dataset: Dataset, cand: Candidate, lambda1: float, lambda2: float,
                    model: Model) -> np.ndarray | None:
    """Minimiser of the objective restricted to the candidate's grouping (None if singular)."""
    X, y = dataset.X, dataset.y
    p = dataset.p
    sizes, before, after = _counts(cand)
    nz = [g for g in range(len(cand.groups)) if g != cand.zero]
    beta = np.zeros(p)
    if not nz:
        return beta
    cols = np.empty((X.shape[0], len(nz)))
    rhs = np.empty(len(nz))
    for c, g in enumerate(nz):
        idx = np.asarray(cand.groups[g], dtype=int)
        s = cand.signs[idx] if model is Model.OSCAR else np.ones(idx.size)
        cols[:, c] = X[:, idx] @ s
        if model is Model.CLASSO:
            sgn = -1.0 if g < cand.zero else 1.0
            pen = lambda1 * sgn + lambda2 * (before[g] - after[g])
        else:
            pen = lambda1 + lambda2 * (before[g] + (sizes[g] - 1) / 2.0)
        rhs[c] = cols[:, c] @ y - sizes[g] * pen
    gram = cols.T @ cols
    try:
        v = np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(v)):
        return None
    for c, g in enumerate(nz):
        idx = np.asarray(cand.groups[g], dtype=int)
        s = cand.signs[idx] if model is Model.OSCAR else 1.0
        beta[idx] = v[c] * s
    return beta


def ordering_holds(beta, cand: Candidate, model: Model) -> bool:
    vals = []
    for g, idx in enumerate(cand.groups):
        if len(idx) == 0:
            continue
        idx = np.asarray(idx, dtype=int)
        v = beta[idx[0]] if model is Model.CLASSO else beta[idx[0]] * cand.signs[idx[0]]
        if g == cand.zero:
            v = 0.0
        elif model is Model.CLASSO and (v < 0) != (g < cand.zero):
            return False
        elif v == 0.0 or (model is Model.OSCAR and v < 0):
            return False
        vals.append(v)
    return bool(np.all(np.diff(vals) > 0))


def group_f(dataset: Dataset, beta, cand: Candidate, lambda1: float, lambda2: float,
            model: Model):
    """Per-group residual subgradient targets ``f`` (what the within-group terms must cancel)."""
    grad = dataset.X.T @ (dataset.X @ beta - dataset.y)
    sizes, before, after = _counts(cand)
    out = []
    for g, idx in enumerate(cand.groups):
        idx = np.asarray(idx, dtype=int)
        if idx.size == 0:
            out.append(np.zeros(0))
            continue
        if model is Model.CLASSO:
            f = grad[idx] + lambda2 * (before[g] - after[g])
            if g != cand.zero:
                f = f + lambda1 * (-1.0 if g < cand.zero else 1.0)
        elif g == cand.zero:
            f = grad[idx]
        else:
            f = cand.signs[idx] * grad[idx] + lambda1 + lambda2 * (before[g] + (sizes[g] - 1) / 2.0)
        out.append(f)
    return out


def flow_certify(dataset: Dataset, beta, cand: Candidate, lambda1: float, lambda2: float,
                 model: Model) -> list:
    """Flow-network verdict per group (True = valid subgradients exist)."""
    res = []
    for g, f in enumerate(group_f(dataset, beta, cand, lambda1, lambda2, model)):
        if f.size == 0:
            res.append(True)
        elif model is Model.CLASSO:
            if g == cand.zero:
                res.append(flow.classo_zero_flow_holds(f, lambda1, lambda2))
            else:
                res.append(flow.classo_nonzero_flow_holds(f, lambda2))
        elif g == cand.zero:
            res.append(flow.oscar_zero_flow_holds(f, lambda1, lambda2))
        else:
            res.append(flow.oscar_nonzero_flow_holds(f, lambda2))
    return res


def _chain(idx, key, tol):
    """Split ``idx`` (sorted by ``key``) into runs whose consecutive gaps are <= tol."""
    if idx.size == 0:
        return []
    cuts = np.flatnonzero(np.diff(key[idx]) > tol) + 1
    return [list(b) for b in np.split(idx, cuts)]


def structure_from_beta(beta, model: Model, tol: float) -> Candidate:
    """Grouping implied by ``beta``: near-equal values (or absolute values) fuse."""
    beta = np.asarray(beta, dtype=float)
    zero_mask = np.abs(beta) <= tol
    signs = np.where(beta < 0, -1.0, 1.0)
    if model is Model.CLASSO:
        neg = np.flatnonzero(~zero_mask & (beta < 0))
        neg = neg[np.argsort(beta[neg], kind="stable")]
        pos = np.flatnonzero(~zero_mask & (beta > 0))
        pos = pos[np.argsort(beta[pos], kind="stable")]
        lower = _chain(neg, beta, tol)
        groups = lower + [list(np.flatnonzero(zero_mask))] + _chain(pos, beta, tol)
        return Candidate(groups, len(lower), np.ones(beta.size))
    a = np.abs(beta)
    pos = np.flatnonzero(~zero_mask)
    pos = pos[np.argsort(a[pos], kind="stable")]
    groups = [list(np.flatnonzero(zero_mask))] + _chain(pos, a, tol)
    return Candidate(groups, 0, signs)


def verify(dataset: Dataset, cand: Candidate, lambda1: float, lambda2: float, model: Model):
    """Solve the candidate and return beta if it is the optimum, else None."""
    beta = solve_candidate(dataset, cand, lambda1, lambda2, model)
    if beta is None or not ordering_holds(beta, cand, model):
        return None
    if all(flow_certify(dataset, beta, cand, lambda1, lambda2, model)):
        return beta
    return None


def _ordered_partitions(items):
    items = list(items)
    if not items:
        yield []
        return
    n = len(items)
    # every ordered partition = a surjection onto 0..B-1
    for blocks in range(1, n + 1):
        for labels in itertools.product(range(blocks), repeat=n):
            if len(set(labels)) != blocks:
                continue
            yield [[items[i] for i in range(n) if labels[i] == b] for b in range(blocks)]


def _candidates(p: int, model: Model):
    if model is Model.CLASSO:
        ones = np.ones(p)
        for part in _ordered_partitions(range(p)):
            B = len(part)
            for z in range(B):  # one block sits at zero
                yield Candidate(part, z, ones)
            for gap in range(B + 1):  # or the zero group is empty
                yield Candidate(part[:gap] + [[]] + part[gap:], gap, ones)
        return
    for zsize in range(p + 1):
        for zero in itertools.combinations(range(p), zsize):
            rest = [i for i in range(p) if i not in zero]
            for part in _ordered_partitions(rest):
                for sg in itertools.product((1.0, -1.0), repeat=len(rest)):
                    signs = np.ones(p)
                    signs[rest] = sg
                    yield Candidate([list(zero)] + part, 0, signs)


def enumerate_kkt(dataset: Dataset, lambda1: float, lambda2: float, model: Model | str) -> np.ndarray:
    """Exact optimum for ``p <= 5`` by trying every grouping."""
    model = Model(model)
    if dataset.p > 5:
        raise InputError("enumerate_kkt is limited to p <= 5")
    if lambda1 < 0 or lambda2 < 0:
        raise InputError("penalties must be nonnegative")
    for cand in _candidates(dataset.p, model):
        beta = verify(dataset, cand, lambda1, lambda2, model)
        if beta is not None:
            return beta
    raise StateCorruptionError("no candidate grouping satisfies the optimality conditions")
