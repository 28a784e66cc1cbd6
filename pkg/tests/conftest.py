import numpy as np
import pytest

from clustpath import Dataset
from clustpath.io import synth_generate


def random_dataset(rng, n, p, scale=1.0):
    X = rng.standard_normal((n, p))
    y = X @ (scale * rng.standard_normal(p)) + rng.standard_normal(n)
    return Dataset(y, X)


def synth_dataset(n, p, seed):
    X, y, _ = synth_generate(n, p, seed)
    return Dataset(y, X)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def step_until(tracker, want, limit=10_000):
    """Advance ``tracker`` event by event until ``want(event)``; returns (eta, event) or None."""
    for _ in range(limit):
        eta, ev = tracker.next_event()
        if ev is None:
            return None
        if want(ev):
            return eta, ev
        tracker.advance(eta)
        tracker.apply_event(ev)
    return None


def partition_signature(beta, model, tol=1e-11):
    """Hashable description of the grouping implied by ``beta``."""
    from clustpath.oracle.kkt import structure_from_beta

    c = structure_from_beta(beta, model, tol)
    groups = tuple(frozenset(int(i) for i in g) for g in c.groups if len(g))
    zero = frozenset(int(i) for i in c.groups[c.zero])
    return groups, zero


def oracle_change_point(dataset, cfg, lo, hi, iters=40):
    """Bisect for the eta where the fixed-eta optimum changes grouping between lo and hi."""
    from clustpath.oracle import prox_solve

    def sig(eta):
        b = prox_solve(dataset, cfg.lambda1_bar * eta, cfg.lambda2_bar * eta, cfg.model)
        return partition_signature(b, cfg.model)

    s_lo = sig(lo)
    assert sig(hi) != s_lo
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if sig(mid) == s_lo:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
