import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from clustpath import InputError, Model, PathConfig, PathTracker, ridge_augment, run_path
from clustpath.classo_events import (
    Side,
    check_nonzero_group,
    check_zero_group,
    fuse_etas,
    fuse_times,
    split_times_nonzero,
    split_times_zero,
    switch_etas,
    switch_times,
)
from clustpath.core_model import GradientTable, expand, init_state
from clustpath.oracle.flow import classo_nonzero_flow_holds, classo_zero_flow_holds
from clustpath.path import EventKind

from conftest import oracle_change_point, random_dataset, step_until


def naive_zero_slack(f, l1, l2):
    """Largest violation of the zero-group inequalities by direct O(m^2) sums."""
    m = f.size
    up = max(sum(f[:k]) - (l1 * k + l2 * k * (m - k)) for k in range(1, m + 1))
    lo = max(-sum(f[k:]) - (l1 * (m - k) + l2 * k * (m - k)) for k in range(m))
    return up, lo


# certificates


def test_zero_group_examples():
    assert check_zero_group([0.5], 1.0, 0.3).holds
    c = check_zero_group([1.5], 1.0, 0.0)
    assert not c.holds and c.violating_k == 1 and c.side is Side.UPPER
    assert check_zero_group([1.2, -1.2], 0.5, 1.0).holds
    c = check_zero_group([-1.5], 1.0, 0.0)
    assert not c and c.side is Side.LOWER and c.violating_k == 0


def test_nonzero_group_examples():
    assert check_nonzero_group([0.8, -0.8], 1.0).holds
    c = check_nonzero_group([1.2, -1.2], 1.0)
    assert not c.holds and c.violating_k == 1
    assert check_nonzero_group([0.5, 0.5], 1.0).violating_k == 2  # nonzero total


def test_unsorted_rejected():
    with pytest.raises(InputError):
        check_zero_group([0.1, 0.5], 1.0, 1.0)
    with pytest.raises(InputError):
        check_nonzero_group([-1.0, 1.0], 1.0)


def test_flow_examples():
    assert classo_zero_flow_holds([1.2, -1.2], 0.5, 1.0)
    assert classo_zero_flow_holds([0.5], 1.0, 0.0)
    assert not classo_zero_flow_holds([1.5], 1.0, 0.0)


@st.composite
def zero_group_inputs(draw):
    m = draw(st.integers(1, 8))
    f = np.sort(np.array(draw(st.lists(st.floats(-6, 6), min_size=m, max_size=m))))[::-1]
    l1 = draw(st.floats(0, 3))
    l2 = draw(st.floats(0, 2))
    return f, l1, l2


@settings(max_examples=300, deadline=None)
@given(zero_group_inputs())
def test_zero_certificate_matches_flow(args):
    f, l1, l2 = args
    up, lo = naive_zero_slack(f, l1, l2)
    assume(abs(up) > 1e-9 and abs(lo) > 1e-9)
    assert check_zero_group(f, l1, l2).holds == classo_zero_flow_holds(f, l1, l2)


@settings(max_examples=300, deadline=None)
@given(zero_group_inputs())
def test_prefix_sums_match_naive(args):
    f, l1, l2 = args
    up, lo = naive_zero_slack(f, l1, l2)
    assume(abs(up) > 1e-9 and abs(lo) > 1e-9)
    assert check_zero_group(f, l1, l2, tol=0.0).holds == (up <= 0 and lo <= 0)


@settings(max_examples=300, deadline=None)
@given(zero_group_inputs())
def test_nonzero_is_zero_with_no_l1(args):
    f, _, l2 = args
    f = np.sort(f - f.mean())[::-1]
    m = f.size
    slack = [np.sum(f[:k]) - l2 * k * (m - k) for k in range(1, m)]
    assume(all(abs(s) > 1e-9 for s in slack))
    a = check_nonzero_group(f, l2).holds
    assert a == check_zero_group(f, 0.0, l2).holds
    assert a == classo_nonzero_flow_holds(f, l2)


def test_nonzero_flow_random_zero_sum():
    rng = np.random.default_rng(1)
    agree = 0
    for _ in range(1000):
        f = rng.standard_normal(5)
        f = np.sort(f - f.mean())[::-1]
        l2 = rng.uniform(0.05, 1.5)
        agree += check_nonzero_group(f, l2).holds == classo_nonzero_flow_holds(f, l2)
    assert agree == 1000


# event times


def test_fuse_formula():
    t = fuse_etas(np.array([1.0, 2.0]), np.array([3.0, 1.0]), 0.0, 0.0)
    assert t[0] == pytest.approx(0.5)
    assert fuse_etas(np.array([1.0, 2.0]), np.array([1.0, 3.0]), 0.0, 0.0)[0] == np.inf


def test_fuse_identity_design():
    d = ridge_augment([1.0, 2.0], np.eye(2))
    state, s, _ = init_state(d, PathConfig())
    np.testing.assert_allclose(state.slopes[s.nonzero], [1.0, -1.0], rtol=1e-5)
    times = fuse_times(state, s)
    assert min(times.values()) == pytest.approx(0.5, rel=1e-5)


def _table(d, cfg):
    tr = PathTracker(d, cfg)
    return tr, tr.table, tr.state, tr.structure


def test_singleton_split_is_infinite():
    d = ridge_augment([1.0, 2.0], np.eye(2))
    tr, tb, state, s = _table(d, PathConfig())
    for g in (1, -1):
        if s.zero + g < s.n_groups and s.zero + g >= 0:
            assert split_times_nonzero(tb, state, s, tr.config, g) == {1: np.inf}
    assert split_times_zero(tb, state, s, tr.config) == {}
    assert switch_times(tb, state, s, tr.config) == {}


def test_times_positive_at_certified_point(rng):
    d = random_dataset(rng, 30, 6)
    cfg = PathConfig(lambda1_bar=0.5)
    tr = PathTracker(d, cfg)
    for _ in range(25):
        eta, ev = tr.next_event()
        if ev is None:
            break
        tr.advance(eta)
        tr.apply_event(ev)
        ev_times = tr.ev - tr.eta
        assert np.all(ev_times >= 0)


def test_switch_equalises_gradients():
    d = random_dataset(np.random.default_rng(3), 25, 6)
    cfg = PathConfig(lambda1_bar=0.3)
    tr = PathTracker(d, cfg)
    hit = step_until(tr, lambda e: e.kind is EventKind.SWITCH)
    assert hit is not None
    eta, ev = hit
    b = ev.k
    tb = tr.table.at(eta)
    assert abs(tb[b - 1] - tb[b]) <= 1e-9 * (1 + np.abs(tb).max())
    # the same from scratch: move the state and recompute gradients
    beta = expand(tr.structure, tr.state.values + (eta - tr.eta_ref) * tr.state.slopes)
    g = d.X.T @ (d.X @ beta - d.y)
    i, j = tr.structure.order[b - 1], tr.structure.order[b]
    assert abs(g[i] - g[j]) <= 1e-9 * (1 + np.abs(g).max())


def test_duplicate_columns_never_switch():
    tb = GradientTable(0.0, np.array([1.0, 1.0]), np.array([0.5, 0.5]),
                       np.array([0.0, 1.0, 2.0]), np.array([0.0, 0.5, 1.0]))
    from clustpath.core_model import GroupStructure

    s = GroupStructure(Model.CLASSO, np.arange(2), np.array([0, 0, 2]), 0, np.ones(2))
    assert switch_etas(tb, s, PathConfig(), 0.0, [1])[0] == np.inf


def test_zero_exit_monotone_in_lambda1():
    d = ridge_augment([0.0, 1.0, -2.0, 0.5], np.eye(4), 1e-6)
    prev = None
    for l1 in (1.0, 2.0, 4.0, 8.0):
        tr = PathTracker(d, PathConfig(lambda1_bar=l1))
        times = split_times_zero(tr.table, tr.state, tr.structure, tr.config)
        assert times
        vals = np.array([times[k] for k in sorted(times)])
        if prev is not None:
            assert np.all(vals >= prev)
        prev = vals


def _first_event_eta(path, kinds):
    for i, bp in enumerate(path.breakpoints):
        if any(e.kind in kinds for e in bp.events):
            return i
    return None


def _split_instances(count, kinds):
    """The first ``count`` random n=15, p=5 paths containing one of ``kinds``."""
    found = []
    for seed in range(100):
        d = random_dataset(np.random.default_rng(seed), 15, 5)
        cfg = PathConfig(lambda1_bar=0.5)
        path = run_path(d, cfg)
        i = _first_event_eta(path, kinds)
        if i is not None:
            found.append((d, cfg, path, i))
            if len(found) == count:
                break
    return found


SPLITS = {EventKind.SPLIT, EventKind.SPLIT_ZERO_NEG, EventKind.SPLIT_ZERO_POS}


@pytest.mark.parametrize("kinds", [{EventKind.SPLIT}, {EventKind.SPLIT_ZERO_NEG, EventKind.SPLIT_ZERO_POS}])
def test_first_split_matches_oracle_bisection(kinds):
    cases = _split_instances(2, kinds)
    assert len(cases) == 2
    for d, cfg, path, i in cases:
        etas = path.etas
        lo = 0.5 * (etas[i - 1] + etas[i])
        hi = 0.5 * (etas[i] + etas[i + 1])
        assert abs(oracle_change_point(d, cfg, lo, hi) - etas[i]) <= 1e-6


def test_zero_exit_matches_oracle_bisection():
    # coefficient 1 starts at zero and must leave it
    X = np.array([[1.0, 0.3, 0.0], [0.2, 1.0, 0.1], [0.0, 0.4, 1.0], [0.5, -0.2, 0.3]])
    beta = np.array([1.0, 0.0, -2.0])
    y = X @ beta
    d = ridge_augment(y, X, 1e-6)
    cfg = PathConfig(lambda1_bar=0.1)
    path = run_path(d, cfg)
    i = _first_event_eta(path, {EventKind.SPLIT_ZERO_NEG, EventKind.SPLIT_ZERO_POS})
    assert i is not None
    etas = path.etas
    lo = 0.5 * (etas[i - 1] + etas[i])
    hi = 0.5 * (etas[i] + etas[i + 1])
    assert abs(oracle_change_point(d, cfg, lo, hi) - etas[i]) <= 1e-6
