import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from clustpath import (
    Dataset,
    InputError,
    Model,
    PathConfig,
    PathTracker,
    objective_value,
    ridge_augment,
    run_path,
    solution_at,
)
from clustpath.certify import certify
from clustpath.core_model import grouped_columns, refresh_state
from clustpath.oracle import prox_solve
from clustpath.path import EventKind

from conftest import random_dataset, synth_dataset

MODELS = [Model.CLASSO, Model.OSCAR]


def test_classo_toy_path():
    d = ridge_augment([1.0, 2.0], np.eye(2))
    path = run_path(d, PathConfig())
    bps = path.breakpoints
    assert len(bps) == 2 and path.reason == "slope"
    np.testing.assert_allclose(bps[0].beta, [1.0, 2.0], rtol=1e-5)
    assert bps[1].eta == pytest.approx(0.5, rel=1e-5)
    assert [e.kind for e in bps[1].events] == [EventKind.FUSE]
    np.testing.assert_allclose(bps[1].beta, [1.5, 1.5], rtol=1e-5)


def test_oscar_toy_path():
    d = ridge_augment([1.0, 2.0], np.eye(2))
    path = run_path(d, PathConfig(model=Model.OSCAR))
    etas = path.etas
    assert etas[1] == pytest.approx(1.0, rel=1e-5)
    np.testing.assert_allclose(path.breakpoints[1].beta, [1.0, 1.0], rtol=1e-5)
    assert etas[-1] == pytest.approx(3.0, rel=1e-5)
    np.testing.assert_allclose(path.breakpoints[-1].beta, 0.0, atol=1e-12)
    mid = path.solution_at(2.0)
    np.testing.assert_allclose(mid, [0.5, 0.5], rtol=1e-5)


def test_zero_response():
    d = Dataset(np.zeros(5), np.random.default_rng(0).standard_normal((5, 3)))
    path = run_path(d, PathConfig(lambda1_bar=1.0))
    assert len(path.breakpoints) == 1
    assert path.breakpoints[0].eta == 0.0 and path.breakpoints[0].events == ()


def test_solution_at_basics():
    d = random_dataset(np.random.default_rng(4), 20, 5)
    path = run_path(d, PathConfig(lambda1_bar=0.5))
    for bp in path.breakpoints:
        assert np.array_equal(solution_at(path, bp.eta), bp.beta)
    a, b = path.breakpoints[1], path.breakpoints[2]
    np.testing.assert_allclose(solution_at(path, 0.5 * (a.eta + b.eta)), 0.5 * (a.beta + b.beta),
                               atol=1e-14)
    np.testing.assert_array_equal(solution_at(path, 10 * path.terminal_eta), path.breakpoints[-1].beta)
    with pytest.raises(InputError):
        solution_at(path, -1.0)


@pytest.mark.parametrize("model", MODELS)
def test_sampled_against_prox(model):
    d = random_dataset(np.random.default_rng(7), 20, 5)
    cfg = PathConfig(model=model, lambda1_bar=0.4)
    path = run_path(d, cfg)
    for eta in np.linspace(0, path.terminal_eta * 1.1, 9)[1:]:
        ref = prox_solve(d, cfg.lambda1_bar * eta, cfg.lambda2_bar * eta, model)
        assert np.abs(path.solution_at(eta) - ref).max() <= 1e-5


@pytest.mark.parametrize("model", MODELS)
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_continuity_at_breakpoints(model, seed):
    d = random_dataset(np.random.default_rng(seed), 30, 7)
    tr = PathTracker(d, PathConfig(model=model, lambda1_bar=0.3))
    for _ in range(500):
        eta, ev = tr.next_event()
        if ev is None or tr.slope_norm() <= 1e-12:
            break
        tr.advance(eta)
        left = tr.beta()
        tr.apply_event(ev)
        assert np.abs(tr.beta() - left).max() <= 1e-9
    assert tr.stats.max_jump <= 1e-9


@pytest.mark.parametrize("model", MODELS)
@pytest.mark.parametrize("l1", [0.0, 0.7])
def test_midpoints_certify(model, l1):
    d = random_dataset(np.random.default_rng(5), 30, 6)
    cfg = PathConfig(model=model, lambda1_bar=l1)
    path = run_path(d, cfg)
    etas = path.etas
    for a, b in zip(etas[:-1], etas[1:]):
        eta = 0.5 * (a + b)
        rep = certify(d, path.solution_at(eta), cfg.lambda1_bar * eta, cfg.lambda2_bar * eta, model)
        assert rep.passes, rep.to_dict()


@pytest.mark.parametrize("model", MODELS)
def test_switches_keep_beta_and_objective(model):
    d = random_dataset(np.random.default_rng(3), 25, 6)
    cfg = PathConfig(model=model, lambda1_bar=0.3)
    tr = PathTracker(d, cfg)
    seen = 0
    for _ in range(500):
        eta, ev = tr.next_event()
        if ev is None or tr.slope_norm() <= 1e-12:
            break
        tr.advance(eta)
        before = tr.beta()
        tr.apply_event(ev)
        if ev.kind.family == "switch":
            seen += 1
            after = tr.beta()
            np.testing.assert_allclose(after, before, atol=1e-13)
            lam = (cfg.lambda1_bar * eta, cfg.lambda2_bar * eta)
            assert objective_value(d, after, *lam, model) == pytest.approx(
                objective_value(d, before, *lam, model), rel=1e-13)
    assert seen > 0


_PATHS = {}


def _cached(model):
    if model not in _PATHS:
        d = random_dataset(np.random.default_rng(9), 25, 6)
        cfg = PathConfig(model=model, lambda1_bar=0.5)
        _PATHS[model] = d, cfg, run_path(d, cfg)
    return _PATHS[model]


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(MODELS), st.floats(0, 1), st.floats(0, 1))
def test_path_point_is_optimal_against_other_points(model, u, v):
    d, cfg, path = _cached(model)
    T = path.terminal_eta * 1.2
    eta, other = u * T, v * T
    lam = (cfg.lambda1_bar * eta, cfg.lambda2_bar * eta)
    own = objective_value(d, path.solution_at(eta), *lam, model)
    alt = objective_value(d, path.solution_at(other), *lam, model)
    assert own <= alt + 1e-10 * (1 + abs(alt))


@pytest.mark.parametrize("seed", range(5))
def test_merge_only_on_identity(seed):
    rng = np.random.default_rng(seed)
    p = 12
    d = ridge_augment(rng.standard_normal(p), np.eye(p))
    path = run_path(d, PathConfig(lambda1_bar=0.0))
    assert path.stats.T_split == 0
    assert path.stats.T_fuse <= p - 1


@pytest.mark.parametrize("seed", range(3))
def test_classo_terminal_is_zero(seed):
    d = random_dataset(np.random.default_rng(seed), 30, 6)
    path = run_path(d, PathConfig(lambda1_bar=1.0))
    assert path.reason == "slope"
    assert path.final_slope_norm <= path.slope_tol
    np.testing.assert_allclose(path.breakpoints[-1].beta, 0.0, atol=1e-10)


def _check_state_matches_rebuild(tr):
    s = tr.structure
    assert s.sizes.sum() == s.p
    np.testing.assert_array_equal(s.prefix, np.concatenate([[0], np.cumsum(s.sizes)[:-1]]))
    np.testing.assert_array_equal(np.sort(s.order), np.arange(s.p))
    fresh = refresh_state(tr.dataset, s, tr.config, tr.eta)
    st_ = tr.state
    np.testing.assert_allclose(st_.x_grouped, fresh.x_grouped, atol=1e-12)
    np.testing.assert_allclose(st_.z_inverse, fresh.z_inverse, atol=1e-9 * np.abs(fresh.z_inverse).max(initial=1.0))
    np.testing.assert_allclose(st_.offsets, fresh.offsets, atol=1e-12)
    np.testing.assert_allclose(st_.slopes, fresh.slopes, atol=1e-9)
    np.testing.assert_allclose(tr.beta(), expand_values(s, fresh), atol=1e-9)


def expand_values(s, state):
    from clustpath.core_model import expand

    return expand(s, state.values)


@pytest.mark.parametrize("model", MODELS)
def test_structural_events_match_rebuild(model):
    kinds = set()
    for seed in range(4):
        d = random_dataset(np.random.default_rng(seed), 25, 6)
        tr = PathTracker(d, PathConfig(model=model, lambda1_bar=0.3))
        for _ in range(300):
            eta, ev = tr.next_event()
            if ev is None or tr.slope_norm() <= 1e-12:
                break
            tr.advance(eta)
            before = tr.structure.copy()
            xg_before = tr.state.x_grouped.copy()
            tr.apply_event(ev)
            kinds.add(ev.kind)
            after = tr.structure
            if ev.kind is EventKind.FUSE:
                assert after.n_groups == before.n_groups - 1 or before.bounds[before.zero] == before.bounds[before.zero + 1]
                np.testing.assert_allclose(grouped_columns(d.X, after), tr.state.x_grouped, atol=1e-12)
            if ev.kind is EventKind.SPLIT:
                size = int(before.sizes[ev.group + before.zero])
                expect = before.sizes[before.nonzero].tolist()
                expect.remove(size)
                expect += [ev.k, size - ev.k]
                assert sorted(expect) == sorted(after.sizes[after.nonzero].tolist())
            if ev.kind is EventKind.SWITCH:
                np.testing.assert_array_equal(tr.state.x_grouped, xg_before)
            elif ev.kind.family != "switch":
                _check_state_matches_rebuild(tr)
    assert {EventKind.FUSE}.issubset(kinds)
    assert kinds & {EventKind.SPLIT, EventKind.SPLIT_ZERO_POS, EventKind.SPLIT_ZERO_NEG}


def test_eta_max_stops_early():
    d = random_dataset(np.random.default_rng(1), 20, 5)
    full = run_path(d, PathConfig(lambda1_bar=0.5))
    cut = 0.5 * full.terminal_eta
    part = run_path(d, PathConfig(lambda1_bar=0.5, eta_max=cut))
    assert part.reason == "eta_max" and part.terminal_eta == cut
    np.testing.assert_allclose(part.breakpoints[-1].beta, full.solution_at(cut), atol=1e-12)


def test_iteration_cap_truncates():
    d = random_dataset(np.random.default_rng(1), 20, 5)
    path = run_path(d, PathConfig(lambda1_bar=0.5, max_iters=2))
    assert path.truncated and path.reason == "max_iters"
    assert path.stats.iterations == 2


def test_drift_tracking():
    d = synth_dataset(80, 20, 0)
    path = run_path(d, PathConfig(lambda1_bar=0.5, track_inverse_drift=True))
    assert path.stats.inverse_drift
    assert max(path.stats.inverse_drift) <= 1e-10


def test_stats_add_up():
    d = random_dataset(np.random.default_rng(2), 30, 8)
    path = run_path(d, PathConfig(model=Model.OSCAR, lambda1_bar=0.2))
    st_ = path.stats
    n_events = sum(len(bp.events) for bp in path.breakpoints)
    assert st_.T_fuse + st_.T_split + st_.T_switch == st_.iterations == n_events
    assert np.all(np.diff(path.etas) > 0)
