import itertools

import networkx as nx
import numpy as np
import pytest

from clustpath import Dataset, Model, PathConfig, objective_value, run_path
from clustpath.errors import InputError
from clustpath.oracle import enumerate_kkt, prox_solve
from clustpath.oracle.flow import (
    FlowNetwork,
    classo_flow_network,
    classo_flow_target,
    classo_zero_flow_holds,
    max_flow,
    oscar_flow_network,
    oscar_zero_flow_holds,
)

from conftest import random_dataset

MODELS = [Model.CLASSO, Model.OSCAR]


def min_cut_bruteforce(net: FlowNetwork) -> float:
    inner = [v for v in range(net.vertex_count) if v not in (net.source, net.sink)]
    best = np.inf
    for r in range(len(inner) + 1):
        for side in itertools.combinations(inner, r):
            S = set(side) | {net.source}
            best = min(best, sum(c for u, v, c in net.edges if u in S and v not in S))
    return best


def random_network(rng, n):
    net = FlowNetwork(n, 0, n - 1)
    for u in range(n):
        for v in range(n):
            if u != v and rng.random() < 0.35:
                net.add_edge(u, v, rng.uniform(0, 3))
    return net


def test_single_edge():
    net = FlowNetwork(2, 0, 1)
    net.add_edge(0, 1, 2.5)
    assert max_flow(net) == pytest.approx(2.5)


def test_series_parallel():
    net = FlowNetwork(4, 0, 3)
    for a, b, c in [(0, 1, 3), (1, 3, 1), (0, 2, 2), (2, 3, 5)]:
        net.add_edge(a, b, c)
    assert max_flow(net) == pytest.approx(3.0)


def test_bad_networks_rejected():
    with pytest.raises(InputError):
        FlowNetwork(2, 0, 0)
    net = FlowNetwork(2, 0, 1)
    with pytest.raises(InputError):
        net.add_edge(0, 1, -1.0)


@pytest.mark.parametrize("seed", range(20))
def test_max_flow_equals_min_cut(seed):
    rng = np.random.default_rng(seed)
    net = random_network(rng, int(rng.integers(3, 11)))
    v = max_flow(net)
    assert v == pytest.approx(min_cut_bruteforce(net), abs=1e-9)
    assert v <= net.source_capacity() + 1e-12


@pytest.mark.parametrize("seed", range(10))
def test_max_flow_matches_networkx(seed):
    rng = np.random.default_rng(100 + seed)
    net = random_network(rng, 20)
    G = nx.DiGraph()
    G.add_nodes_from(range(net.vertex_count))
    for u, v, c in net.edges:
        if G.has_edge(u, v):
            G[u][v]["capacity"] += c
        else:
            G.add_edge(u, v, capacity=c)
    ref = nx.maximum_flow_value(G, net.source, net.sink)
    assert max_flow(net) == pytest.approx(ref, abs=1e-9)


def test_classo_network_examples():
    net = classo_flow_network([0.5], 1.0, 0.0)
    assert max_flow(net) == pytest.approx(classo_flow_target([0.5]))
    assert classo_zero_flow_holds([0.5], 1.0, 0.0)
    assert not classo_zero_flow_holds([1.5], 1.0, 0.0)
    net = classo_flow_network([1.5], 1.0, 0.0)
    assert max_flow(net) == pytest.approx(1.0)


def test_classo_network_min_cut(rng):
    for _ in range(30):
        m = int(rng.integers(1, 6))
        net = classo_flow_network(rng.standard_normal(m), rng.uniform(0, 1), rng.uniform(0, 1))
        assert max_flow(net) == pytest.approx(min_cut_bruteforce(net), abs=1e-9)


def test_oscar_network_examples():
    for f in (0.3, -2.0):
        assert max_flow(oscar_flow_network([f], 1.0, 0.5)) == pytest.approx(min(abs(f), 1.0))
    assert max_flow(oscar_flow_network([0.1, 1.4], 0.5, 1.0)) == pytest.approx(1.5)
    assert oscar_zero_flow_holds([0.1, 1.4], 0.5, 1.0)


def test_oscar_network_min_cut(rng):
    for _ in range(30):
        m = int(rng.integers(1, 4))
        net = oscar_flow_network(rng.standard_normal(m), rng.uniform(0, 1), rng.uniform(0, 1))
        assert max_flow(net) == pytest.approx(min_cut_bruteforce(net), abs=1e-9)


def test_classo_sign_symmetry(rng):
    for _ in range(500):
        m = int(rng.integers(1, 7))
        f = rng.standard_normal(m) * 2
        l1, l2 = rng.uniform(0, 1.5), rng.uniform(0, 1)
        assert classo_zero_flow_holds(f, l1, l2) == classo_zero_flow_holds(-f, l1, l2)


# fixed-eta solvers


def test_prox_unpenalised_is_ols(rng):
    d = random_dataset(rng, 30, 6)
    ols = np.linalg.lstsq(d.X, d.y, rcond=None)[0]
    for model in MODELS:
        assert np.abs(prox_solve(d, 0.0, 0.0, model) - ols).max() <= 1e-8


@pytest.mark.parametrize("eta,expect", [(0.25, [1.25, 1.75]), (0.5, [1.5, 1.5]), (1.0, [1.5, 1.5])])
def test_prox_classo_identity(eta, expect):
    d = Dataset([1.0, 2.0], np.eye(2))
    np.testing.assert_allclose(prox_solve(d, 0.0, eta, Model.CLASSO), expect, atol=1e-9)


@pytest.mark.parametrize("eta,expect", [(0.5, [1.0, 1.5]), (1.0, [1.0, 1.0]), (2.0, [0.5, 0.5]),
                                        (3.0, [0.0, 0.0]), (4.0, [0.0, 0.0])])
def test_prox_oscar_identity(eta, expect):
    d = Dataset([1.0, 2.0], np.eye(2))
    np.testing.assert_allclose(prox_solve(d, 0.0, eta, Model.OSCAR), expect, atol=1e-9)


def test_prox_rejects_large_p():
    d = random_dataset(np.random.default_rng(0), 80, 65)
    with pytest.raises(InputError):
        prox_solve(d, 0.1, 0.1, Model.CLASSO)


@pytest.mark.parametrize("model", MODELS)
def test_mutual_domination(model):
    for seed in range(20):
        rng = np.random.default_rng(seed)
        d = random_dataset(rng, 25, 6)
        cfg = PathConfig(model=model, lambda1_bar=float(rng.uniform(0, 1)))
        path = run_path(d, cfg)
        eta = float(rng.uniform(0, 1.2 * path.terminal_eta))
        lam = (cfg.lambda1_bar * eta, cfg.lambda2_bar * eta)
        a = objective_value(d, prox_solve(d, *lam, model), *lam, model)
        b = objective_value(d, path.solution_at(eta), *lam, model)
        assert a <= b + 1e-8 and b <= a + 1e-8


@pytest.mark.parametrize("model", MODELS)
@pytest.mark.parametrize("c", [-2.0, -0.3, 0.1, 1.7])
def test_enumerate_scalar_soft_threshold(model, c):
    d = Dataset([c], np.ones((1, 1)))
    lam1 = 0.5
    soft = np.sign(c) * max(abs(c) - lam1, 0.0)
    np.testing.assert_allclose(enumerate_kkt(d, lam1, 0.3, model), [soft], atol=1e-12)


def test_enumerate_rejects_large_p():
    d = random_dataset(np.random.default_rng(0), 10, 6)
    with pytest.raises(InputError):
        enumerate_kkt(d, 0.1, 0.1, Model.CLASSO)


def test_enumerate_p2_matches_prox(rng):
    for _ in range(10):
        d = random_dataset(rng, 10, 2)
        l1, l2 = rng.uniform(0, 1), rng.uniform(0, 2)
        assert np.abs(enumerate_kkt(d, l1, l2, Model.CLASSO) - prox_solve(d, l1, l2, Model.CLASSO)).max() <= 1e-7


def test_enumerate_p3_oscar_matches_path(rng):
    d = random_dataset(rng, 12, 3)
    cfg = PathConfig(model=Model.OSCAR, lambda1_bar=0.4)
    path = run_path(d, cfg)
    for eta in np.linspace(0, path.terminal_eta, 7):
        ref = enumerate_kkt(d, cfg.lambda1_bar * eta, cfg.lambda2_bar * eta, Model.OSCAR)
        assert np.abs(path.solution_at(eta) - ref).max() <= 1e-6


@pytest.mark.parametrize("model", MODELS)
@pytest.mark.parametrize("p", [1, 2, 3, 4])
def test_prox_and_enumerate_agree(model, p):
    rng = np.random.default_rng(p)
    for _ in range(4):
        d = random_dataset(rng, 12, p)
        l1, l2 = rng.uniform(0, 1.5), rng.uniform(0, 1.5)
        a = enumerate_kkt(d, l1, l2, model)
        b = prox_solve(d, l1, l2, model)
        assert np.abs(a - b).max() <= 1e-6
