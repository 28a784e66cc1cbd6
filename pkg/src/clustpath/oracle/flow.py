"""Max-flow certificate checkers for zero and nonzero groups."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from ..errors import InputError

FLOW_EPS = 1e-12
VALUE_TOL = 1e-9


@dataclass
class FlowNetwork:
    """Directed network; parallel edges are allowed and add up."""

    vertex_count: int
    source: int
    sink: int
    edges: list = field(default_factory=list)

    def __post_init__(self):
        if self.source == self.sink:
            raise InputError("source and sink must differ")
        for v in (self.source, self.sink):
            if not 0 <= v < self.vertex_count:
                raise InputError(f"vertex {v} out of range")

    def add_edge(self, u: int, v: int, capacity: float) -> None:
        c = float(capacity)
        if not np.isfinite(c) or c < 0:
            raise InputError(f"capacity must be finite and nonnegative, got {capacity}")
        if not (0 <= u < self.vertex_count and 0 <= v < self.vertex_count):
            raise InputError(f"edge ({u}, {v}) out of range")
        self.edges.append((u, v, c))

    def source_capacity(self) -> float:
        return sum(c for u, _, c in self.edges if u == self.source)


def max_flow(network: FlowNetwork, eps: float = FLOW_EPS) -> float:
    """Maximum s-t flow value by shortest augmenting paths (Edmonds-Karp).

    Residual capacities at or below ``eps`` count as saturated.
    """
    n = network.vertex_count
    cap = {}
    adj = [set() for _ in range(n)]
    for u, v, c in network.edges:
        if u == v:
            continue
        cap[u, v] = cap.get((u, v), 0.0) + c
        cap.setdefault((v, u), 0.0)
        adj[u].add(v)
        adj[v].add(u)
    adj = [sorted(a) for a in adj]
    s, t = network.source, network.sink
    value = 0.0
    while True:
        parent = [-1] * n
        parent[s] = s
        queue = deque([s])
        while queue and parent[t] < 0:
            u = queue.popleft()
            for v in adj[u]:
                if parent[v] < 0 and cap[u, v] > eps:
                    parent[v] = u
                    queue.append(v)
        if parent[t] < 0:
            return value
        push = np.inf
        v = t
        while v != s:
            u = parent[v]
            push = min(push, cap[u, v])
            v = u
        v = t
        while v != s:
            u = parent[v]
            cap[u, v] -= push
            cap[v, u] += push
            v = u
        value += push


def classo_flow_network(f, lambda1: float, lambda2: float) -> FlowNetwork:
    """Network on vertices ``0..m`` plus source ``r = m+1`` and sink ``s = m+2``.

    Vertex 0 carries ``f_0 = -sum(f)``. Supplies ``f_i^-`` enter from the source,
    demands ``f_i^+`` drain to the sink, vertex 0 links to every ``i`` with
    capacity ``lambda1`` and the ``i, j >= 1`` pairs link with ``lambda2``.
    """
    f = np.asarray(f, dtype=float).ravel()
    m = f.size
    if m < 1:
        raise InputError("need at least one entry")
    full = np.concatenate([[-f.sum()], f])
    r, s = m + 1, m + 2
    net = FlowNetwork(m + 3, r, s)
    for i, fi in enumerate(full):
        if fi < 0:
            net.add_edge(r, i, -fi)
        elif fi > 0:
            net.add_edge(i, s, fi)
    for i in range(1, m + 1):
        if lambda1 > 0:
            net.add_edge(i, 0, lambda1)
            net.add_edge(0, i, lambda1)
        for j in range(i + 1, m + 1):
            if lambda2 > 0:
                net.add_edge(i, j, lambda2)
                net.add_edge(j, i, lambda2)
    return net


def classo_flow_target(f) -> float:
    f = np.asarray(f, dtype=float).ravel()
    full = np.concatenate([[-f.sum()], f])
    return float(np.clip(full, 0, None).sum())


def oscar_flow_network(f, lambda1: float, lambda2: float) -> FlowNetwork:
    """Network ``U + W + {r, s}``: ``u_i`` per entry, ``w_ij`` per pair.

    Vertex ids: ``u_i = i``, pairs follow in lexicographic order, then ``r``, ``s``.
    """
    f = np.asarray(f, dtype=float).ravel()
    m = f.size
    if m < 1:
        raise InputError("need at least one entry")
    pairs = [(i, j) for i in range(m) for j in range(i + 1, m)]
    r = m + len(pairs)
    s = r + 1
    net = FlowNetwork(s + 1, r, s)
    for i in range(m):
        net.add_edge(r, i, abs(f[i]))
        net.add_edge(i, s, lambda1)
    for w, (i, j) in enumerate(pairs, start=m):
        net.add_edge(i, w, lambda2)
        net.add_edge(j, w, lambda2)
        net.add_edge(w, s, lambda2)
    return net


def _saturates(value: float, target: float) -> bool:
    return value >= target - VALUE_TOL * max(1.0, target)


def classo_zero_flow_holds(f, lambda1: float, lambda2: float) -> bool:
    """Zero-group subgradients exist iff the flow saturates every demand."""
    return _saturates(max_flow(classo_flow_network(f, lambda1, lambda2)), classo_flow_target(f))


def classo_nonzero_flow_holds(f, lambda2: float) -> bool:
    """Nonzero group: same network with no link to the origin (``lambda1 = 0``)."""
    return classo_zero_flow_holds(f, 0.0, lambda2)


def oscar_zero_flow_holds(f, lambda1: float, lambda2: float) -> bool:
    target = float(np.abs(f).sum())
    return _saturates(max_flow(oscar_flow_network(f, lambda1, lambda2)), target)


def oscar_nonzero_flow_holds(f, lambda2: float) -> bool:
    return classo_zero_flow_holds(f, 0.0, lambda2 / 2.0)
