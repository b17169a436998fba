"""Interaction graphs, probability weights on edges/vertices, and graph metrics.

Vertices carry qubits; edges carry the two-qubit channels. Edge weights
``p_e`` form a probability distribution, and each vertex inherits the weight
``q_i = (1/2) * sum of p_e over incident edges``.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .errors import GraphError, SupportError

Edge = tuple[int, int]
SupportSet = tuple[int, ...]

_WEIGHT_TOL = 1e-12


def canonical_edge(u: int, v: int) -> Edge:
    if u == v:
        raise GraphError(f"self loop at vertex {u}")
    return (u, v) if u < v else (v, u)


def make_support(indices: Iterable[int], n: int | None = None) -> SupportSet:
    """Sorted, duplicate-free vertex tuple; validates the index range."""
    s = tuple(sorted(set(int(i) for i in indices)))
    for i in s:
        if i < 0 or (n is not None and i >= n):
            raise SupportError(f"vertex index {i} outside [0, {n})")
    return s


@dataclass(frozen=True)
class InteractionGraph:
    """Undirected graph with normalized edge weights and derived vertex weights."""

    n: int
    edges: tuple[Edge, ...]
    edge_weights: Mapping[Edge, float]
    vertex_weights: Mapping[int, float] = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.n < 1:
            raise GraphError("graph needs at least one vertex")
        seen = set()
        total = 0.0
        for e in self.edges:
            u, v = e
            if canonical_edge(u, v) != e:
                raise GraphError(f"edge {e} not canonicalized as (min, max)")
            if not (0 <= u < self.n and 0 <= v < self.n):
                raise GraphError(f"edge {e} outside vertex range [0, {self.n})")
            if e in seen:
                raise GraphError(f"duplicate edge {e}")
            seen.add(e)
            p = self.edge_weights[e]
            if p < 0:
                raise GraphError(f"negative weight {p} on edge {e}")
            total += p
        if abs(total - 1.0) > _WEIGHT_TOL:
            raise GraphError(f"edge weights sum to {total!r}, expected 1")
        derived = self._derive_vertex_weights()
        if self.vertex_weights is None:
            object.__setattr__(self, "vertex_weights", derived)
        else:
            for i in range(self.n):
                if abs(self.vertex_weights.get(i, 0.0) - derived[i]) > _WEIGHT_TOL:
                    raise GraphError(
                        f"stored vertex weight at {i} drifted from recomputed value"
                    )
        qsum = sum(self.vertex_weights.values())
        if abs(qsum - 1.0) > _WEIGHT_TOL:
            raise GraphError(f"vertex weights sum to {qsum!r}, expected 1")

    def _derive_vertex_weights(self) -> dict[int, float]:
        q = {i: 0.0 for i in range(self.n)}
        for (u, v), p in ((e, self.edge_weights[e]) for e in self.edges):
            q[u] += 0.5 * p
            q[v] += 0.5 * p
        return q

    def neighbors(self, v: int) -> list[int]:
        out = []
        for (a, b) in self.edges:
            if a == v:
                out.append(b)
            elif b == v:
                out.append(a)
        return sorted(out)

    def edge_weight(self, u: int, v: int) -> float:
        return self.edge_weights[canonical_edge(u, v)]

    def is_ring(self) -> bool:
        if self.n < 3:
            return False
        want = {canonical_edge(i, (i + 1) % self.n) for i in range(self.n)}
        return set(self.edges) == want


def build_graph(n: int, weighted_edges: Sequence[tuple[int, int, float]]) -> InteractionGraph:
    """Graph from explicit (u, v, p) triples; weights must already sum to 1."""
    edges = []
    weights: dict[Edge, float] = {}
    for u, v, p in weighted_edges:
        e = canonical_edge(int(u), int(v))
        if e in weights:
            raise GraphError(f"duplicate edge {e}")
        edges.append(e)
        weights[e] = float(p)
    return InteractionGraph(n=n, edges=tuple(edges), edge_weights=weights)


def build_ring(n: int) -> InteractionGraph:
    """Cycle graph on n >= 3 vertices with uniform edge weights 1/n."""
    if n < 3:
        raise GraphError(f"ring needs n >= 3, got {n} (a 2-cycle duplicates its edge)")
    p = 1.0 / n
    edges = tuple(canonical_edge(i, (i + 1) % n) for i in range(n))
    return InteractionGraph(n=n, edges=edges, edge_weights={e: p for e in edges})


def graph_ball(g: InteractionGraph, s: Iterable[int], r: int) -> SupportSet:
    """All vertices at graph distance <= r from the set s (breadth first)."""
    start = make_support(s, g.n)
    if not start:
        raise SupportError("ball of an empty support is undefined")
    if r < 0:
        raise SupportError(f"radius must be nonnegative, got {r}")
    dist = {v: 0 for v in start}
    queue = deque(start)
    while queue:
        v = queue.popleft()
        if dist[v] == r:
            continue
        for w in g.neighbors(v):
            if w not in dist:
                dist[w] = dist[v] + 1
                queue.append(w)
    return tuple(sorted(dist))


def graph_distance(g: InteractionGraph, a: Iterable[int], b: Iterable[int]) -> float:
    """Minimum shortest-path length between the two supports.

    Returns ``math.inf`` when no path connects them.
    """
    sa = make_support(a, g.n)
    sb = make_support(b, g.n)
    if not sa or not sb:
        raise SupportError("graph_distance needs nonempty supports")
    targets = set(sb)
    dist = {v: 0 for v in sa}
    queue = deque(sa)
    while queue:
        v = queue.popleft()
        if v in targets:
            return float(dist[v])
        for w in g.neighbors(v):
            if w not in dist:
                dist[w] = dist[v] + 1
                queue.append(w)
    return math.inf


def ring_diameter(n: int, s: Iterable[int]) -> int:
    """Support diameter on the n-cycle.

    n minus the length of the longest contiguous cyclic run of vertices
    absent from s; 0 for an empty support. Only defined for ring graphs.
    """
    sup = make_support(s, n)
    if not sup:
        return 0
    present = [False] * n
    for v in sup:
        present[v] = True
    # longest run of empty sites on the doubled circle, capped at n
    best = 0
    run = 0
    for i in range(2 * n):
        if present[i % n]:
            run = 0
        else:
            run += 1
            best = max(best, run)
    return n - min(best, n)
