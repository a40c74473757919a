"""Independent reference computations used by several test modules."""

from __future__ import annotations

import math
import random

from v2xlab.netgraph import Edge, Node, RoadNetwork


def all_simple_paths(net: RoadNetwork, origin: str, dest: str):
    """Every simple path as a tuple of edge ids (plain DFS, no pruning)."""
    out = []

    def walk(node, seen, path):
        if node == dest:
            out.append(tuple(path))
            return
        for eid in net.out_edges[node]:
            nxt = net.edges[eid].dst
            if nxt in seen:
                continue
            seen.add(nxt)
            path.append(eid)
            walk(nxt, seen, path)
            path.pop()
            seen.discard(nxt)

    walk(origin, {origin}, [])
    return out


def brute_force_cost(net, origin, dest, weights) -> float:
    best = math.inf
    for p in all_simple_paths(net, origin, dest):
        c = sum(weights[e] for e in p)
        best = min(best, c)
    return best


def random_digraph(rng: random.Random, max_nodes: int = 10, p: float = 0.35):
    """Random planar-ish digraph plus integer free-flow times.

    Edge lengths are at least the chord so the network validates.
    """
    n = rng.randint(2, max_nodes)
    nodes = [Node(f"v{i}", rng.uniform(0, 50), rng.uniform(0, 50)) for i in range(n)]
    edges = []
    for a in nodes:
        for b in nodes:
            if a.id != b.id and rng.random() < p:
                chord = math.hypot(a.x - b.x, a.y - b.y)
                edges.append(Edge(f"{a.id}>{b.id}", a.id, b.id, chord + 1.0, 10.0))
    net = RoadNetwork.build(nodes, edges)
    weights = {e.id: float(rng.randint(1, 9)) for e in edges}
    return net, weights


def triangle():
    """A->B, B->C, A->C plus an optional detour node D."""
    nodes = [Node("A", 0, 0), Node("B", 10, 0), Node("C", 10, 10), Node("D", 20, 5)]
    edges = [
        Edge("AB", "A", "B", 10.0, 1.0),
        Edge("BC", "B", "C", 10.0, 1.0),
        Edge("AC", "A", "C", 25.0, 1.0),
        Edge("BD", "B", "D", 12.0, 1.0),
        Edge("DC", "D", "C", 12.0, 1.0),
    ]
    return RoadNetwork.build(nodes, edges)
