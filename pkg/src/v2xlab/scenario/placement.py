"""RSU siting: signalized intersections first, then greedy edge coverage."""

from __future__ import annotations

import math

from ..netgraph import RoadNetwork
from ..protocol import Rsu


def _midpoints(net: RoadNetwork) -> list[tuple[float, float, float]]:
    out = []
    for eid in sorted(net.edges):
        e = net.edges[eid]
        a, b = net.nodes[e.src], net.nodes[e.dst]
        out.append(((a.x + b.x) / 2, (a.y + b.y) / 2, e.length_m))
    return out


def covered_length(net: RoadNetwork, sites: list[str], range_m: float) -> float:
    """Total length of edges whose midpoint is within ``range_m`` of any site."""
    pts = [(net.nodes[s].x, net.nodes[s].y) for s in sites]
    total = 0.0
    for mx, my, length in _midpoints(net):
        if any(math.hypot(mx - x, my - y) <= range_m for x, y in pts):
            total += length
    return total


def _greedy(net, chosen, candidates, k, range_m) -> list[str]:
    mids = _midpoints(net)
    covered = [
        any(math.hypot(mx - net.nodes[s].x, my - net.nodes[s].y) <= range_m for s in chosen)
        for mx, my, _ in mids
    ]
    chosen = list(chosen)
    pool = [c for c in candidates if c not in chosen]
    for _ in range(k):
        best, best_gain = None, -1.0
        for c in pool:
            node = net.nodes[c]
            gain = sum(
                length
                for (mx, my, length), cov in zip(mids, covered)
                if not cov and math.hypot(mx - node.x, my - node.y) <= range_m
            )
            if gain > best_gain:
                best, best_gain = c, gain
        chosen.append(best)
        pool.remove(best)
        node = net.nodes[best]
        covered = [
            cov or math.hypot(mx - node.x, my - node.y) <= range_m
            for (mx, my, _), cov in zip(mids, covered)
        ]
    return chosen


def place_rsus(net: RoadNetwork, n: int, range_m: float, seed: int = 0) -> list[Rsu]:
    """Choose ``n`` RSU sites.

    Ties are broken by node id, so the result does not depend on ``seed``;
    the argument is kept for callers that pass one uniformly.
    """
    if not net.nodes:
        raise ValueError("network has no nodes")
    if n < 1:
        raise ValueError("need at least one RSU")
    if n > len(net.nodes):
        raise ValueError(f"cannot place {n} RSUs on {len(net.nodes)} nodes")
    signals = net.signalized_nodes()
    if n <= len(signals):
        sites = signals if n == len(signals) else _greedy(net, [], signals, n, range_m)
    else:
        sites = _greedy(net, signals, sorted(net.nodes), n - len(signals), range_m)
    return [
        Rsu(f"rsu{i:02d}", s, (net.nodes[s].x, net.nodes[s].y)) for i, s in enumerate(sites)
    ]
