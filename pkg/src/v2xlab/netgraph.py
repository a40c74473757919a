"""Road network model, JSON loading, grid generation and shortest-path routing."""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field
from typing import IO, Iterable, Mapping


class NetworkError(ValueError):
    """Base class for invalid network documents and routing failures."""


class NetworkParseError(NetworkError):
    pass


class DanglingEndpointError(NetworkError):
    pass


class NonPositiveValueError(NetworkError):
    pass


class UnreachableError(NetworkError):
    pass


@dataclass(frozen=True)
class Node:
    id: str
    x: float
    y: float
    signal: str | None = None


@dataclass(frozen=True)
class Edge:
    id: str
    src: str
    dst: str
    length_m: float
    speed_limit_mps: float
    lanes: int = 1

    @property
    def free_flow_s(self) -> float:
        return self.length_m / self.speed_limit_mps


@dataclass(frozen=True)
class Route:
    edges: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.edges:
            raise ValueError("route must contain at least one edge")

    def __len__(self) -> int:
        return len(self.edges)

    def __iter__(self):
        return iter(self.edges)

    def __getitem__(self, i):
        return self.edges[i]


@dataclass(frozen=True)
class RoadNetwork:
    """Directed road graph. Treated as immutable once built."""

    nodes: Mapping[str, Node]
    edges: Mapping[str, Edge]
    out_edges: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    in_edges: Mapping[str, tuple[str, ...]] = field(default_factory=dict)

    @classmethod
    def build(cls, nodes: Iterable[Node], edges: Iterable[Edge]) -> "RoadNetwork":
        node_map: dict[str, Node] = {}
        for n in nodes:
            if n.id in node_map:
                raise NetworkParseError(f"duplicate node id {n.id!r}")
            if not (math.isfinite(n.x) and math.isfinite(n.y)):
                raise NetworkParseError(f"node {n.id!r} has non-finite coordinates")
            node_map[n.id] = n
        edge_map: dict[str, Edge] = {}
        out: dict[str, list[str]] = {nid: [] for nid in node_map}
        inc: dict[str, list[str]] = {nid: [] for nid in node_map}
        for e in edges:
            if e.id in edge_map:
                raise NetworkParseError(f"duplicate edge id {e.id!r}")
            for end in (e.src, e.dst):
                if end not in node_map:
                    raise DanglingEndpointError(f"edge {e.id!r} references unknown node {end!r}")
            if not e.length_m > 0:
                raise NonPositiveValueError(f"edge {e.id!r}: length_m must be > 0")
            if not e.speed_limit_mps > 0:
                raise NonPositiveValueError(f"edge {e.id!r}: speed_limit_mps must be > 0")
            if e.lanes < 1:
                raise NonPositiveValueError(f"edge {e.id!r}: lanes must be >= 1")
            a, b = node_map[e.src], node_map[e.dst]
            chord = math.hypot(b.x - a.x, b.y - a.y)
            if e.length_m < chord * (1 - 1e-9):
                raise NetworkParseError(
                    f"edge {e.id!r}: length {e.length_m} shorter than endpoint distance {chord:.3f}"
                )
            edge_map[e.id] = e
            out[e.src].append(e.id)
            inc[e.dst].append(e.id)
        return cls(
            nodes=node_map,
            edges=edge_map,
            out_edges={k: tuple(sorted(v)) for k, v in out.items()},
            in_edges={k: tuple(sorted(v)) for k, v in inc.items()},
        )

    def check_route(self, route: Route) -> None:
        for eid in route.edges:
            if eid not in self.edges:
                raise NetworkError(f"route references unknown edge {eid!r}")
        for a, b in zip(route.edges, route.edges[1:]):
            if self.edges[a].dst != self.edges[b].src:
                raise NetworkError(f"route edges {a!r} and {b!r} are not connected")

    def signalized_nodes(self) -> list[str]:
        return sorted(nid for nid, n in self.nodes.items() if n.signal is not None)

    def position(self, edge_id: str, offset_m: float) -> tuple[float, float]:
        e = self.edges[edge_id]
        a, b = self.nodes[e.src], self.nodes[e.dst]
        f = min(max(offset_m / e.length_m, 0.0), 1.0)
        return a.x + (b.x - a.x) * f, a.y + (b.y - a.y) * f

    def to_document(self) -> dict:
        nodes = []
        for nid in sorted(self.nodes):
            n = self.nodes[nid]
            d = {"id": n.id, "x": n.x, "y": n.y}
            if n.signal is not None:
                d["signal"] = n.signal
            nodes.append(d)
        edges = [
            {
                "id": e.id,
                "from": e.src,
                "to": e.dst,
                "length_m": e.length_m,
                "speed_limit_mps": e.speed_limit_mps,
                "lanes": e.lanes,
            }
            for e in (self.edges[k] for k in sorted(self.edges))
        ]
        return {"nodes": nodes, "edges": edges}


def load_network(source: IO[bytes] | IO[str]) -> RoadNetwork:
    """Parse and validate a JSON network document from a readable stream."""
    raw = source.read()
    try:
        doc = json.loads(raw)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise NetworkParseError(f"malformed network document: {exc}") from exc
    return network_from_document(doc)


def network_from_document(doc) -> RoadNetwork:
    if not isinstance(doc, dict) or "nodes" not in doc or "edges" not in doc:
        raise NetworkParseError("network document needs top-level 'nodes' and 'edges'")
    try:
        nodes = [
            Node(str(n["id"]), float(n["x"]), float(n["y"]), n.get("signal"))
            for n in doc["nodes"]
        ]
        edges = [
            Edge(
                str(e["id"]),
                str(e["from"]),
                str(e["to"]),
                float(e["length_m"]),
                float(e["speed_limit_mps"]),
                int(e.get("lanes", 1)),
            )
            for e in doc["edges"]
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise NetworkParseError(f"malformed network entry: {exc}") from exc
    return RoadNetwork.build(nodes, edges)


def grid_node_id(r: int, c: int) -> str:
    return f"n{r:02d}_{c:02d}"


def grid_network(
    rows: int,
    cols: int,
    block_m: float,
    speed_mps: float,
    signal_stride: int = 1,
) -> RoadNetwork:
    """Manhattan grid with one directed edge per direction between neighbours.

    Interior intersections whose row and column are both multiples of
    ``signal_stride`` get a signal.
    """
    if rows < 2 or cols < 2:
        raise ValueError("grid needs at least 2 rows and 2 cols")
    if block_m <= 0 or speed_mps <= 0 or signal_stride < 1:
        raise ValueError("block_m, speed_mps must be > 0 and signal_stride >= 1")
    nodes = []
    for r in range(rows):
        for c in range(cols):
            interior = 0 < r < rows - 1 and 0 < c < cols - 1
            signalized = interior and r % signal_stride == 0 and c % signal_stride == 0
            nid = grid_node_id(r, c)
            nodes.append(Node(nid, c * block_m, r * block_m, f"tl_{nid}" if signalized else None))
    edges = []

    def link(a: str, b: str) -> None:
        edges.append(Edge(f"{a}>{b}", a, b, float(block_m), float(speed_mps), 1))

    for r in range(rows):
        for c in range(cols):
            here = grid_node_id(r, c)
            if c + 1 < cols:
                right = grid_node_id(r, c + 1)
                link(here, right)
                link(right, here)
            if r + 1 < rows:
                up = grid_node_id(r + 1, c)
                link(here, up)
                link(up, here)
    return RoadNetwork.build(nodes, edges)


def free_flow_weights(net: RoadNetwork) -> dict[str, float]:
    return {eid: e.free_flow_s for eid, e in net.edges.items()}


def shortest_path(
    net: RoadNetwork,
    origin: str,
    dest: str,
    weights: Mapping[str, float],
) -> Route:
    """Minimum-weight route; equal-cost ties go to the lexicographically smallest
    edge-id sequence. Infinite weights mark impassable edges."""
    if origin == dest:
        raise ValueError("origin and destination must differ")
    for end in (origin, dest):
        if end not in net.nodes:
            raise NetworkError(f"unknown node {end!r}")
    for eid in net.edges:
        w = weights[eid]
        if w < 0 or math.isnan(w):
            raise NetworkError(f"edge {eid!r} has invalid weight {w}")

    settled: set[str] = set()
    heap: list[tuple[float, tuple[str, ...], str]] = [(0.0, (), origin)]
    while heap:
        cost, path, node = heapq.heappop(heap)
        if node in settled:
            continue
        settled.add(node)
        if node == dest:
            return Route(path)
        for eid in net.out_edges[node]:
            w = weights[eid]
            if math.isinf(w):
                continue
            nxt = net.edges[eid].dst
            if nxt not in settled:
                heapq.heappush(heap, (cost + w, path + (eid,), nxt))
    raise UnreachableError(f"no finite-weight path from {origin!r} to {dest!r}")


def route_travel_time(net: RoadNetwork, route: Route, weights: Mapping[str, float]) -> float:
    net.check_route(route)
    total = 0.0
    for eid in route.edges:
        if eid not in weights:
            raise KeyError(f"no weight for edge {eid!r}")
        total += weights[eid]
    return total
