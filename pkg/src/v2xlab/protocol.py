"""Warning-message application layer.

Halted vehicles beacon a warning every ``interval_s``. RSUs rebroadcast each
new message once; vehicles never relay. Any vehicle that decodes a warning
about an edge still ahead on its route asks for a new route.
"""

from __future__ import annotations

import enum
import math
import random
from dataclasses import dataclass, field, replace
from typing import Iterable, NamedTuple

import numpy as np

from .mobility import Status, VehicleState, World
from .netgraph import (
    RoadNetwork,
    Route,
    UnreachableError,
    free_flow_weights,
    shortest_path,
)
from .radio import (
    BELOW_SENSITIVITY,
    CODE_TO_VERDICT,
    LOST_COLLISION,
    OUT_OF_RANGE,
    RECEIVED,
    SELF,
    Frame,
    RadioConfig,
    airtime_s,
    verdict_matrix,
)

DEFAULT_PAYLOAD_BYTES = 256
DEFAULT_MAX_HOPS = 1


@dataclass(frozen=True)
class WarningMessage:
    msg_id: tuple[str, int]
    origin: str
    blocked_edge: str
    event_pos: tuple[float, float]
    created_s: float
    hop_count: int = 0
    payload_bytes: int = DEFAULT_PAYLOAD_BYTES


@dataclass
class Rsu:
    id: str
    node: str
    pos: tuple[float, float]
    dedup: set = field(default_factory=set)
    relayed: set = field(default_factory=set)


@dataclass
class DedupCache:
    seen: dict[str, set] = field(default_factory=dict)

    def first_time(self, node_id: str, msg_id) -> bool:
        s = self.seen.setdefault(node_id, set())
        if msg_id in s:
            return False
        s.add(msg_id)
        return True


class ActionKind(str, enum.Enum):
    NONE = "none"
    RELAY = "relay"
    REROUTE = "reroute"


class Action(NamedTuple):
    kind: ActionKind
    msg: WarningMessage


@dataclass
class MessageCounters:
    sent: int = 0
    received: int = 0
    lost_collision: int = 0
    lost_sensitivity: int = 0
    lost_range: int = 0
    beacons: int = 0
    relays: int = 0
    distinct: int = 0

    def as_dict(self) -> dict[str, int]:
        return dict(self.__dict__)


def beacon_due(
    vehicle: VehicleState,
    now: float,
    interval_s: float = 1.0,
    *,
    payload_bytes: int = DEFAULT_PAYLOAD_BYTES,
    pos: tuple[float, float] = (0.0, 0.0),
    radio: RadioConfig | None = None,
) -> Frame | None:
    """Warning frame if ``vehicle`` is halted and a beacon falls due at ``now``.

    Beacons occupy the half-open halt interval; sequence numbers count from 0
    at the halt start.
    """
    if vehicle.status is not Status.HALTED or vehicle.halt_start_s is None:
        return None
    if now >= vehicle.resume_s:
        return None
    k = (now - vehicle.halt_start_s) / interval_s
    seq = round(k)
    if seq < 0 or abs(k - seq) > 1e-9:
        return None
    msg = WarningMessage(
        msg_id=(vehicle.id, seq),
        origin=vehicle.id,
        blocked_edge=vehicle.blocked_edge,
        event_pos=pos,
        created_s=now,
        payload_bytes=payload_bytes,
    )
    cfg = radio or RadioConfig()
    return Frame(msg.msg_id, vehicle.id, pos, now, airtime_s(payload_bytes, cfg), msg)


def handle_message(
    node: Rsu | VehicleState,
    msg: WarningMessage,
    now: float,
    net: RoadNetwork,
    cache: DedupCache | None = None,
    max_hops: int = DEFAULT_MAX_HOPS,
) -> list[Action]:
    """React to a decoded warning. Duplicates are ignored at every node."""
    if msg.blocked_edge not in net.edges:
        raise ValueError(f"warning names unknown edge {msg.blocked_edge!r}")
    if isinstance(node, Rsu):
        if msg.msg_id in node.dedup:
            return []
        node.dedup.add(msg.msg_id)
        if msg.hop_count < max_hops and msg.msg_id not in node.relayed:
            node.relayed.add(msg.msg_id)
            return [Action(ActionKind.RELAY, replace(msg, hop_count=msg.hop_count + 1))]
        return []

    cache = cache if cache is not None else DedupCache()
    if not cache.first_time(node.id, msg.msg_id):
        return []
    node.known_blocked[msg.blocked_edge] = now
    if node.status is Status.DRIVING and msg.blocked_edge in node.remaining_edges():
        return [Action(ActionKind.REROUTE, msg)]
    return []


def reroute(
    vehicle: VehicleState,
    net: RoadNetwork,
    blocked: Iterable[str],
    weights: dict[str, float] | None = None,
) -> Route:
    """Replace the route after the current edge by the best path avoiding
    ``blocked``. Keeps the old route when the destination is cut off."""
    route = vehicle.route
    here = net.edges[vehicle.edge].dst
    dest = net.edges[route.edges[-1]].dst
    if here == dest:
        return route
    w = dict(weights) if weights is not None else free_flow_weights(net)
    for eid in blocked:
        if eid in w:
            w[eid] = math.inf
    try:
        tail = shortest_path(net, here, dest, w)
    except UnreachableError:
        return route
    new_edges = route.edges[: vehicle.edge_index + 1] + tail.edges
    if new_edges == route.edges:
        return route
    vehicle.route = Route(new_edges)
    vehicle.reroutes += 1
    return vehicle.route


class Communicator:
    """Per-step hook wiring beacons, the radio channel and message handling
    into a :class:`World`."""

    def __init__(
        self,
        net: RoadNetwork,
        rsus: list[Rsu],
        radio: RadioConfig,
        *,
        seed: int = 0,
        interval_s: float = 1.0,
        payload_bytes: int = DEFAULT_PAYLOAD_BYTES,
        max_hops: int = DEFAULT_MAX_HOPS,
        blocked_ttl_s: float = 30.0,
        reroute_enabled: bool = True,
        log_messages: bool = False,
        log_receptions: bool = False,
    ) -> None:
        self.net = net
        self.rsus = rsus
        self.radio = radio
        self.rng = random.Random(seed)
        self.interval_s = interval_s
        self.payload_bytes = payload_bytes
        self.max_hops = max_hops
        self.blocked_ttl_s = blocked_ttl_s
        self.reroute_enabled = reroute_enabled
        self.counters = MessageCounters()
        self.cache = DedupCache()
        self._weights = free_flow_weights(net)
        self._relay_queue: list[Frame] = []
        self._origin_ids: set = set()
        self.message_log: list[tuple] | None = [] if log_messages else None
        self.reception_log: list[tuple] | None = [] if log_receptions else None
        self._rsu_by_id = {r.id: r for r in rsus}
        self.node_ids: set[str] = {r.id for r in rsus}

    def _slots_per_step(self, dt: float) -> int:
        return max(1, int(round(dt / self.radio.slot_s)))

    def on_step(self, world: World) -> None:
        now = world.time_s
        active = sorted(world.active(), key=lambda v: v.id)
        self.node_ids.update(v.id for v in active)
        for v in active:
            if v.known_blocked:
                stale = [e for e, t in v.known_blocked.items() if now - t > self.blocked_ttl_s]
                for e in stale:
                    del v.known_blocked[e]

        frames = list(self._relay_queue)
        self._relay_queue = []
        for v in active:
            f = beacon_due(
                v,
                now,
                self.interval_s,
                payload_bytes=self.payload_bytes,
                pos=world.position(v),
                radio=self.radio,
            )
            if f is not None:
                frames.append(f)
                self.counters.beacons += 1
                if f.msg_id not in self._origin_ids:
                    self._origin_ids.add(f.msg_id)
                    self.counters.distinct += 1
        if not frames:
            return
        self.counters.sent += len(frames)

        n_slots = self._slots_per_step(world.dt)
        slot_of = [self.rng.randrange(n_slots) if n_slots > 1 else 0 for _ in frames]
        rx_ids = [r.id for r in self.rsus] + [v.id for v in active]
        rx_pos = np.array(
            [r.pos for r in self.rsus] + [world.position(v) for v in active], dtype=float
        ).reshape(-1, 2)
        vehicle_of = {v.id: v for v in active}
        wants_reroute: dict[str, VehicleState] = {}

        for slot in sorted(set(slot_of)):
            group = [f for f, s in zip(frames, slot_of) if s == slot]
            codes, dist = verdict_matrix(
                np.array([f.tx_pos for f in group], dtype=float),
                [f.sender for f in group],
                rx_pos,
                rx_ids,
                self.radio,
            )
            c = self.counters
            c.received += int(np.count_nonzero(codes == RECEIVED))
            c.lost_collision += int(np.count_nonzero(codes == LOST_COLLISION))
            c.lost_sensitivity += int(np.count_nonzero(codes == BELOW_SENSITIVITY))
            c.lost_range += int(np.count_nonzero(codes == OUT_OF_RANGE))

            if self.reception_log is not None:
                for i, j in zip(*np.nonzero(codes != SELF)):
                    self.reception_log.append(
                        (now, group[j].sender, rx_ids[i], float(dist[i, j]),
                         CODE_TO_VERDICT[int(codes[i, j])].value)
                    )
            for i, j in zip(*np.nonzero(codes == RECEIVED)):
                rid = rx_ids[i]
                frame = group[j]
                msg: WarningMessage = frame.payload
                if rid in self._rsu_by_id:
                    node = self._rsu_by_id[rid]
                    kind = "rsu"
                else:
                    node = vehicle_of[rid]
                    kind = "vehicle"
                actions = handle_message(node, msg, now, self.net, self.cache, self.max_hops)
                action = actions[0].kind if actions else ActionKind.NONE
                if action is ActionKind.RELAY:
                    relay = actions[0].msg
                    self._relay_queue.append(
                        Frame(relay.msg_id, node.id, node.pos, now + world.dt,
                              airtime_s(relay.payload_bytes, self.radio), relay)
                    )
                    self.counters.relays += 1
                elif action is ActionKind.REROUTE and self.reroute_enabled:
                    wants_reroute[node.id] = node
                if self.message_log is not None:
                    self.message_log.append(
                        (now, f"{msg.msg_id[0]}:{msg.msg_id[1]}", frame.sender, rid, kind,
                         "received", action.value)
                    )

        for vid in sorted(wants_reroute):
            v = wants_reroute[vid]
            if v.status is Status.DRIVING:
                reroute(v, self.net, sorted(v.known_blocked), self._weights)
