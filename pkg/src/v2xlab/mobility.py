"""Microscopic movement: Krauss car following, signals, accident events and
the fixed-step world loop.

Each edge is a single-lane queue. Vehicle ``offset_m`` is the position of the
front bumper measured from the start of the current edge.
"""

from __future__ import annotations

import enum
import logging
import math
import random
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, NamedTuple, Protocol

from .emissions import EmissionCoeffs, co2_rate
from .netgraph import RoadNetwork, Route

log = logging.getLogger(__name__)

DEFAULT_EVENT_WINDOW_S = (153.0, 350.0)
DEFAULT_EVENT_DURATION_S = 300.0


@dataclass(frozen=True)
class VehicleParams:
    accel_mps2: float = 2.6
    decel_mps2: float = 4.5
    tau_s: float = 1.0
    min_gap_m: float = 2.5
    length_m: float = 5.0
    sigma: float = 0.5

    def __post_init__(self) -> None:
        if not (self.accel_mps2 > 0 and self.decel_mps2 > 0 and self.tau_s > 0):
            raise ValueError("accel, decel and tau must be > 0")
        if self.min_gap_m < 0 or not self.length_m > 0:
            raise ValueError("min_gap must be >= 0 and length > 0")
        if not 0.0 <= self.sigma <= 1.0:
            raise ValueError("sigma must lie in [0, 1]")

    @classmethod
    def from_dict(cls, d: Mapping) -> "VehicleParams":
        return cls(**{k: float(v) for k, v in d.items() if k in cls.__dataclass_fields__})


class Status(str, enum.Enum):
    PENDING = "pending"
    DRIVING = "driving"
    HALTED = "halted"
    ARRIVED = "arrived"


@dataclass
class VehicleState:
    id: str
    params: VehicleParams
    route: Route
    depart_s: float = 0.0
    edge_index: int = 0
    offset_m: float = 0.0
    speed_mps: float = 0.0
    status: Status = Status.PENDING
    entry_time_s: float | None = None
    arrival_time_s: float | None = None
    resume_s: float | None = None
    halt_start_s: float | None = None
    blocked_edge: str | None = None
    event_fired: bool = False
    travel_time_s: float = 0.0
    distance_m: float = 0.0
    co2: float = 0.0
    is_test_vehicle: bool = False
    reroutes: int = 0
    # edge id -> last time a warning about it was heard
    known_blocked: dict[str, float] = field(default_factory=dict)

    @property
    def edge(self) -> str:
        return self.route.edges[self.edge_index]

    @property
    def on_network(self) -> bool:
        return self.status in (Status.DRIVING, Status.HALTED)

    def remaining_edges(self) -> tuple[str, ...]:
        """Route edges after the current one."""
        return self.route.edges[self.edge_index + 1 :]


class Leader(NamedTuple):
    gap_m: float
    speed_mps: float


def safe_speed(gap_m: float, leader_speed: float, params: VehicleParams) -> float:
    b, tau = params.decel_mps2, params.tau_s
    g_net = max(0.0, gap_m - params.min_gap_m)
    return -b * tau + math.sqrt((b * tau) ** 2 + leader_speed**2 + 2.0 * b * g_net)


def krauss_step(
    self_speed: float,
    limit: float,
    leader: Leader | None,
    params: VehicleParams,
    dt: float,
    rng: random.Random | None = None,
) -> float:
    """Next speed under the Krauss rule.

    Dawdling needs a random source; without ``rng`` the step is deterministic.
    """
    v_safe = math.inf if leader is None else safe_speed(leader.gap_m, leader.speed_mps, params)
    return _krauss_next(self_speed, limit, v_safe, params, dt, rng)


def _krauss_next(v, limit, v_safe, params, dt, rng) -> float:
    desired = min(v + params.accel_mps2 * dt, v_safe, limit)
    dawdle = 0.0
    if rng is not None and params.sigma > 0:
        dawdle = params.sigma * params.accel_mps2 * dt * rng.random()
    return max(0.0, desired - dawdle)


# --------------------------------------------------------------------- signals


class SignalMode(str, enum.Enum):
    STATIC = "static"
    ACTUATED = "actuated"


@dataclass(frozen=True)
class Phase:
    green_edges: frozenset[str]
    min_green_s: float = 30.0
    max_green_s: float = 60.0
    yellow_s: float = 3.0

    def __post_init__(self) -> None:
        if self.min_green_s > self.max_green_s:
            raise ValueError("min_green_s must not exceed max_green_s")


@dataclass(frozen=True)
class SignalController:
    node: str
    phases: tuple[Phase, ...]
    mode: SignalMode = SignalMode.STATIC
    detector_m: float = 30.0
    gap_s: float = 3.0


@dataclass(frozen=True)
class SignalState:
    phase: int = 0
    since_s: float = 0.0  # start of the current green or yellow interval
    yellow: bool = False
    last_detection_s: float | None = None


def signal_step(
    ctrl: SignalController,
    detections: Mapping[str, bool],
    now: float,
    state: SignalState,
) -> SignalState:
    """Advance the controller to time ``now``.

    Transition times are placed on their exact boundaries (not on ``now``), so
    a static controller follows a fixed timeline for any step length.
    """
    while True:
        ph = ctrl.phases[state.phase]
        if state.yellow:
            end = state.since_s + ph.yellow_s
            if now < end:
                return state
            nxt = (state.phase + 1) % len(ctrl.phases)
            state = SignalState(phase=nxt, since_s=end)
            continue

        if ctrl.mode is SignalMode.STATIC:
            end = state.since_s + ph.min_green_s
            if now < end:
                return state
            state = SignalState(state.phase, end, True)
            continue

        detected = any(detections.get(e, False) for e in ph.green_edges)
        last = state.last_detection_s
        if detected and now < state.since_s + ph.max_green_s:
            last = now
            state = replace(state, last_detection_s=now)
        max_end = state.since_s + ph.max_green_s
        gap_ref = state.since_s + ph.min_green_s
        if last is not None:
            gap_ref = max(gap_ref, last)
        gap_end = gap_ref + ctrl.gap_s
        end = min(max_end, gap_end)
        if now < end:
            return state
        state = SignalState(state.phase, end, True)


def is_green(ctrl: SignalController, state: SignalState, edge_id: str) -> bool:
    return not state.yellow and edge_id in ctrl.phases[state.phase].green_edges


def axis_phases(
    net: RoadNetwork,
    node_id: str,
    min_green_s: float,
    max_green_s: float,
    yellow_s: float,
) -> tuple[Phase, ...]:
    """Two-phase plan grouping approaches by axis (east-west vs north-south)."""
    node = net.nodes[node_id]
    ew, ns = [], []
    for eid in net.in_edges[node_id]:
        src = net.nodes[net.edges[eid].src]
        dx, dy = node.x - src.x, node.y - src.y
        (ew if abs(dx) >= abs(dy) else ns).append(eid)
    groups = [g for g in (ew, ns) if g]
    return tuple(Phase(frozenset(g), min_green_s, max_green_s, yellow_s) for g in groups)


# ---------------------------------------------------------------------- events


@dataclass(frozen=True)
class EventSchedule:
    vehicle: str
    start_offset_s: float
    duration_s: float = DEFAULT_EVENT_DURATION_S
    window_s: tuple[float, float] = DEFAULT_EVENT_WINDOW_S

    def __post_init__(self) -> None:
        lo, hi = self.window_s
        if not lo <= self.start_offset_s <= hi:
            raise ValueError(f"event offset {self.start_offset_s} outside window {self.window_s}")
        if not self.duration_s > 0:
            raise ValueError("event duration must be > 0")


def event_transition(vehicle: VehicleState, sched: EventSchedule, now: float) -> VehicleState:
    """Fire or clear the accident halt for ``vehicle`` at time ``now`` (in place)."""
    if sched.vehicle != vehicle.id:
        raise ValueError("schedule belongs to another vehicle")
    if vehicle.status is Status.HALTED:
        if now >= vehicle.resume_s:
            vehicle.status = Status.DRIVING
            vehicle.resume_s = None
        return vehicle
    if vehicle.status is not Status.DRIVING or vehicle.event_fired:
        return vehicle
    if now >= vehicle.entry_time_s + sched.start_offset_s:
        vehicle.status = Status.HALTED
        vehicle.event_fired = True
        vehicle.halt_start_s = now
        vehicle.resume_s = now + sched.duration_s
        vehicle.speed_mps = 0.0
        vehicle.blocked_edge = vehicle.edge
    return vehicle


# ----------------------------------------------------------------------- world


class StepHook(Protocol):
    def on_step(self, world: "World") -> None: ...


class World:
    """Single-owner simulation state stepped at a fixed interval."""

    def __init__(
        self,
        net: RoadNetwork,
        vehicles: Iterable[VehicleState],
        *,
        dt: float = 1.0,
        events: Mapping[str, EventSchedule] | None = None,
        signals: Mapping[str, SignalController] | None = None,
        emissions: EmissionCoeffs | None = None,
        seed: int = 0,
        hook: StepHook | None = None,
        trace: bool = False,
        check_invariants: bool = True,
    ) -> None:
        if not dt > 0:
            raise ValueError("dt must be > 0")
        self.net = net
        self.dt = dt
        self.time_s = 0.0
        self.vehicles: dict[str, VehicleState] = {}
        for v in sorted(vehicles, key=lambda v: (v.depart_s, v.id)):
            net.check_route(v.route)
            self.vehicles[v.id] = v
        self.events = dict(events or {})
        self.signals = dict(signals or {})
        self.signal_states = {n: SignalState() for n in self.signals}
        self._signal_of_edge: dict[str, str] = {}
        for node, ctrl in self.signals.items():
            for eid in net.in_edges[node]:
                self._signal_of_edge[eid] = node
        self.emissions = emissions or EmissionCoeffs()
        self.rng = random.Random(seed)
        self.hook = hook
        self.check_invariants = check_invariants
        self.trace: list[tuple] | None = [] if trace else None
        self.expected_count = len(self.vehicles)
        self._pending = [v for v in self.vehicles.values() if v.status is Status.PENDING]
        self._lanes: dict[str, list[VehicleState]] = {eid: [] for eid in net.edges}
        self._held: set[str] = set()
        self.min_gap_seen = math.inf
        self.negative_gaps = 0
        self.conservation_ok = True
        self.halts = 0

    # -- queries used by hooks and tests

    def active(self) -> list[VehicleState]:
        return [v for v in self.vehicles.values() if v.on_network]

    def position(self, v: VehicleState) -> tuple[float, float]:
        return self.net.position(v.edge, v.offset_m)

    def status_counts(self) -> dict[Status, int]:
        counts = {s: 0 for s in Status}
        for v in self.vehicles.values():
            counts[v.status] += 1
        return counts

    def done(self) -> bool:
        return all(v.status is Status.ARRIVED for v in self.vehicles.values())

    def place(
        self, vid: str, offset_m: float, speed_mps: float = 0.0, edge_index: int = 0
    ) -> VehicleState:
        """Put a pending vehicle straight onto its route, bypassing the spawn gap check."""
        v = self.vehicles[vid]
        if v.status is not Status.PENDING:
            raise ValueError(f"{vid} is already on the network")
        eid = v.route.edges[edge_index]
        if not 0 <= offset_m <= self.net.edges[eid].length_m:
            raise ValueError("offset outside the edge")
        v.status = Status.DRIVING
        v.edge_index = edge_index
        v.offset_m = offset_m
        v.speed_mps = speed_mps
        v.entry_time_s = self.time_s
        self._pending.remove(v)
        lane = self._lanes[eid]
        lane.append(v)
        lane.sort(key=lambda u: (-u.offset_m, u.id))
        return v

    # -- stepping

    def step(self) -> None:
        now = self.time_s
        self._spawn(now)
        for vid, sched in self.events.items():
            v = self.vehicles.get(vid)
            if v is None:
                continue
            was_halted = v.status is Status.HALTED
            event_transition(v, sched, now)
            if v.status is Status.HALTED and not was_halted:
                self.halts += 1
                log.debug("t=%.0f %s halted on %s", now, vid, v.edge)
        if self.hook is not None:
            self.hook.on_step(self)
        self._update_signals(now)
        new_speed = self._compute_speeds(now)
        self._move(new_speed, now)
        self.time_s = now + self.dt
        if self.check_invariants:
            self._check()

    def run_until(self, t_end: float) -> None:
        while self.time_s < t_end - 1e-9:
            self.step()

    def _spawn(self, now: float) -> None:
        still: list[VehicleState] = []
        for v in self._pending:
            if v.depart_s > now + 1e-9:
                still.append(v)
                continue
            lane = self._lanes[v.route.edges[0]]
            edge_len = self.net.edges[v.route.edges[0]].length_m
            front = min(v.params.length_m, edge_len)
            if lane:
                rear = lane[-1]
                if rear.offset_m - rear.params.length_m - front < v.params.min_gap_m:
                    still.append(v)
                    continue
            v.status = Status.DRIVING
            v.edge_index = 0
            v.offset_m = front
            v.speed_mps = 0.0
            v.entry_time_s = now
            lane.append(v)
        self._pending = still

    def _update_signals(self, now: float) -> None:
        for node, ctrl in self.signals.items():
            det = {}
            if ctrl.mode is SignalMode.ACTUATED:
                for eid in self.net.in_edges[node]:
                    length = self.net.edges[eid].length_m
                    det[eid] = any(length - v.offset_m <= ctrl.detector_m for v in self._lanes[eid])
            self.signal_states[node] = signal_step(ctrl, det, now, self.signal_states[node])

    def _must_stop(self, v: VehicleState, rem: float) -> bool:
        node = self._signal_of_edge.get(v.edge)
        if node is None:
            return False
        ctrl, st = self.signals[node], self.signal_states[node]
        if v.edge not in ctrl.phases[st.phase].green_edges:
            return True
        if st.yellow:
            return rem >= v.speed_mps**2 / (2 * v.params.decel_mps2)
        return False

    def _compute_speeds(self, now: float) -> dict[str, float]:
        dt = self.dt
        # vehicles that must not leave their edge this step
        self._held = set()
        new_speed: dict[str, float] = {}
        pred: dict[str, VehicleState | None] = {}
        for lane in self._lanes.values():
            for i, v in enumerate(lane):
                pred[v.id] = lane[i - 1] if i else None
                if v.status is Status.HALTED:
                    new_speed[v.id] = 0.0

        edges = self.net.edges
        stop: dict[str, bool] = {}
        candidates: dict[str, list[VehicleState]] = {}
        for lane in self._lanes.values():
            for v in lane:
                if v.status is not Status.DRIVING or v.edge_index + 1 >= len(v.route):
                    continue
                rem = edges[v.edge].length_m - v.offset_m
                stop[v.id] = self._must_stop(v, rem)
                reach = (v.speed_mps + v.params.accel_mps2 * dt) * dt
                if not stop[v.id] and reach >= rem:
                    candidates.setdefault(v.route.edges[v.edge_index + 1], []).append(v)
        prev_cand: dict[str, VehicleState] = {}
        cand_ids = {c.id for cs in candidates.values() for c in cs}
        for target, cs in candidates.items():
            cs.sort(key=lambda c: (edges[c.edge].length_m - c.offset_m, c.id))
            for a, b in zip(cs, cs[1:]):
                prev_cand[b.id] = a
        # latest vehicle granted entry into each edge this step: (vehicle, remaining at start)
        entered: dict[str, tuple[VehicleState, float]] = {}

        def deps(v: VehicleState) -> list[VehicleState]:
            out = []
            p = pred[v.id]
            if p is not None:
                out.append(p)
            if v.edge_index + 1 < len(v.route):
                lane = self._lanes[v.route.edges[v.edge_index + 1]]
                if lane:
                    out.append(lane[-1])
            pc = prev_cand.get(v.id)
            if pc is not None:
                out.append(pc)
            return out

        def compute(v: VehicleState) -> None:
            p = v.params
            e = edges[v.edge]
            rem = e.length_m - v.offset_m
            v_safe = math.inf
            leader = pred[v.id]
            if leader is not None:
                gap = leader.offset_m - leader.params.length_m - v.offset_m
                v_safe = min(v_safe, safe_speed(gap, new_speed.get(leader.id, 0.0), p))
            if v.edge_index + 1 < len(v.route):
                target = v.route.edges[v.edge_index + 1]
                blocked = stop.get(v.id, False)
                lane = self._lanes[target]
                if not blocked and lane:
                    r = lane[-1]
                    gap = rem + r.offset_m - r.params.length_m
                    if gap < 0:
                        blocked = True
                    else:
                        v_safe = min(v_safe, safe_speed(gap, new_speed.get(r.id, 0.0), p))
                pc = prev_cand.get(v.id)
                if not blocked and pc is not None and pc.id not in new_speed:
                    blocked = True  # priority vehicle unresolved (dependency cycle)
                if not blocked and target in entered:
                    c, c_rem = entered[target]
                    gap = rem - c_rem - c.params.length_m
                    if gap < 0:
                        blocked = True
                    else:
                        v_safe = min(v_safe, safe_speed(gap, new_speed[c.id], p))
                if blocked:
                    v_safe = min(v_safe, safe_speed(rem + p.min_gap_m, 0.0, p))
                    self._held.add(v.id)
            nv = _krauss_next(v.speed_mps, e.speed_limit_mps, v_safe, p, dt, self.rng)
            new_speed[v.id] = nv
            if v.id in cand_ids and nv * dt >= rem:
                entered[v.route.edges[v.edge_index + 1]] = (v, rem)

        # Leaders first; an unresolved leader (cycle) is assumed to stop.
        state: dict[str, int] = {}
        order = sorted(
            (v for v in self.active() if v.status is Status.DRIVING),
            key=lambda v: (edges[v.edge].length_m - v.offset_m, v.id),
        )
        for root in order:
            if root.id in state:
                continue
            stack = [(root, iter(deps(root)))]
            state[root.id] = 1
            while stack:
                v, it = stack[-1]
                nxt = None
                for d in it:
                    if d.status is Status.DRIVING and d.id not in state:
                        nxt = d
                        break
                if nxt is not None:
                    state[nxt.id] = 1
                    stack.append((nxt, iter(deps(nxt))))
                    continue
                stack.pop()
                compute(v)
                state[v.id] = 2
        return new_speed

    def _move(self, new_speed: dict[str, float], now: float) -> None:
        dt = self.dt
        edges = self.net.edges
        moved: list[VehicleState] = []
        for v in self.active():
            old = v.speed_mps
            nv = new_speed.get(v.id, 0.0) if v.status is Status.DRIVING else 0.0
            advance = nv * dt
            e = edges[v.edge]
            before = v.offset_m
            dist = advance
            if v.status is Status.DRIVING:
                new_off = before + advance
                if v.id in self._held and new_off >= e.length_m:
                    # the stop line is approached asymptotically; never cross it
                    new_off = e.length_m
                    dist = new_off - before
                elif new_off >= e.length_m:
                    if v.edge_index + 1 >= len(v.route):
                        dist = e.length_m - before
                        new_off = e.length_m
                        v.status = Status.ARRIVED
                        v.arrival_time_s = now + dt
                    else:
                        v.edge_index += 1
                        nxt_len = edges[v.edge].length_m
                        over = new_off - e.length_m
                        if over > nxt_len:
                            dist -= over - nxt_len
                            over = nxt_len
                        new_off = over
                v.offset_m = new_off
            v.speed_mps = nv
            v.travel_time_s += dt
            v.distance_m += dist
            v.co2 += co2_rate(nv, (nv - old) / dt, self.emissions) * dt
            moved.append(v)
        for lane in self._lanes.values():
            lane.clear()
        for v in moved:
            if v.status is not Status.ARRIVED:
                self._lanes[v.edge].append(v)
        for lane in self._lanes.values():
            lane.sort(key=lambda v: (-v.offset_m, v.id))
        if self.trace is not None:
            t = now + dt
            for v in sorted(moved, key=lambda v: v.id):
                edge = v.edge if v.status is not Status.ARRIVED else ""
                self.trace.append((t, v.id, edge, v.offset_m, v.speed_mps, v.status.value))

    def _check(self) -> None:
        for lane in self._lanes.values():
            for a, b in zip(lane, lane[1:]):
                gap = a.offset_m - a.params.length_m - b.offset_m
                if gap < self.min_gap_seen:
                    self.min_gap_seen = gap
                if gap < -1e-9:
                    self.negative_gaps += 1
        counts = self.status_counts()
        occupied = sum(len(lane) for lane in self._lanes.values())
        total = sum(counts.values())
        if (
            total != self.expected_count
            or occupied != counts[Status.DRIVING] + counts[Status.HALTED]
        ):
            self.conservation_ok = False


def advance_world(world: World, dt: float | None = None) -> World:
    if dt is not None and dt != world.dt:
        raise ValueError("world step length is fixed at construction")
    world.step()
    return world
