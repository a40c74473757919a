import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from v2xlab.mobility import (
    EventSchedule,
    Leader,
    Phase,
    SignalController,
    SignalMode,
    SignalState,
    Status,
    VehicleParams,
    VehicleState,
    World,
    advance_world,
    axis_phases,
    event_transition,
    is_green,
    krauss_step,
    safe_speed,
    signal_step,
)
from v2xlab.netgraph import Edge, Node, RoadNetwork, Route, free_flow_weights, grid_network, shortest_path

P0 = VehicleParams(sigma=0.0)


def _v_safe_oracle(gap, v_lead, b=4.5, tau=1.0, min_gap=2.5):
    g = max(0.0, gap - min_gap)
    return -b * tau + math.sqrt((b * tau) ** 2 + v_lead**2 + 2 * b * g)


def line_net(n_edges=1, length=100.0, speed=13.9):
    nodes = [Node(f"p{i}", i * length, 0.0) for i in range(n_edges + 1)]
    edges = [Edge(f"e{i}", f"p{i}", f"p{i+1}", length, speed) for i in range(n_edges)]
    return RoadNetwork.build(nodes, edges)


# ----------------------------------------------------------------- car following


def test_standstill_leader_at_min_gap():
    assert safe_speed(2.5, 0.0, P0) == 0.0
    assert krauss_step(5.0, 13.9, Leader(2.5, 0.0), P0, 1.0) == 0.0


def test_free_acceleration():
    assert krauss_step(10.0, 13.9, None, P0, 1.0) == pytest.approx(12.6)


def test_following_example():
    assert safe_speed(30.0, 8.0, P0) == pytest.approx(13.714, abs=1e-3)
    assert safe_speed(30.0, 8.0, P0) == pytest.approx(_v_safe_oracle(30.0, 8.0))
    assert krauss_step(10.0, 13.9, Leader(30.0, 8.0), P0, 1.0) == pytest.approx(12.6)


def test_limit_caps_speed():
    assert krauss_step(13.5, 13.9, None, P0, 1.0) == 13.9


@given(
    st.floats(0, 30),
    st.floats(1, 30),
    st.one_of(st.none(), st.tuples(st.floats(0, 200), st.floats(0, 30))),
    st.floats(0, 1),
    st.integers(0, 1000),
)
def test_krauss_bounds(v, limit, leader, sigma, seed):
    p = VehicleParams(sigma=sigma)
    lead = Leader(*leader) if leader else None
    nv = krauss_step(v, limit, lead, p, 1.0, random.Random(seed))
    assert 0.0 <= nv <= min(v + p.accel_mps2, limit) + 1e-12


@given(st.floats(0, 200), st.floats(0, 30))
def test_safe_speed_matches_oracle(gap, v_lead):
    assert safe_speed(gap, v_lead, P0) == pytest.approx(_v_safe_oracle(gap, v_lead), rel=1e-12, abs=1e-12)


def test_params_validation():
    with pytest.raises(ValueError):
        VehicleParams(sigma=1.5)
    with pytest.raises(ValueError):
        VehicleParams(accel_mps2=0)
    with pytest.raises(ValueError):
        VehicleParams(min_gap_m=-1)


# ---------------------------------------------------------------------- signals


def _two_phase(mode, min_g=30.0, max_g=60.0, yellow=3.0, gap=3.0):
    phases = (Phase(frozenset({"ew"}), min_g, max_g, yellow), Phase(frozenset({"ns"}), min_g, max_g, yellow))
    return SignalController("x", phases, mode, 30.0, gap)


def _run_signal(ctrl, detect, t_end, dt=1.0):
    st_ = SignalState()
    history = []
    t = 0.0
    while t <= t_end:
        st_ = signal_step(ctrl, detect(t, st_), t, st_)
        history.append((t, st_.phase, st_.yellow))
        t += dt
    return history


def test_static_timeline():
    ctrl = _two_phase(SignalMode.STATIC)
    hist = dict((t, (ph, y)) for t, ph, y in _run_signal(ctrl, lambda t, s: {}, 80))
    assert hist[29.0] == (0, False)
    assert hist[31.0] == (0, True)
    assert hist[33.0] == (1, False)
    assert hist[66.0] == (0, False)


def test_actuated_holds_until_max_green():
    ctrl = _two_phase(SignalMode.ACTUATED)
    hist = _run_signal(ctrl, lambda t, s: {"ew": True, "ns": True}, 70)
    first_yellow = next(t for t, ph, y in hist if y)
    assert first_yellow == 60.0


def test_actuated_gaps_out_after_min_green():
    ctrl = _two_phase(SignalMode.ACTUATED, gap=3.0)
    hist = _run_signal(ctrl, lambda t, s: {}, 70)
    first_yellow = next(t for t, ph, y in hist if y)
    assert first_yellow == 33.0  # min_green + gap_s


def test_actuated_gap_counts_from_last_detection():
    ctrl = _two_phase(SignalMode.ACTUATED, gap=3.0)
    hist = _run_signal(ctrl, lambda t, s: {"ew": t <= 40}, 70)
    first_yellow = next(t for t, ph, y in hist if y)
    assert first_yellow == 43.0


def test_green_only_for_served_edges():
    ctrl = _two_phase(SignalMode.STATIC)
    s = SignalState()
    assert is_green(ctrl, s, "ew") and not is_green(ctrl, s, "ns")
    assert not is_green(ctrl, SignalState(0, 30.0, True), "ew")


def test_axis_phases_cover_every_approach():
    net = grid_network(3, 3, 100, 10, 1)
    node = net.signalized_nodes()[0]
    phases = axis_phases(net, node, 10, 20, 3)
    covered = set().union(*(p.green_edges for p in phases))
    assert covered == set(net.in_edges[node])
    assert len(phases) == 2


def test_phase_validation():
    with pytest.raises(ValueError):
        Phase(frozenset({"a"}), 40.0, 30.0)


# ----------------------------------------------------------------------- events


def _driving(vid="ev", entry=100.0):
    v = VehicleState(vid, P0, Route(("e0", "e1", "e2")))
    v.status = Status.DRIVING
    v.entry_time_s = entry
    return v


def test_event_halts_for_duration():
    v = _driving()
    sched = EventSchedule("ev", 200.0, 300.0)
    event_transition(v, sched, 299.0)
    assert v.status is Status.DRIVING
    event_transition(v, sched, 300.0)
    assert v.status is Status.HALTED and v.speed_mps == 0.0 and v.resume_s == 600.0
    event_transition(v, sched, 599.0)
    assert v.status is Status.HALTED
    event_transition(v, sched, 600.0)
    assert v.status is Status.DRIVING
    event_transition(v, sched, 700.0)
    assert v.status is Status.DRIVING  # fires once


def test_event_window_lower_bound():
    v = _driving(entry=0.0)
    sched = EventSchedule("ev", 153.0)
    event_transition(v, sched, 152.0)
    assert v.status is Status.DRIVING
    event_transition(v, sched, 153.0)
    assert v.status is Status.HALTED and v.halt_start_s == 153.0
    assert v.blocked_edge == "e0"


def test_arrived_vehicle_never_halts():
    v = _driving()
    v.status = Status.ARRIVED
    event_transition(v, EventSchedule("ev", 160.0), 400.0)
    assert v.status is Status.ARRIVED


def test_schedule_validation():
    with pytest.raises(ValueError):
        EventSchedule("x", 100.0)
    with pytest.raises(ValueError):
        EventSchedule("x", 200.0, 0.0)
    with pytest.raises(ValueError):
        event_transition(_driving("a"), EventSchedule("b", 200.0), 0.0)


# ------------------------------------------------------------------------ world


def test_empty_world_advances_clock():
    w = World(line_net(), [], dt=1.0)
    advance_world(w)
    assert w.time_s == 1.0


def test_cruising_vehicle_moves_exactly_its_speed():
    net = line_net(length=100.0, speed=10.0)
    w = World(net, [VehicleState("a", P0, Route(("e0",)))])
    v = w.place("a", 20.0, 10.0)
    advance_world(w)
    assert v.offset_m == pytest.approx(30.0)
    assert v.distance_m == pytest.approx(10.0)


def test_follower_stops_behind_halted_vehicle():
    net = line_net(n_edges=1, length=600.0)
    lead = VehicleState("lead", P0, Route(("e0",)))
    foll = VehicleState("foll", P0, Route(("e0",)))
    sched = EventSchedule("lead", 0.0, 300.0, (0.0, 10.0))
    w = World(net, [lead, foll], events={"lead": sched})
    w.place("lead", 400.0, 0.0)
    w.place("foll", 20.0, 13.9)
    w.run_until(200.0)
    assert lead.status is Status.HALTED
    gap = lead.offset_m - lead.params.length_m - foll.offset_m
    assert foll.speed_mps == 0.0
    assert gap == pytest.approx(P0.min_gap_m, abs=0.1)
    assert w.negative_gaps == 0


def test_halted_vehicle_does_not_move():
    net = line_net(n_edges=1, length=600.0)
    v = VehicleState("h", VehicleParams(), Route(("e0",)))
    w = World(net, [v], events={"h": EventSchedule("h", 5.0, 50.0, (0.0, 10.0))}, trace=True)
    w.run_until(80.0)
    halted = [rec for rec in w.trace if rec[5] == "halted"]
    assert len({rec[3] for rec in halted}) == 1
    assert all(rec[4] == 0.0 for rec in halted)
    assert w.halts == 1


def test_red_light_stops_vehicle_at_stop_line():
    net = grid_network(3, 3, 100.0, 13.9, 1)
    node = net.signalized_nodes()[0]
    phases = axis_phases(net, node, 200.0, 200.0, 3.0)
    ctrl = SignalController(node, phases, SignalMode.STATIC)
    w_ = free_flow_weights(net)
    # approach from the south: served by the second (north-south) phase, so red
    route = shortest_path(net, "n00_01", "n02_01", w_)
    v = VehicleState("a", P0, route)
    w = World(net, [v], signals={node: ctrl})
    w.run_until(100.0)
    assert v.edge == route.edges[0]
    assert v.speed_mps == 0.0
    assert 100.0 - v.offset_m <= P0.min_gap_m + 0.1


def _random_grid_world(seed, sigma, n=60, t_end=400.0, signals=True):
    net = grid_network(5, 5, 120.0, 13.9, 2)
    rng = random.Random(seed)
    w_ = free_flow_weights(net)
    ids = sorted(net.nodes)
    params = VehicleParams(sigma=sigma)
    vehicles = []
    for i in range(n):
        o, d = rng.sample(ids, 2)
        vehicles.append(VehicleState(f"v{i:03d}", params, shortest_path(net, o, d, w_), depart_s=rng.uniform(0, 200)))
    ctrls = {}
    if signals:
        for node in net.signalized_nodes():
            ctrls[node] = SignalController(node, axis_phases(net, node, 15, 40, 3), SignalMode.ACTUATED, 30, 2)
    events = {"v000": EventSchedule("v000", 10.0, 100.0, (0.0, 20.0))}
    return World(net, vehicles, events=events, signals=ctrls, seed=seed, trace=True), t_end


@pytest.mark.parametrize("sigma", [0.0, 0.5, 1.0])
@pytest.mark.parametrize("seed", range(20))
def test_no_collisions_on_desk_grid(seed, sigma):
    w, t_end = _random_grid_world(seed, sigma)
    counts = []
    while w.time_s < t_end:
        w.step()
        counts.append(sum(w.status_counts().values()))
        for v in w.active():
            assert 0.0 <= v.offset_m <= w.net.edges[v.edge].length_m + 1e-9
            assert 0.0 <= v.speed_mps <= w.net.edges[v.edge].speed_limit_mps + 1e-9
            if v.status is Status.HALTED:
                assert v.speed_mps == 0.0
    assert w.negative_gaps == 0
    assert w.min_gap_seen >= 0
    assert w.conservation_ok
    assert set(counts) == {len(w.vehicles)}


def test_accumulators_nondecreasing():
    w, t_end = _random_grid_world(3, 0.5, t_end=200.0)
    prev = {}
    while w.time_s < t_end:
        w.step()
        for vid, v in w.vehicles.items():
            cur = (v.travel_time_s, v.distance_m, v.co2)
            if vid in prev:
                assert all(c >= p for c, p in zip(cur, prev[vid]))
            prev[vid] = cur


def test_trajectory_is_deterministic():
    a, t = _random_grid_world(11, 0.5, t_end=150.0)
    b, _ = _random_grid_world(11, 0.5, t_end=150.0)
    a.run_until(t)
    b.run_until(t)
    assert a.trace == b.trace
    assert len(a.trace) > 0


def test_vehicles_eventually_arrive():
    w, _ = _random_grid_world(5, 0.0, n=20, signals=False)
    w.events.clear()
    w.run_until(800.0)
    assert w.done()
    for v in w.vehicles.values():
        assert v.arrival_time_s is not None
        length = sum(w.net.edges[e].length_m for e in v.route.edges)
        # spawn puts the front bumper one vehicle length into the first edge
        assert v.distance_m == pytest.approx(length - v.params.length_m)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_spawn_respects_min_gap(seed):
    net = line_net(n_edges=2, length=200.0)
    params = VehicleParams(sigma=0.5)
    vs = [VehicleState(f"v{i}", params, Route(("e0", "e1")), depart_s=0.0) for i in range(6)]
    w = World(net, vs, seed=seed)
    w.run_until(60.0)
    assert w.negative_gaps == 0
    assert all(v.entry_time_s is not None for v in vs)
