"""Scenario assembly, the run loop and the communication-range sweep."""

from __future__ import annotations

import functools
import logging
import math
import os
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

from ..mobility import EventSchedule, SignalController, Status, VehicleState, World, axis_phases
from ..netgraph import (
    NetworkError,
    RoadNetwork,
    free_flow_weights,
    grid_network,
    load_network,
    shortest_path,
)
from ..protocol import Communicator
from .config import BaselinePolicy, ConfigError, Mode, NetworkSpec, ScenarioConfig
from .placement import place_rsus

log = logging.getLogger(__name__)

TEST_VEHICLE_STREAM = "test-vehicles"
MPS_TO_MPH = 3600.0 / 1609.344


@dataclass(frozen=True)
class VehicleRecord:
    id: str
    travel_time_s: float
    distance_m: float
    mean_speed: float
    co2_total: float
    reroutes: int
    is_test_vehicle: bool
    is_event_vehicle: bool
    arrived: bool


@dataclass(frozen=True)
class Aggregates:
    avg_time: float
    avg_distance: float
    avg_speed: float
    avg_co2: float
    n: int

    @classmethod
    def of(cls, records: list[VehicleRecord]) -> "Aggregates":
        n = len(records)
        if n == 0:
            return cls(0.0, 0.0, 0.0, 0.0, 0)
        return cls(
            sum(r.travel_time_s for r in records) / n,
            sum(r.distance_m for r in records) / n,
            sum(r.mean_speed for r in records) / n,
            sum(r.co2_total for r in records) / n,
            n,
        )

    @classmethod
    def mean(cls, aggs: list["Aggregates"]) -> "Aggregates":
        k = len(aggs)
        return cls(
            sum(a.avg_time for a in aggs) / k,
            sum(a.avg_distance for a in aggs) / k,
            sum(a.avg_speed for a in aggs) / k,
            sum(a.avg_co2 for a in aggs) / k,
            sum(a.n for a in aggs) // k,
        )

    @property
    def avg_speed_mph(self) -> float:
        return self.avg_speed * MPS_TO_MPH


@dataclass
class RunReport:
    mode: str
    range_m: float | None
    seed: int
    per_vehicle: list[VehicleRecord]
    aggregates: Aggregates
    message_counters: dict[str, int]
    halts: int
    node_count: int
    min_gap_m: float
    negative_gaps: int
    conservation_ok: bool
    config: dict
    message_log: list[tuple] | None = field(default=None, repr=False)
    reception_log: list[tuple] | None = field(default=None, repr=False)
    trajectory: list[tuple] | None = field(default=None, repr=False)

    @property
    def label(self) -> str:
        if self.mode == Mode.CONNECTED.value:
            return f"connected_r{self.range_m:g}_s{self.seed}"
        return f"{self.mode}_s{self.seed}"

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "range_m": self.range_m,
            "seed": self.seed,
            "aggregates": asdict(self.aggregates),
            "message_counters": self.message_counters,
            "halts": self.halts,
            "node_count": self.node_count,
            "min_gap_m": self.min_gap_m if math.isfinite(self.min_gap_m) else None,
            "negative_gaps": self.negative_gaps,
            "conservation_ok": self.conservation_ok,
            "per_vehicle": [asdict(r) for r in self.per_vehicle],
            "config": self.config,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunReport":
        gap = d.get("min_gap_m")
        return cls(
            mode=d["mode"],
            range_m=d["range_m"],
            seed=d["seed"],
            per_vehicle=[VehicleRecord(**r) for r in d["per_vehicle"]],
            aggregates=Aggregates(**d["aggregates"]),
            message_counters=dict(d["message_counters"]),
            halts=d["halts"],
            node_count=d["node_count"],
            min_gap_m=math.inf if gap is None else gap,
            negative_gaps=d["negative_gaps"],
            conservation_ok=d["conservation_ok"],
            config=d["config"],
        )


@dataclass
class SweepReport:
    """Connected runs keyed by (range, seed) plus baselines keyed by (mode, seed)."""

    runs: dict[tuple[float, int], RunReport]
    baselines: dict[tuple[str, int], RunReport]
    ranges: tuple[float, ...]
    seeds: tuple[int, ...]

    def range_aggregates(self, range_m: float) -> Aggregates:
        return Aggregates.mean([self.runs[(range_m, s)].aggregates for s in self.seeds])

    def baseline_seeds(self, mode: str) -> list[int]:
        return sorted(s for m, s in self.baselines if m == mode)

    def baseline_aggregates(self, mode: str) -> Aggregates:
        seeds = self.baseline_seeds(mode)
        return Aggregates.mean([self.baselines[(mode, s)].aggregates for s in seeds])

    def range_counter(self, range_m: float, key: str) -> float:
        return sum(self.runs[(range_m, s)].message_counters[key] for s in self.seeds) / len(
            self.seeds
        )

    @property
    def rankings(self) -> list[float]:
        """Ranges from best to worst mean travel time; ties go to the smaller range."""
        return sorted(self.ranges, key=lambda r: (self.range_aggregates(r).avg_time, r))

    def all_reports(self) -> list[RunReport]:
        out = [self.runs[(r, s)] for r in self.ranges for s in self.seeds]
        for mode in (Mode.BEST.value, Mode.WORST.value):
            out += [self.baselines[(mode, s)] for s in self.baseline_seeds(mode)]
        return out

    @classmethod
    def from_reports(cls, reports: list[RunReport]) -> "SweepReport":
        runs, baselines = {}, {}
        for r in reports:
            if r.mode == Mode.CONNECTED.value:
                runs[(float(r.range_m), r.seed)] = r
            else:
                baselines[(r.mode, r.seed)] = r
        ranges = tuple(sorted({k[0] for k in runs}))
        seeds = tuple(sorted({k[1] for k in runs}))
        missing = [(a, s) for a in ranges for s in seeds if (a, s) not in runs]
        if missing:
            raise ConfigError(f"sweep is missing runs for {missing}")
        return cls(runs, baselines, ranges, seeds)


# ------------------------------------------------------------------ assembly


@functools.lru_cache(maxsize=8)
def _build_network(spec: NetworkSpec, base_dir: str) -> RoadNetwork:
    if spec.path is not None:
        path = Path(spec.path)
        if not path.is_absolute():
            path = Path(base_dir) / path
        try:
            with open(path, "rb") as fh:
                return load_network(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read network {path}: {exc}") from exc
    return grid_network(spec.rows, spec.cols, spec.block_m, spec.speed_mps, spec.signal_stride)


def build_network(cfg: ScenarioConfig) -> RoadNetwork:
    return _build_network(cfg.network, cfg.base_dir)


def _fringe(net: RoadNetwork) -> list[str]:
    degree = {n: len(net.out_edges[n]) + len(net.in_edges[n]) for n in net.nodes}
    top = max(degree.values())
    fringe = sorted(n for n, d in degree.items() if d < top)
    return fringe or sorted(net.nodes)


class _Router:
    def __init__(self, net: RoadNetwork):
        self.net = net
        self.w = free_flow_weights(net)
        self.cache: dict[tuple[str, str], object] = {}

    def route(self, o: str, d: str):
        key = (o, d)
        if key not in self.cache:
            try:
                self.cache[key] = shortest_path(self.net, o, d, self.w)
            except NetworkError:
                self.cache[key] = None
        return self.cache[key]

    def free_flow(self, route) -> float:
        return sum(self.w[e] for e in route.edges)


def _draw_trip(rng, nodes, net, router, min_trip_m, tries=1000):
    for _ in range(tries):
        o, d = rng.sample(nodes, 2)
        a, b = net.nodes[o], net.nodes[d]
        if math.hypot(a.x - b.x, a.y - b.y) < min_trip_m:
            continue
        r = router.route(o, d)
        if r is not None:
            return r
    raise ConfigError("could not draw a routable trip; check min_trip_m and connectivity")


def build_vehicles(cfg: ScenarioConfig, net: RoadNetwork) -> tuple[list[VehicleState], dict]:
    """Demand and event schedule for one seed. Identical across modes and ranges."""
    router = _Router(net)
    nodes = _fringe(net) if cfg.fringe_trips else sorted(net.nodes)
    params = cfg.vehicle_params
    vehicles: list[VehicleState] = []

    test_rng = random.Random(TEST_VEHICLE_STREAM)
    n_test = max(cfg.n_test_vehicles, len(cfg.test_vehicles))
    for i in range(n_test):
        if i < len(cfg.test_vehicles):
            spec = cfg.test_vehicles[i]
            route = router.route(spec.origin, spec.destination)
            if route is None:
                raise ConfigError(f"test vehicle {i}: no route {spec.origin} -> {spec.destination}")
            depart = spec.depart_s
        else:
            route = _draw_trip(test_rng, nodes, net, router, cfg.min_trip_m)
            depart = test_rng.uniform(0.0, cfg.spawn_window)
        vehicles.append(
            VehicleState(f"test{i:02d}", params, route, depart_s=depart, is_test_vehicle=True)
        )

    rng = random.Random(f"{cfg.seed}/demand")
    for i in range(cfg.n_vehicles - n_test):
        route = _draw_trip(rng, nodes, net, router, cfg.min_trip_m)
        depart = rng.uniform(0.0, cfg.spawn_window)
        vehicles.append(VehicleState(f"veh{i:04d}", params, route, depart_s=depart))

    events: dict[str, EventSchedule] = {}
    if cfg.n_event_vehicles:
        erng = random.Random(f"{cfg.seed}/events")
        pool = [v for v in vehicles if not v.is_test_vehicle]
        erng.shuffle(pool)
        lo, hi = cfg.event_window_s
        for v in pool:
            if len(events) == cfg.n_event_vehicles:
                break
            offset = float(erng.randint(int(math.ceil(lo)), int(math.floor(hi))))
            first = net.edges[v.route.edges[0]]
            ahead = router.free_flow(v.route) - params.length_m / first.speed_limit_mps
            # The halt must fall before the vehicle can possibly arrive and
            # the whole event must fit inside the run.
            if offset + cfg.dt_s >= ahead:
                continue
            if v.depart_s + offset + cfg.event_duration_s > cfg.duration_s:
                continue
            events[v.id] = EventSchedule(v.id, offset, cfg.event_duration_s, cfg.event_window_s)
        if len(events) < cfg.n_event_vehicles:
            raise ConfigError(
                f"only {len(events)} vehicles can host an event; "
                "lengthen trips or shrink the event window"
            )
    return vehicles, events


def build_signals(cfg: ScenarioConfig, net: RoadNetwork) -> dict[str, SignalController]:
    t = cfg.signals
    out = {}
    for node in net.signalized_nodes():
        phases = axis_phases(net, node, t.min_green_s, t.max_green_s, t.yellow_s)
        if phases:
            out[node] = SignalController(node, phases, cfg.effective_signal_mode, t.detector_m, t.gap_s)
    return out


def run_scenario(
    cfg: ScenarioConfig,
    *,
    logs: bool = False,
    trace: bool = False,
) -> RunReport:
    """Execute one full run. Same config and seed give the same report."""
    cfg.validate()
    net = build_network(cfg)
    vehicles, events = build_vehicles(cfg, net)
    if not cfg.events_enabled:
        events = {}
    radio = cfg.radio.with_range(cfg.range_m)

    hook = None
    rsus = []
    if cfg.comm_enabled and cfg.n_rsus > 0:
        rsus = place_rsus(net, cfg.n_rsus, radio.range_m, cfg.seed)
    if cfg.comm_enabled:
        hook = Communicator(
            net,
            rsus,
            radio,
            seed=random.Random(f"{cfg.seed}/radio").getrandbits(32),
            interval_s=cfg.beacon_interval_s,
            payload_bytes=cfg.payload_bytes,
            max_hops=cfg.max_hops,
            blocked_ttl_s=cfg.blocked_ttl_s,
            log_messages=logs,
            log_receptions=logs,
        )
    world = World(
        net,
        vehicles,
        dt=cfg.dt_s,
        events=events,
        signals=build_signals(cfg, net),
        emissions=cfg.emissions,
        seed=random.Random(f"{cfg.seed}/driver").getrandbits(32),
        hook=hook,
        trace=trace,
    )
    world.run_until(cfg.duration_s)

    records = []
    for v in world.vehicles.values():
        if v.entry_time_s is None:
            continue
        records.append(
            VehicleRecord(
                id=v.id,
                travel_time_s=v.travel_time_s,
                distance_m=v.distance_m,
                mean_speed=v.distance_m / v.travel_time_s if v.travel_time_s > 0 else 0.0,
                co2_total=v.co2,
                reroutes=v.reroutes,
                is_test_vehicle=v.is_test_vehicle,
                is_event_vehicle=v.id in events,
                arrived=v.status is Status.ARRIVED,
            )
        )
    records.sort(key=lambda r: r.id)
    counters = hook.counters.as_dict() if hook else {
        "sent": 0, "received": 0, "lost_collision": 0, "lost_sensitivity": 0,
        "lost_range": 0, "beacons": 0, "relays": 0, "distinct": 0,
    }
    report = RunReport(
        mode=cfg.mode.value,
        range_m=cfg.range_m if cfg.mode is Mode.CONNECTED else None,
        seed=cfg.seed,
        per_vehicle=records,
        aggregates=Aggregates.of(records),
        message_counters=counters,
        halts=world.halts,
        node_count=len(rsus) + len(world.vehicles),
        min_gap_m=world.min_gap_seen,
        negative_gaps=world.negative_gaps,
        conservation_ok=world.conservation_ok,
        config=cfg.echo(),
        message_log=hook.message_log if hook else None,
        reception_log=hook.reception_log if hook else None,
        trajectory=world.trace,
    )
    log.info(
        "%s: avg_time=%.1f s, sent=%d, received=%d",
        report.label, report.aggregates.avg_time, counters["sent"], counters["received"],
    )
    return report


def sweep_configs(
    cfg: ScenarioConfig,
    ranges: list[float] | tuple[float, ...],
    seeds: list[int] | tuple[int, ...],
    baselines: BaselinePolicy | None = None,
) -> list[ScenarioConfig]:
    if not ranges or not seeds:
        raise ConfigError("sweep needs at least one range and one seed")
    policy = baselines or cfg.sweep.baselines
    jobs = [
        cfg.with_(mode=Mode.CONNECTED, range_m=float(r), seed=int(s))
        for r in ranges
        for s in seeds
    ]
    base_seeds = seeds if policy is BaselinePolicy.PER_SEED else seeds[:1]
    for mode in (Mode.BEST, Mode.WORST):
        jobs += [cfg.with_(mode=mode, seed=int(s)) for s in base_seeds]
    return jobs


def sweep(
    cfg: ScenarioConfig,
    ranges: list[float] | tuple[float, ...] | None = None,
    seeds: list[int] | tuple[int, ...] | None = None,
    *,
    jobs: int | None = None,
    baselines: BaselinePolicy | None = None,
) -> SweepReport:
    """Connected runs for every (range, seed) plus BestCase/WorstCase baselines.

    Runs may execute in parallel; assembly order is fixed by (range, seed).
    """
    ranges = tuple(float(r) for r in (ranges if ranges is not None else cfg.sweep.ranges))
    seeds = tuple(int(s) for s in (seeds if seeds is not None else cfg.sweep.seeds))
    configs = sweep_configs(cfg, ranges, seeds, baselines)
    jobs = jobs or os.cpu_count() or 1
    if jobs > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(configs))) as ex:
            reports = list(ex.map(run_scenario, configs))
    else:
        reports = [run_scenario(c) for c in configs]
    rep = SweepReport.from_reports(reports)
    return rep
