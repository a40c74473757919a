"""Scenario configuration: dataclasses plus TOML/JSON loading."""

from __future__ import annotations

import enum
import json
import sys
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from ..emissions import EmissionCoeffs
from ..mobility import DEFAULT_EVENT_DURATION_S, DEFAULT_EVENT_WINDOW_S, SignalMode, VehicleParams
from ..radio import RadioConfig


class ConfigError(ValueError):
    pass


class Mode(str, enum.Enum):
    CONNECTED = "connected"
    WORST = "worst"
    BEST = "best"


class BaselinePolicy(str, enum.Enum):
    PER_SEED = "per_seed"
    FIRST_SEED = "first_seed"


MODE_ALIASES = {
    "connected": Mode.CONNECTED,
    "worst": Mode.WORST,
    "worstcase": Mode.WORST,
    "worst_case": Mode.WORST,
    "best": Mode.BEST,
    "bestcase": Mode.BEST,
    "best_case": Mode.BEST,
}


def parse_mode(s: str | Mode) -> Mode:
    if isinstance(s, Mode):
        return s
    try:
        return MODE_ALIASES[s.lower()]
    except KeyError:
        raise ConfigError(f"unknown mode {s!r}") from None


@dataclass(frozen=True)
class NetworkSpec:
    path: str | None = None
    rows: int = 8
    cols: int = 8
    block_m: float = 120.0
    speed_mps: float = 13.9
    signal_stride: int = 3


@dataclass(frozen=True)
class SignalTiming:
    mode: SignalMode = SignalMode.ACTUATED
    min_green_s: float = 30.0
    max_green_s: float = 60.0
    yellow_s: float = 3.0
    detector_m: float = 30.0
    gap_s: float = 3.0


@dataclass(frozen=True)
class SweepSpec:
    ranges: tuple[float, ...] = (100.0, 200.0, 300.0, 400.0, 500.0, 600.0)
    seeds: tuple[int, ...] = (1,)
    baselines: BaselinePolicy = BaselinePolicy.PER_SEED


@dataclass(frozen=True)
class TestVehicleSpec:
    origin: str
    destination: str
    depart_s: float


@dataclass(frozen=True)
class ScenarioConfig:
    network: NetworkSpec = field(default_factory=NetworkSpec)
    n_vehicles: int = 1220
    n_rsus: int = 30
    range_m: float = 400.0
    duration_s: float = 4600.0
    n_event_vehicles: int = 47
    event_window_s: tuple[float, float] = DEFAULT_EVENT_WINDOW_S
    event_duration_s: float = DEFAULT_EVENT_DURATION_S
    n_test_vehicles: int = 6
    test_vehicles: tuple[TestVehicleSpec, ...] = ()
    mode: Mode = Mode.CONNECTED
    signals: SignalTiming = field(default_factory=SignalTiming)
    seed: int = 1
    dt_s: float = 1.0
    spawn_window_s: float | None = None
    fringe_trips: bool = True
    min_trip_m: float = 0.0
    beacon_interval_s: float = 1.0
    payload_bytes: int = 256
    max_hops: int = 1
    blocked_ttl_s: float = 30.0
    radio: RadioConfig = field(default_factory=RadioConfig)
    emissions: EmissionCoeffs = field(default_factory=EmissionCoeffs)
    vehicle_params: VehicleParams = field(default_factory=VehicleParams)
    sweep: SweepSpec = field(default_factory=SweepSpec)
    base_dir: str = field(default=".", compare=False)

    @property
    def spawn_window(self) -> float:
        return 0.8 * self.duration_s if self.spawn_window_s is None else self.spawn_window_s

    @property
    def comm_enabled(self) -> bool:
        return self.mode is Mode.CONNECTED

    @property
    def events_enabled(self) -> bool:
        return self.mode is not Mode.BEST

    @property
    def effective_signal_mode(self) -> SignalMode:
        return self.signals.mode if self.mode is Mode.CONNECTED else SignalMode.STATIC

    def validate(self) -> "ScenarioConfig":
        if self.n_vehicles < 1:
            raise ConfigError("n_vehicles must be >= 1")
        if not 0 <= self.n_event_vehicles <= self.n_vehicles:
            raise ConfigError("n_event_vehicles must lie in [0, n_vehicles]")
        n_test = max(self.n_test_vehicles, len(self.test_vehicles))
        if n_test > self.n_vehicles:
            raise ConfigError("n_test_vehicles must not exceed n_vehicles")
        if self.n_event_vehicles + n_test > self.n_vehicles:
            raise ConfigError("event and test vehicles must be distinct vehicles")
        if self.n_rsus < 0:
            raise ConfigError("n_rsus must be >= 0")
        if not (self.duration_s > 0 and self.dt_s > 0):
            raise ConfigError("duration_s and dt_s must be > 0")
        lo, hi = self.event_window_s
        if not 0 <= lo <= hi:
            raise ConfigError("event window must satisfy 0 <= lo <= hi")
        if not self.event_duration_s > 0:
            raise ConfigError("event duration must be > 0")
        if not 0 < self.spawn_window <= self.duration_s:
            raise ConfigError("spawn window must lie in (0, duration]")
        if self.vehicle_params.tau_s < self.dt_s:
            raise ConfigError("car following is only collision-free for dt_s <= tau_s")
        if not self.sweep.ranges or not self.sweep.seeds:
            raise ConfigError("sweep needs at least one range and one seed")
        return self

    def with_(self, **kw) -> "ScenarioConfig":
        cfg = replace(self, **kw)
        if "range_m" in kw:
            cfg = replace(cfg, radio=cfg.radio.with_range(kw["range_m"]))
        return cfg

    def echo(self) -> dict[str, Any]:
        d = asdict(self)
        d.pop("base_dir", None)
        d.pop("sweep", None)
        return _jsonable(d)


def _jsonable(x):
    if isinstance(x, enum.Enum):
        return x.value
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x


BUILTIN_SCENARIOS = {"mini-xanthi": "mini-xanthi.toml"}


def parse_ranges(spec: str) -> tuple[float, ...]:
    """``A:B:STEP`` inclusive range syntax."""
    try:
        a, b, step = (float(p) for p in spec.split(":"))
    except ValueError:
        raise ConfigError(f"ranges must look like A:B:STEP, got {spec!r}") from None
    if step <= 0 or b < a:
        raise ConfigError(f"invalid range sweep {spec!r}")
    out = []
    k = 0
    while a + k * step <= b + 1e-9:
        out.append(round(a + k * step, 9))
        k += 1
    return tuple(out)


def _read_document(path: Path) -> dict:
    text = path.read_bytes()
    try:
        if path.suffix.lower() == ".json":
            return json.loads(text)
        return tomllib.loads(text.decode("utf-8"))
    except (json.JSONDecodeError, tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc


def resolve_config_path(name: str | Path) -> Path:
    p = Path(name)
    if p.exists():
        return p
    stem = p.name[: -len(p.suffix)] if p.suffix else p.name
    if stem in BUILTIN_SCENARIOS:
        ref = resources.files("v2xlab.scenarios").joinpath(BUILTIN_SCENARIOS[stem])
        with resources.as_file(ref) as real:
            return Path(real)
    raise ConfigError(f"config file not found: {name}")


def load_config(path: str | Path) -> ScenarioConfig:
    p = resolve_config_path(path)
    doc = _read_document(p)
    return config_from_dict(doc, base_dir=str(p.parent))


def config_from_dict(doc: Mapping, base_dir: str = ".") -> ScenarioConfig:
    known = {"network", "traffic", "events", "radio", "emissions", "signals", "sweep"}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    try:
        return _build(doc, base_dir).validate()
    except (TypeError, ValueError, KeyError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def _build(doc: Mapping, base_dir: str) -> ScenarioConfig:
    net = dict(doc.get("network", {}))
    traffic = dict(doc.get("traffic", {}))
    events = dict(doc.get("events", {}))
    radio = dict(doc.get("radio", {}))
    signals = dict(doc.get("signals", {}))
    sweep = dict(doc.get("sweep", {}))
    kw: dict[str, Any] = {"base_dir": base_dir}

    grid = net.pop("grid", None)
    if grid is not None:
        rows, cols = (int(x) for x in str(grid).lower().split("x"))
        net.update(rows=rows, cols=cols)
    kw["network"] = NetworkSpec(**net)

    for key in ("n_vehicles", "n_test_vehicles", "seed"):
        if key in traffic:
            kw[key] = int(traffic.pop(key))
    for key in ("duration_s", "dt_s", "spawn_window_s", "min_trip_m"):
        if key in traffic:
            kw[key] = float(traffic.pop(key))
    if "fringe_trips" in traffic:
        kw["fringe_trips"] = bool(traffic.pop("fringe_trips"))
    if "mode" in traffic:
        kw["mode"] = parse_mode(traffic.pop("mode"))
    if "vehicle" in traffic:
        kw["vehicle_params"] = VehicleParams.from_dict(traffic.pop("vehicle"))
    if "test_vehicles" in traffic:
        kw["test_vehicles"] = tuple(
            TestVehicleSpec(str(t["origin"]), str(t["destination"]), float(t["depart_s"]))
            for t in traffic.pop("test_vehicles")
        )
    if traffic:
        raise ConfigError(f"unknown [traffic] keys: {sorted(traffic)}")

    if "n_event_vehicles" in events:
        kw["n_event_vehicles"] = int(events.pop("n_event_vehicles"))
    if "window_s" in events:
        lo, hi = events.pop("window_s")
        kw["event_window_s"] = (float(lo), float(hi))
    if "duration_s" in events:
        kw["event_duration_s"] = float(events.pop("duration_s"))
    for key in ("beacon_interval_s", "blocked_ttl_s"):
        if key in events:
            kw[key] = float(events.pop(key))
    for key in ("payload_bytes", "max_hops"):
        if key in events:
            kw[key] = int(events.pop(key))
    if events:
        raise ConfigError(f"unknown [events] keys: {sorted(events)}")

    if "n_rsus" in radio:
        kw["n_rsus"] = int(radio.pop("n_rsus"))
    rcfg = RadioConfig.from_dict(radio)
    extra = set(radio) - set(RadioConfig.__dataclass_fields__) - {"freq_hz"}
    if extra:
        raise ConfigError(f"unknown [radio] keys: {sorted(extra)}")
    kw["radio"] = rcfg
    kw["range_m"] = rcfg.range_m

    if "emissions" in doc:
        kw["emissions"] = EmissionCoeffs.from_dict(doc["emissions"])

    if signals:
        mode = SignalMode(str(signals.pop("mode", "actuated")).lower())
        kw["signals"] = SignalTiming(mode=mode, **{k: float(v) for k, v in signals.items()})

    if sweep:
        ranges = sweep.get("ranges", SweepSpec.ranges)
        if isinstance(ranges, str):
            ranges = parse_ranges(ranges)
        seeds = sweep.get("seeds", kw.get("seed", 1))
        if isinstance(seeds, int):
            base = kw.get("seed", 1)
            seeds = tuple(range(base, base + seeds))
        kw["sweep"] = SweepSpec(
            ranges=tuple(float(r) for r in ranges),
            seeds=tuple(int(s) for s in seeds),
            baselines=BaselinePolicy(sweep.get("baselines", "per_seed")),
        )
    return ScenarioConfig(**kw)
