"""KPI comparison and CSV export."""

from __future__ import annotations

import csv
import enum
import io
import json
import math
from pathlib import Path
from typing import IO, Union

from .config import ConfigError, Mode
from .run import Aggregates, RunReport, SweepReport

Sink = Union[str, Path, IO[str]]

SUMMARY_COLUMNS = (
    "mode",
    "range_m",
    "seed",
    "avg_time_s",
    "avg_distance_m",
    "avg_speed_mps",
    "avg_co2",
    "msgs_sent",
    "msgs_received",
    "msgs_lost_collision",
    "msgs_lost_sensitivity",
    "msgs_lost_range",
)
# Appended after the normative columns, never interleaved.
EXTRA_SUMMARY_COLUMNS = ("avg_speed_mph", "n_vehicles", "halts")

COUNTER_KEYS = (
    "sent",
    "received",
    "lost_collision",
    "lost_sensitivity",
    "lost_range",
    "beacons",
    "relays",
    "distinct",
)


class Direction(str, enum.Enum):
    REDUCTION = "reduction"
    INCREASE = "increase"


def percent_change(value: float, baseline: float, direction: Direction | str) -> float:
    """Relative change against ``baseline`` in percent.

    >>> round(percent_change(551, 833, "reduction"), 2)
    33.85
    """
    direction = Direction(direction)
    if not baseline > 0 or not math.isfinite(baseline):
        raise ValueError(f"baseline must be a positive finite number, got {baseline!r}")
    if direction is Direction.REDUCTION:
        return (baseline - value) / baseline * 100.0
    return (value - baseline) / baseline * 100.0


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _table(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(x) for x in row])
    return buf.getvalue()


def _write(sink: Sink, text: str) -> int:
    data = text.encode("utf-8")
    try:
        if isinstance(sink, (str, Path)):
            Path(sink).write_bytes(data)
        else:
            sink.write(text)
    except OSError as exc:
        raise OSError(f"cannot write report to {sink}: {exc}") from exc
    return len(data)


def _summary_row(mode, range_m, seed, agg: Aggregates, counters, halts):
    return [
        mode,
        range_m,
        seed,
        agg.avg_time,
        agg.avg_distance,
        agg.avg_speed,
        agg.avg_co2,
        counters["sent"],
        counters["received"],
        counters["lost_collision"],
        counters["lost_sensitivity"],
        counters["lost_range"],
        agg.avg_speed_mph,
        agg.n,
        halts,
    ]


def _run_row(r: RunReport):
    return _summary_row(r.mode, r.range_m, r.seed, r.aggregates, r.message_counters, r.halts)


def _seed_label(seeds) -> str | int:
    return seeds[0] if len(seeds) == 1 else "mean"


def _mean_counters(reports: list[RunReport]) -> dict[str, float | int]:
    k = len(reports)
    out = {}
    for key in COUNTER_KEYS:
        total = sum(r.message_counters[key] for r in reports)
        out[key] = total if k == 1 else total / k
    return out


def summary_rows(report: RunReport | SweepReport) -> list[list]:
    """One row per range (seed-averaged) then one per baseline mode."""
    if isinstance(report, RunReport):
        return [_run_row(report)]
    rows = []
    label = _seed_label(report.seeds)
    for r in report.ranges:
        runs = [report.runs[(r, s)] for s in report.seeds]
        halts = sum(x.halts for x in runs) / len(runs) if len(runs) > 1 else runs[0].halts
        rows.append(
            _summary_row(
                "connected", r, label, report.range_aggregates(r), _mean_counters(runs), halts
            )
        )
    for mode in (Mode.BEST.value, Mode.WORST.value):
        seeds = report.baseline_seeds(mode)
        if not seeds:
            continue
        runs = [report.baselines[(mode, s)] for s in seeds]
        halts = sum(x.halts for x in runs) / len(runs) if len(runs) > 1 else runs[0].halts
        rows.append(
            _summary_row(
                mode, None, _seed_label(seeds), report.baseline_aggregates(mode),
                _mean_counters(runs), halts,
            )
        )
    return rows


def _reports(report: RunReport | SweepReport) -> list[RunReport]:
    return [report] if isinstance(report, RunReport) else report.all_reports()


def _test_vehicle_rows(report: RunReport | SweepReport) -> list[list]:
    header_keys = ("travel_time_s", "distance_m", "mean_speed", "co2_total", "reroutes")

    def rows_for(mode, range_m, runs):
        by_id: dict[str, list] = {}
        for run in runs:
            for rec in run.per_vehicle:
                if rec.is_test_vehicle:
                    by_id.setdefault(rec.id, []).append(rec)
        out = []
        for vid in sorted(by_id):
            recs = by_id[vid]
            vals = [sum(getattr(x, k) for x in recs) / len(recs) for k in header_keys]
            out.append([vid, mode, range_m, len(recs), *vals])
        return out

    if isinstance(report, RunReport):
        return rows_for(report.mode, report.range_m, [report])
    rows = []
    for r in report.ranges:
        rows += rows_for("connected", r, [report.runs[(r, s)] for s in report.seeds])
    for mode in (Mode.BEST.value, Mode.WORST.value):
        seeds = report.baseline_seeds(mode)
        if seeds:
            rows += rows_for(mode, None, [report.baselines[(mode, s)] for s in seeds])
    return rows


TEST_VEHICLE_COLUMNS = (
    "vehicle",
    "mode",
    "range_m",
    "n_seeds",
    "travel_time_s",
    "distance_m",
    "mean_speed_mps",
    "co2_total",
    "reroutes",
)

VEHICLE_COLUMNS = (
    "mode",
    "range_m",
    "seed",
    "vehicle",
    "travel_time_s",
    "distance_m",
    "mean_speed_mps",
    "co2_total",
    "reroutes",
    "is_test_vehicle",
    "is_event_vehicle",
    "arrived",
)

# name -> (aggregate attribute or counter key, comparison direction)
PLOT_SERIES = {
    "travel_time_vs_range": ("avg_time", Direction.REDUCTION),
    "distance_vs_range": ("avg_distance", Direction.INCREASE),
    "speed_vs_range": ("avg_speed", Direction.INCREASE),
    "co2_vs_range": ("avg_co2", Direction.REDUCTION),
}
PLOT_COUNTERS = {
    "messages_sent_vs_range": "sent",
    "messages_received_vs_range": "received",
    "messages_lost_collision_vs_range": "lost_collision",
    "messages_lost_sensitivity_vs_range": "lost_sensitivity",
    "messages_lost_range_vs_range": "lost_range",
}


def _plot_files(report: SweepReport, baseline: str = Mode.WORST.value) -> dict[str, str]:
    files = {}
    has_base = bool(report.baseline_seeds(baseline))
    base = report.baseline_aggregates(baseline) if has_base else None
    for name, (attr, direction) in PLOT_SERIES.items():
        col = "reduction_pct" if direction is Direction.REDUCTION else "increase_pct"
        rows = []
        for r in report.ranges:
            v = getattr(report.range_aggregates(r), attr)
            b = getattr(base, attr) if base else None
            pct = percent_change(v, b, direction) if b else None
            rows.append([r, v, b, pct])
        files[f"{name}.csv"] = _table(("range_m", "value", f"{baseline}_value", col), rows)
    for name, key in PLOT_COUNTERS.items():
        rows = [[r, report.range_counter(r, key)] for r in report.ranges]
        files[f"{name}.csv"] = _table(("range_m", "value"), rows)
    ids = sorted(
        {x.id for run in report.runs.values() for x in run.per_vehicle if x.is_test_vehicle}
    )
    rows = []
    for r in report.ranges:
        row = [r]
        for vid in ids:
            times = [
                rec.travel_time_s
                for s in report.seeds
                for rec in report.runs[(r, s)].per_vehicle
                if rec.id == vid
            ]
            row.append(sum(times) / len(times) if times else None)
        rows.append(row)
    files["test_vehicle_time_vs_range.csv"] = _table(("range_m", *ids), rows)
    return files


def comparison_rows(report: SweepReport, baseline: str = Mode.WORST.value) -> list[list]:
    if not report.baseline_seeds(baseline):
        raise ConfigError(f"sweep has no {baseline} baseline runs")
    base = report.baseline_aggregates(baseline)
    rows = []
    for r in report.ranges:
        a = report.range_aggregates(r)
        rows.append([
            r,
            a.avg_time, percent_change(a.avg_time, base.avg_time, Direction.REDUCTION),
            a.avg_distance, percent_change(a.avg_distance, base.avg_distance, Direction.INCREASE),
            a.avg_speed, percent_change(a.avg_speed, base.avg_speed, Direction.INCREASE),
            a.avg_co2, percent_change(a.avg_co2, base.avg_co2, Direction.REDUCTION),
        ])
    return rows


COMPARISON_COLUMNS = (
    "range_m",
    "avg_time_s",
    "time_reduction_pct",
    "avg_distance_m",
    "distance_increase_pct",
    "avg_speed_mps",
    "speed_increase_pct",
    "avg_co2",
    "co2_reduction_pct",
)


def render(report: RunReport | SweepReport, kind: str) -> str:
    """CSV text for a single-file export kind."""
    if kind == "summary":
        return _table(SUMMARY_COLUMNS + EXTRA_SUMMARY_COLUMNS, summary_rows(report))
    if kind == "runs":
        return _table(SUMMARY_COLUMNS + EXTRA_SUMMARY_COLUMNS, [_run_row(r) for r in _reports(report)])
    if kind == "messages":
        rows = [
            [r.mode, r.range_m, r.seed, r.node_count, *(r.message_counters[k] for k in COUNTER_KEYS)]
            for r in _reports(report)
        ]
        return _table(("mode", "range_m", "seed", "nodes", *COUNTER_KEYS), rows)
    if kind == "test_vehicles":
        return _table(TEST_VEHICLE_COLUMNS, _test_vehicle_rows(report))
    if kind == "vehicles":
        rows = [
            [r.mode, r.range_m, r.seed, x.id, x.travel_time_s, x.distance_m, x.mean_speed,
             x.co2_total, x.reroutes, x.is_test_vehicle, x.is_event_vehicle, x.arrived]
            for r in _reports(report)
            for x in r.per_vehicle
        ]
        return _table(VEHICLE_COLUMNS, rows)
    if kind == "message_log":
        return _table(
            ("t", "msg_id", "sender", "receiver", "receiver_kind", "verdict", "action"),
            _log_of(report, "message_log"),
        )
    if kind == "reception_log":
        return _table(
            ("t", "sender", "receiver", "distance_m", "verdict"), _log_of(report, "reception_log")
        )
    if kind == "trajectory":
        return _table(
            ("t", "vehicle", "edge", "offset_m", "speed_mps", "status"),
            _log_of(report, "trajectory"),
        )
    raise ValueError(f"unknown report kind {kind!r}")


def _log_of(report, attr):
    if not isinstance(report, RunReport):
        raise ValueError(f"{attr} export needs a single run")
    rows = getattr(report, attr)
    if rows is None:
        raise ValueError(f"run was executed without {attr} recording")
    return rows


def export_report(
    report: RunReport | SweepReport,
    kind: str,
    sink: Sink,
    *,
    baseline: str = Mode.WORST.value,
) -> int:
    """Write one export and return the number of bytes written.

    ``plotdata`` writes one ``<metric>_vs_range.csv`` file per series into
    the directory ``sink``; every other kind writes a single CSV.
    """
    if kind == "plotdata":
        if not isinstance(report, SweepReport):
            raise ValueError("plotdata export needs a sweep")
        if not isinstance(sink, (str, Path)):
            raise ValueError("plotdata export needs a directory sink")
        out = Path(sink)
        out.mkdir(parents=True, exist_ok=True)
        return sum(_write(out / name, text) for name, text in sorted(_plot_files(report, baseline).items()))
    if kind == "comparison":
        if not isinstance(report, SweepReport):
            raise ValueError("comparison export needs a sweep")
        return _write(sink, _table(COMPARISON_COLUMNS, comparison_rows(report, baseline)))
    return _write(sink, render(report, kind))


def save_run(report: RunReport, path: str | Path) -> int:
    text = json.dumps(report.to_dict(), sort_keys=True, indent=1) + "\n"
    return _write(path, text)


def load_run(path: str | Path) -> RunReport:
    try:
        return RunReport.from_dict(json.loads(Path(path).read_text("utf-8")))
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"cannot load run report {path}: {exc}") from exc


def load_sweep(directory: str | Path) -> SweepReport:
    runs_dir = Path(directory) / "runs"
    paths = sorted(runs_dir.glob("*.json"))
    if not paths:
        raise ConfigError(f"no run reports under {runs_dir}")
    return SweepReport.from_reports([load_run(p) for p in paths])
