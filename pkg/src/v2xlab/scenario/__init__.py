"""Scenario assembly, sweeps and reporting."""

from .config import (
    BaselinePolicy,
    ConfigError,
    Mode,
    NetworkSpec,
    ScenarioConfig,
    SignalTiming,
    SweepSpec,
    TestVehicleSpec,
    load_config,
    parse_mode,
    parse_ranges,
)
from .placement import covered_length, place_rsus
from .report import Direction, export_report, load_run, load_sweep, percent_change, save_run
from .run import Aggregates, RunReport, SweepReport, VehicleRecord, run_scenario, sweep

__all__ = [
    "Aggregates",
    "BaselinePolicy",
    "ConfigError",
    "Direction",
    "Mode",
    "NetworkSpec",
    "RunReport",
    "ScenarioConfig",
    "SignalTiming",
    "SweepReport",
    "SweepSpec",
    "TestVehicleSpec",
    "VehicleRecord",
    "covered_length",
    "export_report",
    "load_config",
    "load_run",
    "load_sweep",
    "parse_mode",
    "parse_ranges",
    "percent_change",
    "place_rsus",
    "run_scenario",
    "save_run",
    "sweep",
]
