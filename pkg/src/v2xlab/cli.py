"""Command-line entry point: ``v2xlab <verb> [options]``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .netgraph import NetworkError, grid_network
from .scenario.config import BaselinePolicy, ConfigError, load_config, parse_mode, parse_ranges
from .scenario.report import export_report, load_sweep, save_run
from .scenario.run import run_scenario, sweep

PROG = "v2xlab"
EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2
LOG_LEVELS = {
    "error": logging.ERROR,
    "warn": logging.WARNING,
    "warning": logging.WARNING,
    "info": logging.INFO,
    "debug": logging.DEBUG,
}

log = logging.getLogger(PROG)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse exits 2 by default; usage errors are 1 here
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _grid(text: str) -> tuple[int, int]:
    try:
        r, c = (int(x) for x in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected RxC, got {text!r}") from None
    return r, c


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog=PROG, description="Traffic and V2X warning-message co-simulator.")
    sub = p.add_subparsers(dest="verb", metavar="verb", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("simulate", help="run one scenario")
    s.add_argument("--config", required=True)
    s.add_argument("--range", type=float, dest="range_m")
    s.add_argument("--mode", choices=["connected", "worst", "best"])
    s.add_argument("--seed", type=int)
    s.add_argument("--trace", action="store_true", help="also write trajectory.csv")
    s.add_argument("--out", required=True)

    w = sub.add_parser("sweep", help="communication-range sweep with baselines")
    w.add_argument("--config", required=True)
    w.add_argument("--ranges", help="A:B:STEP, inclusive (default from config)")
    w.add_argument("--seeds", type=int, help="number of seeds counted up from the base seed")
    w.add_argument("--seed", type=int, help="base seed")
    w.add_argument("--baselines", choices=[b.value for b in BaselinePolicy])
    w.add_argument("--jobs", type=int, default=None)
    w.add_argument("--out", required=True)

    r = sub.add_parser("report", help="compare a finished sweep against a baseline")
    r.add_argument("--in", dest="inp", required=True)
    r.add_argument("--baseline", choices=["worst", "best"], default="worst")
    r.add_argument("--format", choices=["csv", "plotdata"], default="csv")
    r.add_argument("--out", help="output directory (default: the input directory)")

    g = sub.add_parser("gen-net", help="write a grid network document")
    g.add_argument("--grid", type=_grid, required=True)
    g.add_argument("--block", type=float, required=True)
    g.add_argument("--speed", type=float, default=13.9)
    g.add_argument("--signal-stride", type=int, default=3)
    g.add_argument("--out", required=True)
    return p


def _config(args):
    cfg = load_config(args.config)
    kw = {}
    if getattr(args, "seed", None) is not None:
        kw["seed"] = args.seed
    if getattr(args, "mode", None):
        kw["mode"] = parse_mode(args.mode)
    if getattr(args, "range_m", None) is not None:
        kw["range_m"] = args.range_m
    return cfg.with_(**kw).validate() if kw else cfg


def cmd_simulate(args) -> int:
    cfg = _config(args)
    rep = run_scenario(cfg, logs=True, trace=args.trace)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for kind in ("summary", "messages", "vehicles", "test_vehicles"):
        export_report(rep, kind, out / f"{kind}.csv")
    if rep.message_log is not None:
        export_report(rep, "message_log", out / "message_log.csv")
        export_report(rep, "reception_log", out / "reception_log.csv")
    if args.trace:
        export_report(rep, "trajectory", out / "trajectory.csv")
    save_run(rep, out / "run.json")
    print(out / "summary.csv")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _config(args)
    ranges = parse_ranges(args.ranges) if args.ranges else cfg.sweep.ranges
    if args.seeds is not None:
        if args.seeds < 1:
            raise ConfigError("--seeds must be >= 1")
        seeds = tuple(range(cfg.seed, cfg.seed + args.seeds))
    elif args.seed is not None:
        seeds = (cfg.seed,)
    else:
        seeds = cfg.sweep.seeds
    policy = BaselinePolicy(args.baselines) if args.baselines else None
    if args.jobs is not None and args.jobs < 1:
        raise ConfigError("--jobs must be >= 1")
    rep = sweep(cfg, ranges, seeds, jobs=args.jobs, baselines=policy)

    out = Path(args.out)
    runs_dir = out / "runs"
    runs_dir.mkdir(parents=True, exist_ok=True)
    for old in runs_dir.glob("*.json"):
        old.unlink()
    for r in rep.all_reports():
        save_run(r, runs_dir / f"{r.label}.json")
    for kind in ("summary", "runs", "messages", "test_vehicles"):
        export_report(rep, kind, out / f"{kind}.csv")
    best = rep.rankings[0]
    log.info("best range %g m (avg_time %.2f s)", best, rep.range_aggregates(best).avg_time)
    print(out / "summary.csv")
    return EXIT_OK


def cmd_report(args) -> int:
    rep = load_sweep(args.inp)
    out = Path(args.out or args.inp)
    out.mkdir(parents=True, exist_ok=True)
    if args.format == "csv":
        target = out / "comparison.csv"
        export_report(rep, "comparison", target, baseline=args.baseline)
    else:
        target = out / "plotdata"
        export_report(rep, "plotdata", target, baseline=args.baseline)
    print(target)
    return EXIT_OK


def cmd_gen_net(args) -> int:
    rows, cols = args.grid
    net = grid_network(rows, cols, args.block, args.speed, args.signal_stride)
    out = Path(args.out)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(net.to_document(), indent=1) + "\n", encoding="utf-8")
    print(out)
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "report": cmd_report,
    "gen-net": cmd_gen_net,
}


def _setup_logging() -> None:
    level = os.environ.get("V2XLAB_LOG", "warn").lower()
    logging.basicConfig(
        level=LOG_LEVELS.get(level, logging.WARNING),
        format=f"{PROG}: %(levelname)s: %(message)s",
        stream=sys.stderr,
    )


def dispatch(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"{PROG}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        return COMMANDS[args.verb](args)
    except (ConfigError, NetworkError, OSError, ValueError) as exc:
        msg = " ".join(str(exc).split())
        print(f"{PROG}: error: {msg}", file=sys.stderr)
        return EXIT_DATA


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
