import sys
import time
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

DESK_RANGES = (100.0, 200.0, 300.0, 400.0, 500.0, 600.0)
DESK_SEEDS = (1, 2, 3, 4, 5)


@pytest.fixture(scope="session")
def desk_config():
    from v2xlab.scenario import load_config

    return load_config("mini-xanthi")


@pytest.fixture(scope="session")
def desk_sweep(desk_config):
    """Full desk sweep with baselines on every seed, plus its wall time."""
    from v2xlab.scenario import BaselinePolicy, sweep

    t0 = time.perf_counter()
    rep = sweep(desk_config, DESK_RANGES, DESK_SEEDS, baselines=BaselinePolicy.PER_SEED)
    return rep, time.perf_counter() - t0


@pytest.fixture(scope="session")
def cli_sweeps(tmp_path_factory):
    """The documented CLI sweep, executed twice into separate trees."""
    from v2xlab.cli import dispatch

    out = []
    for name in ("first", "second"):
        d = tmp_path_factory.mktemp(name) / "sweep"
        code = dispatch(["sweep", "--config", "mini-xanthi.toml", "--ranges", "100:600:100",
                         "--seeds", "5", "--out", str(d)])
        assert code == 0
        out.append(d)
    return out


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import VERDICTS
    except ImportError:
        return
    if not VERDICTS:
        return
    terminalreporter.section("acceptance")
    for n in sorted(VERDICTS):
        ok, detail = VERDICTS[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
