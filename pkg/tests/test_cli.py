import csv
import json

import pytest

from v2xlab.cli import dispatch

SMALL_TOML = """
[network]
grid = "4x4"
block_m = 120.0
signal_stride = 2

[traffic]
n_vehicles = 20
n_test_vehicles = 1
duration_s = 240.0
spawn_window_s = 100.0
min_trip_m = 200.0

[events]
n_event_vehicles = 1
window_s = [5.0, 15.0]
duration_s = 60.0

[radio]
n_rsus = 1
slot_s = 0.1

[sweep]
ranges = "200:400:200"
seeds = 2
baselines = "per_seed"
"""


@pytest.fixture
def small_cfg(tmp_path):
    p = tmp_path / "small.toml"
    p.write_text(SMALL_TOML)
    return p


def _err_lines(capsys):
    return [l for l in capsys.readouterr().err.splitlines() if l.startswith("v2xlab: error:")]


def test_gen_net_then_simulate(tmp_path):
    net = tmp_path / "net.json"
    assert dispatch(["gen-net", "--grid", "8x8", "--block", "120", "--out", str(net)]) == 0
    doc = json.loads(net.read_text())
    assert len(doc["nodes"]) == 64 and len(doc["edges"]) == 224
    out = tmp_path / "run"
    code = dispatch(["simulate", "--config", "mini-xanthi.toml", "--range", "400", "--seed", "7", "--out", str(out)])
    assert code == 0
    rows = list(csv.DictReader((out / "summary.csv").open()))
    assert rows[0]["seed"] == "7" and rows[0]["range_m"] == "400.0"
    assert (out / "message_log.csv").exists() and (out / "reception_log.csv").exists()
    assert json.loads((out / "run.json").read_text())["seed"] == 7


def test_simulate_against_generated_network_file(tmp_path):
    net = tmp_path / "net.json"
    dispatch(["gen-net", "--grid", "4x4", "--block", "120", "--signal-stride", "2", "--out", str(net)])
    cfg = tmp_path / "c.toml"
    cfg.write_text(SMALL_TOML.replace('grid = "4x4"', 'path = "net.json"'))
    out = tmp_path / "run"
    assert dispatch(["simulate", "--config", str(cfg), "--mode", "worst", "--trace", "--out", str(out)]) == 0
    assert (out / "trajectory.csv").read_text().startswith("t,vehicle,edge,offset_m,speed_mps,status\n")


def test_missing_config_flag_is_usage_error(capsys, tmp_path):
    assert dispatch(["simulate", "--out", str(tmp_path)]) == 1
    err = capsys.readouterr().err
    assert "usage:" in err and "v2xlab: error:" in err


@pytest.mark.parametrize("argv", [[], ["explode"], ["sweep", "--config", "x", "--out", "y", "--bogus"],
                                  ["gen-net", "--grid", "8by8", "--block", "1", "--out", "n.json"]])
def test_usage_errors_exit_1(argv, capsys):
    assert dispatch(argv) == 1
    assert len(_err_lines(capsys)) == 1


def test_config_errors_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("[traffic]\nn_vehicles = 0\n")
    assert dispatch(["simulate", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert len(_err_lines(capsys)) == 1
    assert dispatch(["simulate", "--config", str(tmp_path / "none.toml"), "--out", str(tmp_path / "o")]) == 2
    assert len(_err_lines(capsys)) == 1
    assert dispatch(["report", "--in", str(tmp_path / "empty")]) == 2
    assert len(_err_lines(capsys)) == 1
    garbage = tmp_path / "g.toml"
    garbage.write_text("this is = = not toml")
    assert dispatch(["sweep", "--config", str(garbage), "--out", str(tmp_path / "o")]) == 2


def test_sweep_and_report(small_cfg, tmp_path):
    out = tmp_path / "sw"
    assert dispatch(["sweep", "--config", str(small_cfg), "--jobs", "1", "--out", str(out)]) == 0
    runs = sorted(p.name for p in (out / "runs").glob("*.json"))
    assert len(runs) == 2 * 2 + 2 * 2
    for name in ("summary.csv", "runs.csv", "messages.csv", "test_vehicles.csv"):
        assert (out / name).exists()
    assert dispatch(["report", "--in", str(out), "--baseline", "worst", "--format", "csv"]) == 0
    rows = list(csv.DictReader((out / "comparison.csv").open()))
    assert [r["range_m"] for r in rows] == ["200.0", "400.0"]
    assert dispatch(["report", "--in", str(out), "--baseline", "best", "--format", "plotdata",
                     "--out", str(tmp_path / "plots")]) == 0
    assert (tmp_path / "plots" / "plotdata" / "messages_received_vs_range.csv").exists()


def test_log_level_from_environment(small_cfg, tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("V2XLAB_LOG", "info")
    assert dispatch(["simulate", "--config", str(small_cfg), "--mode", "best", "--out", str(tmp_path / "o")]) == 0


def test_documented_sweep_produces_32_reports(cli_sweeps):
    d = cli_sweeps[0]
    assert len(list((d / "runs").glob("*.json"))) == 32
    rows = list(csv.DictReader((d / "summary.csv").open()))
    assert len(rows) == 8
