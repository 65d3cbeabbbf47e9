"""
CLI Test Suite
Flag parsing, presets, exit codes and the sweep orchestration loop.
"""
from pathlib import Path

import pytest

import engine
from cli import EXIT_IO, EXIT_OK, EXIT_TRANSPORT, EXIT_USAGE, OutputOptions, SimSession, main, orchestrate, parse_args
from conftest import LOOPBACK, free_port, run_both
from data_manager import ResultsManager, read_csv
from errors import ConfigurationError, ProtocolError, VerbsError
from models import BenchmarkMode, Endpoint, Role, RunReport, TransportKind
from overhead import overhead_percent
from schedule import build_config
from settings import load_preset


# === Parsing ===

def test_parse_full_command_line():
    config, options = parse_args([
        "--mode", "pingpong", "--transport", "simverbs-rc-msg", "--sizes", "1:4K",
        "--count", "1000", "--runs", "5", "--mtu", "2K", "--out", "somewhere", "--plot",
    ])
    assert config.mode is BenchmarkMode.PINGPONG
    assert config.transport is TransportKind.RC_MSG
    assert (config.min_size, config.max_size) == (1, 4096)
    assert config.base_count == 1000
    assert config.runs == 5
    assert config.mtu == 2048
    assert config.queue_depth == 1
    assert options.out_dir == Path("somewhere")
    assert options.plot


def test_parse_tcp_roles():
    server, _ = parse_args(["--transport", "tcp", "--listen", ":9200"])
    client, _ = parse_args(["--transport", "tcp", "--connect", "10.0.0.2:9200", "--no-nodelay"])
    assert server.role is Role.SERVER
    assert server.endpoint == Endpoint(host="0.0.0.0", port=9200)
    assert client.role is Role.CLIENT
    assert client.endpoint.host == "10.0.0.2"
    assert client.nodelay is False
    bidir, _ = parse_args(["--mode", "bidir", "--transport", "tcp", "--connect", "host:9100"])
    assert bidir.mode is BenchmarkMode.BIDIR
    assert bidir.role is Role.CLIENT


@pytest.mark.parametrize("argv", [
    ["--mode", "bogus"],
    ["--transport", "tcp"],
    ["--sizes", "0:4K"],
    ["--sizes", "4K"],
    ["--sizes", "3:10"],
    ["--listen", ":9100"],
    ["--listen", ":1", "--connect", "h:2"],
    ["--queue-depth", "0"],
])
def test_usage_errors_exit_2(argv):
    assert main(argv) == EXIT_USAGE


def test_cross_field_violation_exits_2(tmp_path):
    assert main(["--batch", "16", "--queue-depth", "8", "--out", str(tmp_path)]) == EXIT_USAGE
    assert not (tmp_path / "config.json").exists()


def test_environment_sets_output_dir(monkeypatch, tmp_path):
    monkeypatch.setenv("WIREBENCH_OUT", str(tmp_path / "env"))
    config, options = parse_args([])
    assert config.out_dir == tmp_path / "env"
    config, _ = parse_args(["--out", str(tmp_path / "flag")])
    assert config.out_dir == tmp_path / "flag"


def test_bundled_preset_and_override():
    config, _ = parse_args(["--config", "desk", "--runs", "1"])
    assert config.max_size == 64 * 1024
    assert config.base_count == 10_000
    assert config.queue_depth == 64
    assert config.runs == 1


def test_preset_errors(tmp_path):
    with pytest.raises(ConfigurationError, match="not found"):
        load_preset(tmp_path / "missing.yaml")
    listing = tmp_path / "list.yaml"
    listing.write_text("- 1\n- 2\n", encoding="utf-8")
    with pytest.raises(ConfigurationError, match="mapping"):
        load_preset(listing)
    sizes = tmp_path / "sizes.yaml"
    sizes.write_text("max_size: 4K\nmtu: 1K\n", encoding="utf-8")
    assert load_preset(sizes) == {"max_size": 4096, "mtu": 1024}


# === Orchestration ===

def test_failing_size_does_not_stop_the_sweep(tmp_path):
    """1B..1MB, 3 runs, 4K always fails: 63 rows, 60 ok and 3 failed."""
    config = build_config(base_count=1000, out_dir=tmp_path)

    def runner(endpoint, point, cfg, run_index):
        if point.payload_size == 4096:
            raise VerbsError("injected failure")
        return RunReport(transport=cfg.transport, mode=cfg.mode, payload_size=point.payload_size,
                         run_index=run_index, messages=point.message_count, elapsed_ns=1000)

    reports = orchestrate(config, runner=runner, session=SimSession(config))
    assert len(reports) == 60
    rows = read_csv(tmp_path / "rc_msg_unidir_client.csv")
    assert len(rows) == 63
    failed = [row for row in rows if row.status == "failed"]
    assert len(failed) == 3
    assert {row.payload_bytes for row in failed} == {4096}
    assert all(row.error == "VerbsError: injected failure" for row in failed)
    assert len(ResultsManager(tmp_path).load_runs()) == 63
    print("✅ One failing size leaves 60 ok rows and 3 failed rows")


def test_tcp_sweep_recovers_from_one_sided_failure(tmp_path):
    """Only the client rejects 2B run 1; both peers record that run as failed and stay in step."""
    port = free_port()
    common = dict(
        transport=TransportKind.RAW_STREAM, mode=BenchmarkMode.PINGPONG,
        min_size=1, max_size=16, base_count=100, runs=3, timeout_s=5.0, watchdog_s=10.0,
    )
    server_config = build_config(role=Role.SERVER, endpoint=Endpoint(host=LOOPBACK, port=port),
                                 out_dir=tmp_path / "server", **common)
    client_config = build_config(role=Role.CLIENT, endpoint=Endpoint(host=LOOPBACK, port=port),
                                 out_dir=tmp_path / "client", **common)

    def rejecting_runner(endpoint, point, cfg, run_index):
        report = engine.run_point(endpoint, point, cfg, run_index)
        if (point.payload_size, run_index) == (2, 1):
            raise ProtocolError("rejected after the exchange")
        return report

    server_reports, client_reports = run_both(
        lambda: orchestrate(server_config),
        lambda: orchestrate(client_config, runner=rejecting_runner),
    )
    assert len(server_reports) == len(client_reports) == 14

    server_rows = read_csv(tmp_path / "server" / "raw_stream_pingpong_server.csv")
    client_rows = read_csv(tmp_path / "client" / "raw_stream_pingpong_client.csv")
    for rows in (server_rows, client_rows):
        assert len(rows) == 15
        assert [(r.payload_bytes, r.run) for r in rows if r.status == "failed"] == [(2, 1)]
        assert {r.payload_bytes for r in rows if r.status == "ok"} == {1, 2, 4, 8, 16}
    [client_failed] = [r for r in client_rows if r.status == "failed"]
    [server_failed] = [r for r in server_rows if r.status == "failed"]
    assert client_failed.error == "ProtocolError: rejected after the exchange"
    assert server_failed.error.startswith("TransportError: peer abandoned the run")
    print("✅ One-sided failure: both peers keep 14 ok runs and agree on the failed one")


def test_overhead_sweep_matches_model(tmp_path):
    config = build_config(mode=BenchmarkMode.OVERHEAD, max_size=64 * 1024, base_count=20, runs=1,
                          out_dir=tmp_path)
    reports = orchestrate(config)
    assert len(reports) == 17
    for report in reports:
        expected = overhead_percent(TransportKind.RC_MSG, report.payload_size, config.mtu)
        assert report.overhead.overhead_percent == pytest.approx(expected)
        assert report.overhead.residual_unmodeled == 0
    rows = read_csv(tmp_path / "rc_msg_overhead_client.csv")
    assert rows[0].overhead_pct == pytest.approx(2600.0)


def test_orchestrate_writes_manifest(tmp_path):
    config = build_config(max_size=4, base_count=50, runs=1, out_dir=tmp_path)
    orchestrate(config, OutputOptions(out_dir=tmp_path))
    assert ResultsManager(tmp_path).load_config().base_count == 50


# === Entry point ===

def test_main_simulated_run_with_plot(tmp_path):
    csv_path = tmp_path / "custom.csv"
    code = main([
        "--transport", "simverbs-rc-msg", "--mode", "unidir", "--sizes", "1:1K",
        "--count", "200", "--runs", "2", "--out", str(tmp_path), "--csv", str(csv_path), "--plot",
    ])
    assert code == EXIT_OK
    assert len(read_csv(csv_path)) == 11 * 2
    assert (tmp_path / "throughput.svg").exists()


def test_main_replot(tmp_path):
    assert main(["--mode", "latency", "--sizes", "1:8", "--count", "100", "--runs", "1",
                 "--out", str(tmp_path)]) == EXIT_OK
    csv_path = tmp_path / "rc_msg_latency_client.csv"
    replot_dir = tmp_path / "again"
    assert main(["--replot", str(csv_path), "--out", str(replot_dir)]) == EXIT_OK
    assert (replot_dir / "latency.svg").exists()


def test_main_replot_missing_file(tmp_path):
    assert main(["--replot", str(tmp_path / "nope.csv"), "--out", str(tmp_path)]) == EXIT_IO


def test_unreachable_peer_exits_4(tmp_path):
    code = main(["--transport", "tcp", "--connect", f"127.0.0.1:{free_port()}",
                 "--timeout", "0.3", "--out", str(tmp_path)])
    assert code == EXIT_TRANSPORT
