"""
Wirebench CLI - sweep orchestration
Parses flags, runs every (size, run) of the schedule, persists CSV rows as it
goes and renders the SVG plots.
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

from pydantic import BaseModel, Field

import engine
from data_manager import ResultsManager, failed_row, report_to_row
from errors import ConfigurationError, PlotError, ResultsError, TransportError, WirebenchError
from models import BenchmarkConfig, BenchmarkMode, CsvRow, Endpoint, Role, RunReport, SchedulePoint, TransportKind
from plotting import render_from_csv
from schedule import build_config, config_schedule, parse_size, parse_size_range, size_label, validate_config
from settings import WirebenchSettings, load_preset
from simverbs import create_queue_pair_pair
from stats import aggregate_runs
from transport import Connection, connect, listen

logger = logging.getLogger("wirebench")

TRANSPORTS = {
    "tcp": TransportKind.RAW_STREAM,
    "simverbs-rc-msg": TransportKind.RC_MSG,
    "simverbs-rdma-write": TransportKind.RC_RDMA_WRITE,
    "simverbs-rdma-read": TransportKind.RC_RDMA_READ,
}

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_TRANSPORT = 4

Runner = Callable[..., RunReport]


class OutputOptions(BaseModel):
    out_dir: Path = Path("results")
    csv: Optional[Path] = None
    plot: bool = False
    replot: List[Path] = Field(default_factory=list)
    log_level: str = "INFO"


# === Argument parsing ===

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wirebench",
        description="Point-to-point throughput, latency and wire-overhead microbenchmarks.",
    )
    bench = parser.add_argument_group("benchmark")
    bench.add_argument("--mode", choices=[m.value for m in BenchmarkMode])
    bench.add_argument("--transport", choices=list(TRANSPORTS))
    peer = bench.add_mutually_exclusive_group()
    peer.add_argument("--listen", metavar="HOST:PORT", help="run as server")
    peer.add_argument("--connect", metavar="HOST:PORT", help="run as client")
    bench.add_argument("--sizes", metavar="MIN:MAX", type=parse_size_range, help="e.g. 1:1M")
    bench.add_argument("--count", type=int, help="messages at the smallest size")
    bench.add_argument("--halve-from", type=parse_size)
    bench.add_argument("--queue-depth", type=int)
    bench.add_argument("--batch", type=int, help="work requests per post call")
    bench.add_argument("--runs", type=int)
    bench.add_argument("--mtu", type=parse_size)
    bench.add_argument("--warmup", type=int)
    bench.add_argument("--config", metavar="YAML", help="preset file or bundled preset name")

    sim = parser.add_argument_group("simulated verbs")
    sim.add_argument("--rnr-delay", type=float, metavar="US")
    sim.add_argument("--max-rnr-retries", type=int)
    sim.add_argument("--sim-latency-ns", type=int)
    sim.add_argument("--sim-link-gbps", type=float)
    sim.add_argument("--sim-recv-delay-ns", type=int)
    sim.add_argument("--ip-options", type=int, metavar="BYTES", help="IPv4 options in the IPoIB model")

    stream = parser.add_argument_group("tcp")
    stream.add_argument("--timeout", type=float, metavar="S")
    stream.add_argument("--watchdog", type=float, metavar="S")
    stream.add_argument("--nodelay", action=argparse.BooleanOptionalAction, default=None)
    stream.add_argument("--no-verify", action="store_true", help="skip ping-pong echo comparison")

    output = parser.add_argument_group("output")
    output.add_argument("--out", metavar="DIR")
    output.add_argument("--csv", nargs="?", const="", metavar="PATH", help="CSV path (default inside --out)")
    output.add_argument("--plot", action="store_true")
    output.add_argument("--replot", nargs="+", metavar="CSV", help="only render plots from existing CSVs")
    output.add_argument("--log-level")
    return parser


_FLAG_FIELDS = {
    "mode": "mode",
    "count": "base_count",
    "halve_from": "halve_from",
    "queue_depth": "queue_depth",
    "batch": "post_batch",
    "runs": "runs",
    "mtu": "mtu",
    "warmup": "warmup_count",
    "rnr_delay": "rnr_delay",
    "max_rnr_retries": "max_rnr_retries",
    "sim_latency_ns": "sim_latency_ns",
    "sim_link_gbps": "sim_link_gbps",
    "sim_recv_delay_ns": "sim_recv_delay_ns",
    "ip_options": "ip_options_bytes",
    "timeout": "timeout_s",
    "watchdog": "watchdog_s",
    "nodelay": "nodelay",
}


def _config_fields(args: argparse.Namespace, settings: WirebenchSettings) -> Dict[str, Any]:
    fields: Dict[str, Any] = load_preset(args.config) if args.config else {}
    for flag, name in _FLAG_FIELDS.items():
        value = getattr(args, flag)
        if value is not None:
            fields[name] = value
    if args.transport:
        fields["transport"] = TRANSPORTS[args.transport]
    if args.sizes:
        fields["min_size"], fields["max_size"] = args.sizes
    if args.no_verify:
        fields["verify_echo"] = False

    if args.listen or args.connect:
        fields["role"] = Role.SERVER if args.listen else Role.CLIENT
        fields["endpoint"] = Endpoint.parse(args.listen or args.connect)
    transport = TransportKind(fields.get("transport", TransportKind.RC_MSG))
    if transport is TransportKind.RAW_STREAM and "endpoint" not in fields:
        raise ConfigurationError("tcp transport needs --listen or --connect")
    if transport.simulated and (args.listen or args.connect):
        raise ConfigurationError("--listen/--connect only apply to the tcp transport")

    fields["out_dir"] = Path(args.out) if args.out else Path(fields.get("out_dir", settings.out))
    return fields


def parse_args(argv: Optional[Sequence[str]] = None) -> Tuple[BenchmarkConfig, OutputOptions]:
    """Flags over preset over defaults, validated. Invalid input exits with status 2."""
    parser = build_parser()
    args = parser.parse_args(argv)
    settings = WirebenchSettings()
    try:
        fields = _config_fields(args, settings)
        config = validate_config(build_config(**fields))
    except (ConfigurationError, ValueError) as exc:
        parser.error(str(exc))

    options = OutputOptions(
        out_dir=config.out_dir,
        csv=Path(args.csv) if args.csv else None,
        plot=args.plot,
        replot=[Path(p) for p in args.replot or []],
        log_level=(args.log_level or settings.log_level).upper(),
    )
    return config, options


# === Sessions ===

class SimSession:
    """Fresh linked queue pairs for every run, so counters and clock start at zero."""

    def __init__(self, config: BenchmarkConfig):
        self.config = config

    def prepare(self, point: SchedulePoint) -> None:
        pass

    def endpoint(self):
        return create_queue_pair_pair(self.config)

    def confirm(self) -> None:
        pass

    def recover(self) -> None:
        pass

    def close(self) -> None:
        pass


class StreamSession:
    """
    One TCP connection per sweep. Every run is bracketed by a parameter frame
    and a confirmation token, so both peers record the same outcome for it.
    """

    def __init__(self, config: BenchmarkConfig):
        self.config = config
        self.conn: Connection = self._open()

    def _open(self) -> Connection:
        last: Optional[TransportError] = None
        for attempt in range(self.config.connect_retries + 1):
            try:
                if self.config.role is Role.SERVER:
                    return listen(self.config.endpoint, self.config)
                return connect(self.config.endpoint, self.config)
            except TransportError as exc:
                last = exc
                logger.warning("session attempt %d failed: %s", attempt + 1, exc)
        raise last

    def prepare(self, point: SchedulePoint) -> None:
        self.conn.negotiate(point)

    def endpoint(self) -> Connection:
        return self.conn

    def confirm(self) -> None:
        self.conn.confirm_run()

    def recover(self) -> None:
        """
        Drop the session and re-establish it. Closing is what tells the peer
        the run failed: its confirmation read ends, and it reconnects too.
        """
        self.conn.close()
        self.conn = self._open()

    def close(self) -> None:
        self.conn.close()


def open_session(config: BenchmarkConfig) -> Union[SimSession, StreamSession]:
    if config.transport.simulated:
        return SimSession(config)
    return StreamSession(config)


# === Orchestration ===

def _print_point(point: SchedulePoint, reports: List[RunReport], failures: int) -> None:
    label = size_label(point.payload_size)
    if not reports:
        print(f"❌ {label:>6}  all {failures} run(s) failed")
        return
    agg = aggregate_runs(reports)
    line = (f"✅ {label:>6}  {reports[0].messages:>9} msgs  "
            f"mmps {agg.mmps.min:.4g}/{agg.mmps.avg:.4g}/{agg.mmps.max:.4g}  "
            f"MB/s {agg.mbps.min:.4g}/{agg.mbps.avg:.4g}/{agg.mbps.max:.4g}")
    if agg.avg_us is not None:
        line += f"  avg {agg.avg_us.avg:.3f}us p99.9 {agg.p999_us.avg:.3f}us p99.99 {agg.p9999_us.avg:.3f}us"
    if agg.overhead_pct is not None:
        line += f"  overhead {agg.overhead_pct.avg:.4g}%"
    if failures:
        line += f"  ({failures} failed)"
    print(line)


def orchestrate(config: BenchmarkConfig, options: Optional[OutputOptions] = None,
                manager: Optional[ResultsManager] = None,
                runner: Optional[Runner] = None,
                session: Optional[Union[SimSession, StreamSession]] = None) -> List[RunReport]:
    """
    Run the whole schedule. A failing (size, run) becomes a failed CSV row and
    the sweep moves on; the CSV is rewritten after every point.
    """
    config = validate_config(config)
    options = options or OutputOptions(out_dir=config.out_dir)
    manager = manager or ResultsManager(options.out_dir)
    runner = runner or engine.run_point
    csv_path = options.csv or manager.csv_path(config)
    schedule = config_schedule(config)
    manager.save_config(config)

    rows: List[CsvRow] = []
    reports: List[RunReport] = []
    session = session or open_session(config)
    print(f"🚀 {config.mode.value} over {config.transport.value}: {len(schedule)} sizes x {config.runs} runs")
    try:
        for point in schedule:
            point_reports: List[RunReport] = []
            failures = 0
            for run_index in range(1, config.runs + 1):
                try:
                    session.prepare(point)
                    report = runner(session.endpoint(), point, config, run_index)
                    session.confirm()
                except WirebenchError as exc:
                    logger.error("%s run %d failed: %s", size_label(point.payload_size), run_index, exc)
                    row = failed_row(config, point, run_index, exc)
                    rows.append(row)
                    manager.log_run(row)
                    failures += 1
                    manager.flush(rows, csv_path)
                    session.recover()
                    continue
                point_reports.append(report)
                reports.append(report)
                row = report_to_row(report)
                rows.append(row)
                manager.log_run(row)
            manager.flush(rows, csv_path)
            _print_point(point, point_reports, failures)
    finally:
        manager.flush(rows, csv_path)
        session.close()

    if options.plot:
        for path in render_from_csv([csv_path], options.out_dir, mtu=config.mtu):
            print(f"📈 {path}")
    return reports


# === Entry point ===

def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        config, options = parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE

    logging.basicConfig(
        level=getattr(logging, options.log_level, logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    try:
        if options.replot:
            for path in render_from_csv(options.replot, options.out_dir, mtu=config.mtu):
                print(f"📈 {path}")
            return EXIT_OK
        orchestrate(config, options)
    except ConfigurationError as exc:
        logger.error("%s", exc)
        return EXIT_USAGE
    except TransportError as exc:
        logger.error("transport failed after retries: %s", exc)
        return EXIT_TRANSPORT
    except (OSError, ResultsError, PlotError) as exc:
        logger.error("output failed: %s", exc)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
