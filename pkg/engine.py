"""
Engine - benchmark dispatch
Routes each pattern to the verbs or stream implementation and finishes the
RunReport (latency digest, counter comparison).
"""
import logging
from typing import Tuple, Union

from benchmarks import stream, verbs
from benchmarks.pacing import PacingResult, QueueWatch, pace_send_queue
from models import BenchmarkConfig, BenchmarkMode, RunReport, SchedulePoint, TransportKind
from overhead import compare_counters
from simverbs import SimQueuePair
from stats import summarize
from transport import Transport

logger = logging.getLogger(__name__)

BenchEndpoint = Union[Transport, Tuple[SimQueuePair, SimQueuePair]]

__all__ = [
    "PacingResult",
    "QueueWatch",
    "pace_send_queue",
    "run_unidirectional",
    "run_bidirectional",
    "run_onesided_latency",
    "run_pingpong",
    "run_point",
]


def _is_simulated(endpoint: BenchEndpoint) -> bool:
    return isinstance(endpoint, tuple) and all(isinstance(qp, SimQueuePair) for qp in endpoint)


def _finish(report: RunReport) -> RunReport:
    if report.latency is not None and len(report.latency):
        return report.model_copy(update={"summary": summarize(report.latency)})
    return report


def run_unidirectional(endpoint: BenchEndpoint, point: SchedulePoint, config: BenchmarkConfig,
                       run_index: int = 1) -> RunReport:
    impl = verbs if _is_simulated(endpoint) else stream
    return _finish(impl.unidirectional(endpoint, point, config, run_index))


def run_bidirectional(endpoint: BenchEndpoint, point: SchedulePoint, config: BenchmarkConfig,
                      run_index: int = 1) -> RunReport:
    impl = verbs if _is_simulated(endpoint) else stream
    return _finish(impl.bidirectional(endpoint, point, config, run_index))


def run_onesided_latency(endpoint: BenchEndpoint, point: SchedulePoint, config: BenchmarkConfig,
                         run_index: int = 1) -> RunReport:
    impl = verbs if _is_simulated(endpoint) else stream
    return _finish(impl.onesided_latency(endpoint, point, config, run_index))


def run_pingpong(endpoint: BenchEndpoint, point: SchedulePoint, config: BenchmarkConfig,
                 run_index: int = 1) -> RunReport:
    impl = verbs if _is_simulated(endpoint) else stream
    return _finish(impl.pingpong(endpoint, point, config, run_index))


def run_overhead(endpoint: BenchEndpoint, point: SchedulePoint, config: BenchmarkConfig,
                 run_index: int = 1) -> RunReport:
    """Aggregation-free ping-pong, then the port counters against the analytic model."""
    report = run_pingpong(endpoint, point, config, run_index)
    if report.wire_bytes is None:
        return report
    messages = 2 * report.messages
    comparison = compare_counters(
        report.wire_bytes,
        report.payload_bytes_moved,
        messages,
        kind=TransportKind.RC_MSG,
        mtu=config.mtu,
        payload_size=point.payload_size,
    )
    if comparison.anomaly:
        logger.warning("counter below analytic headers at %dB: residual %.2f",
                       point.payload_size, comparison.residual_unmodeled)
    return report.model_copy(update={"overhead": comparison})


_RUNNERS = {
    BenchmarkMode.UNIDIR: run_unidirectional,
    BenchmarkMode.BIDIR: run_bidirectional,
    BenchmarkMode.LATENCY: run_onesided_latency,
    BenchmarkMode.PINGPONG: run_pingpong,
    BenchmarkMode.OVERHEAD: run_overhead,
}


def run_point(endpoint: BenchEndpoint, point: SchedulePoint, config: BenchmarkConfig,
              run_index: int = 1) -> RunReport:
    runner = _RUNNERS.get(config.mode)
    if runner is None:
        raise ValueError(f"Unknown mode: {config.mode}")
    report = runner(endpoint, point, config, run_index)
    logger.debug("%s %dB run %d: %d msgs in %d ns", config.mode.value, point.payload_size,
                 run_index, report.messages, report.elapsed_ns)
    return report
