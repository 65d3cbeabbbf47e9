"""
Verbs Benchmarks
The four measurement patterns over a simulated RC queue-pair pair. All
timing is taken from the fabric's logical clock.
"""
import logging
from typing import List, Optional, Tuple

import numpy as np

from benchmarks.pacing import PacingResult, pacing_task, receive_task
from errors import CompletionError, ProtocolError
from models import BenchmarkConfig, LatencySamples, Role, RunReport, SchedulePoint
from simverbs import (
    CompletionStatus,
    Opcode,
    SimDriver,
    SimQueuePair,
    Task,
    WorkCompletion,
    WorkRequest,
    opcode_for,
)

logger = logging.getLogger(__name__)

QueuePairLink = Tuple[SimQueuePair, SimQueuePair]


def payload_bytes(size: int, seed: int = 0) -> bytearray:
    """Deterministic pseudo-random payload."""
    rng = np.random.default_rng(seed + size)
    return bytearray(rng.integers(0, 256, size=size, dtype=np.uint8).tobytes())


def _wire_snapshot(qps: QueuePairLink) -> Tuple[int, int]:
    return (
        sum(qp.counters.port_xmit_data for qp in qps),
        sum(qp.counters.rnr_nak_retry_err for qp in qps),
    )


def _report(qps: QueuePairLink, before: Tuple[int, int], config: BenchmarkConfig,
            point: SchedulePoint, run_index: int, messages: int, elapsed_ns: int,
            samples: Optional[np.ndarray] = None) -> RunReport:
    wire, naks = _wire_snapshot(qps)
    return RunReport(
        transport=config.transport,
        mode=config.mode,
        role=Role.CLIENT,
        payload_size=point.payload_size,
        run_index=run_index,
        messages=messages,
        elapsed_ns=max(1, elapsed_ns),
        latency=LatencySamples(samples) if samples is not None else None,
        wire_bytes=wire - before[0],
        rnr_naks=naks - before[1],
        payload_bytes_moved=messages * point.payload_size,
    )


def _one_way(sender: SimQueuePair, receiver: SimQueuePair, count: int,
             config: BenchmarkConfig, payload_size: int) -> List[Task]:
    op = opcode_for(config.transport)
    tasks = [pacing_task(sender, count, config.queue_depth, config.post_batch,
                         payload_size=payload_size, op=op)]
    if op is Opcode.SEND:
        tasks.append(receive_task(receiver, count, payload_size,
                                  repost_delay_ns=config.sim_recv_delay_ns))
    return tasks


def _check_conservation(sent: PacingResult, received) -> None:
    if received is not None and received.payload_bytes != sent.completed_bytes:
        raise ProtocolError(
            f"sent {sent.completed_bytes} payload bytes but {received.payload_bytes} arrived"
        )


def _run_streams(qps: QueuePairLink, count: int, config: BenchmarkConfig, payload_size: int,
                 both_ways: bool) -> List[PacingResult]:
    client, server = qps
    directions = [(client, server)] + ([(server, client)] if both_ways else [])
    tasks: List[Task] = []
    for sender, receiver in directions:
        tasks.extend(_one_way(sender, receiver, count, config, payload_size))
    results = SimDriver(client.fabric).run(*tasks)

    per_direction = len(tasks) // len(directions)
    paced = []
    for i in range(len(directions)):
        sent = results[i * per_direction]
        received = results[i * per_direction + 1] if per_direction == 2 else None
        _check_conservation(sent, received)
        paced.append(sent)
    return paced


def unidirectional(qps: QueuePairLink, point: SchedulePoint, config: BenchmarkConfig,
                   run_index: int = 1) -> RunReport:
    if config.warmup_count:
        _run_streams(qps, config.warmup_count, config, point.payload_size, both_ways=False)
    before = _wire_snapshot(qps)
    count = point.message_count - config.warmup_count
    (result,) = _run_streams(qps, count, config, point.payload_size, both_ways=False)
    return _report(qps, before, config, point, run_index, count, result.elapsed_ns)


def bidirectional(qps: QueuePairLink, point: SchedulePoint, config: BenchmarkConfig,
                  run_index: int = 1) -> RunReport:
    if config.warmup_count:
        _run_streams(qps, config.warmup_count, config, point.payload_size, both_ways=True)
    before = _wire_snapshot(qps)
    count = point.message_count - config.warmup_count
    results = _run_streams(qps, count, config, point.payload_size, both_ways=True)
    elapsed = max(r.elapsed_ns for r in results)
    return _report(qps, before, config, point, run_index, 2 * count, elapsed)


# === Single outstanding ===

def _await_send(qp: SimQueuePair, index: int) -> Task:
    while True:
        polled = qp.poll_cq(1)
        if polled:
            break
        yield None
    wc = polled[0]
    if wc.status is not CompletionStatus.OK:
        raise CompletionError(wc, index=index)
    return wc


def _await_recv(qp: SimQueuePair, index: int) -> Task:
    while True:
        polled = qp.poll_recv_cq(1)
        if polled:
            break
        yield None
    wc = polled[0]
    if wc.status is not CompletionStatus.OK:
        raise CompletionError(wc, index=index)
    return wc


def _latency_sender(qp: SimQueuePair, count: int, payload_size: int, op: Opcode,
                    samples: Optional[np.ndarray]) -> Task:
    fabric = qp.fabric
    start = fabric.now_ns
    end = start
    for i in range(count):
        t0 = fabric.now_ns
        qp.post_send(WorkRequest(qp.next_wr_id(), op, payload_size))
        wc: WorkCompletion = yield from _await_send(qp, i)
        end = wc.completed_ns
        if samples is not None:
            samples[i] = wc.completed_ns - t0
    return end - start


def _latency_round(qps: QueuePairLink, count: int, config: BenchmarkConfig, payload_size: int,
                   samples: Optional[np.ndarray]) -> int:
    client, server = qps
    op = opcode_for(config.transport)
    tasks = [_latency_sender(client, count, payload_size, op, samples)]
    if op is Opcode.SEND:
        tasks.append(receive_task(server, count, payload_size,
                                  repost_delay_ns=config.sim_recv_delay_ns))
    return SimDriver(client.fabric).run(*tasks)[0]


def onesided_latency(qps: QueuePairLink, point: SchedulePoint, config: BenchmarkConfig,
                     run_index: int = 1) -> RunReport:
    """Post one message, poll its completion, repeat. Each sample is post-to-completion."""
    if config.warmup_count:
        _latency_round(qps, config.warmup_count, config, point.payload_size, None)
    before = _wire_snapshot(qps)
    count = point.message_count - config.warmup_count
    samples = np.zeros(count, dtype=np.int64)
    elapsed = _latency_round(qps, count, config, point.payload_size, samples)
    return _report(qps, before, config, point, run_index, count, elapsed, samples)


def _ping_task(qp: SimQueuePair, count: int, size: int, verify: bool,
               samples: Optional[np.ndarray]) -> Task:
    fabric = qp.fabric
    ping = payload_bytes(size)
    pong = bytearray(size)
    start = fabric.now_ns
    end = start
    for i in range(count):
        qp.post_recv(WorkRequest(qp.next_wr_id(), Opcode.RECV, size, pong))
        t0 = fabric.now_ns
        qp.post_send(WorkRequest(qp.next_wr_id(), Opcode.SEND, size, ping))
        yield from _await_send(qp, i)
        wc = yield from _await_recv(qp, i)
        if wc.bytes != size:
            raise ProtocolError(f"echo {i} carried {wc.bytes} bytes, expected {size}")
        if verify and pong != ping:
            raise ProtocolError(f"echo {i} differs from its ping")
        end = wc.completed_ns
        if samples is not None:
            samples[i] = wc.completed_ns - t0
    return end - start


def _pong_task(qp: SimQueuePair, count: int, size: int) -> Task:
    echo = bytearray(size)
    qp.post_recv(WorkRequest(qp.next_wr_id(), Opcode.RECV, size, echo))
    for i in range(count):
        wc = yield from _await_recv(qp, i)
        if i + 1 < count:
            qp.post_recv(WorkRequest(qp.next_wr_id(), Opcode.RECV, size, echo))
        qp.post_send(WorkRequest(qp.next_wr_id(), Opcode.SEND, wc.bytes, echo))
        yield from _await_send(qp, i)
    return count


def _pingpong_round(qps: QueuePairLink, count: int, config: BenchmarkConfig, size: int,
                    samples: Optional[np.ndarray]) -> int:
    client, server = qps
    tasks = [_ping_task(client, count, size, config.verify_echo, samples),
             _pong_task(server, count, size)]
    return SimDriver(client.fabric).run(*tasks)[0]


def pingpong(qps: QueuePairLink, point: SchedulePoint, config: BenchmarkConfig,
             run_index: int = 1) -> RunReport:
    """Full round trips; the pong reuses the server's receive buffer so echo integrity is checkable."""
    if config.warmup_count:
        _pingpong_round(qps, config.warmup_count, config, point.payload_size, None)
    before = _wire_snapshot(qps)
    count = point.message_count - config.warmup_count
    samples = np.zeros(count, dtype=np.int64)
    elapsed = _pingpong_round(qps, count, config, point.payload_size, samples)
    report = _report(qps, before, config, point, run_index, count, elapsed, samples)
    # both directions carried payload
    return report.model_copy(update={"payload_bytes_moved": 2 * count * point.payload_size})
