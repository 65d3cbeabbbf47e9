"""
Send Queue Pacing
Keeps a simulated send queue full: fill to depth, then refill in batch
multiples as soon as enough completions have been polled.
"""
import logging
from collections import deque
from dataclasses import dataclass
from typing import Deque, Optional

from errors import CompletionError, ConfigurationError, ProtocolError
from simverbs import (
    CompletionStatus,
    Opcode,
    SimDriver,
    SimQueuePair,
    Task,
    WakeAt,
    WorkRequest,
)

logger = logging.getLogger(__name__)


@dataclass
class QueueWatch:
    """Counts moments outside a poll call where work is pending but the queue is empty."""
    empty_events: int = 0
    checks: int = 0

    def checkpoint(self, qp: SimQueuePair, pending: int) -> None:
        self.checks += 1
        if pending > 0 and qp.occupancy == 0:
            self.empty_events += 1


@dataclass
class PacingResult:
    elapsed_ns: int
    completions: int
    completed_bytes: int
    max_occupancy: int
    post_calls: int


@dataclass
class ReceiveResult:
    messages: int
    payload_bytes: int


def _post_chunked(qp: SimQueuePair, count: int, batch: int, payload_size: int, op: Opcode) -> None:
    while count > 0:
        chunk = min(batch, count)
        qp.post_send_batch([WorkRequest(qp.next_wr_id(), op, payload_size) for _ in range(chunk)])
        count -= chunk


def pacing_task(qp: SimQueuePair, total: int, depth: int, batch: int, *,
                payload_size: int = 1, op: Opcode = Opcode.SEND,
                watch: Optional[QueueWatch] = None) -> Task:
    if total < 1:
        raise ConfigurationError("total must be at least 1")
    if batch < 1 or batch > depth:
        raise ConfigurationError("post_batch exceeds queue_depth")
    if depth > qp.queue_depth:
        raise ConfigurationError(f"depth {depth} exceeds the queue pair's {qp.queue_depth}")

    fabric = qp.fabric
    qp.max_occupancy = qp.occupancy
    calls_before = qp.post_calls
    start_ns = fabric.now_ns
    end_ns = start_ns

    posted = min(total, (depth // batch) * batch)
    _post_chunked(qp, posted, batch, payload_size, op)
    completed = 0
    completed_bytes = 0

    while completed < total:
        polled = qp.poll_cq(depth)
        for wc in polled:
            if wc.status is not CompletionStatus.OK:
                raise CompletionError(wc, index=completed)
            completed += 1
            completed_bytes += wc.bytes
            end_ns = wc.completed_ns

        remaining = total - posted
        if remaining:
            free = depth - qp.occupancy
            refill = min(remaining, free - free % batch)
            if refill == 0 and remaining < batch and free >= remaining:
                refill = remaining
            if refill:
                _post_chunked(qp, refill, batch, payload_size, op)
                posted += refill

        if watch is not None:
            watch.checkpoint(qp, total - completed)
        if completed < total and not polled:
            yield None

    return PacingResult(
        elapsed_ns=max(1, end_ns - start_ns),
        completions=completed,
        completed_bytes=completed_bytes,
        max_occupancy=qp.max_occupancy,
        post_calls=qp.post_calls - calls_before,
    )


def receive_task(qp: SimQueuePair, total: int, buffer_size: int, *,
                 repost_delay_ns: int = 0) -> Task:
    """
    Keep receive buffers posted for `total` incoming SENDs.

    A consumed buffer is re-posted repost_delay_ns after its completion was
    polled; a delay longer than the sender's service time starves the receive
    queue and produces RNR NAKs.
    """
    fabric = qp.fabric
    posted = min(total, qp.recv_depth)
    for _ in range(posted):
        qp.post_recv(WorkRequest(qp.next_wr_id(), Opcode.RECV, buffer_size))

    received = 0
    payload_bytes = 0
    reposts: Deque[int] = deque()
    while received < total:
        polled = qp.poll_recv_cq(qp.recv_depth)
        for wc in polled:
            if wc.status is not CompletionStatus.OK:
                raise CompletionError(wc, index=received)
            received += 1
            payload_bytes += wc.bytes
            if posted + len(reposts) < total:
                reposts.append(fabric.now_ns + repost_delay_ns)
        while reposts and reposts[0] <= fabric.now_ns:
            reposts.popleft()
            qp.post_recv(WorkRequest(qp.next_wr_id(), Opcode.RECV, buffer_size))
            posted += 1
        if received >= total or polled:
            continue
        yield WakeAt(reposts[0]) if reposts else None

    return ReceiveResult(messages=received, payload_bytes=payload_bytes)


def pace_send_queue(qp: SimQueuePair, total: int, depth: int, batch: int, *,
                    payload_size: int = 1, op: Opcode = Opcode.SEND,
                    watch: Optional[QueueWatch] = None, repost_delay_ns: int = 0) -> PacingResult:
    """
    Drive `total` sends through qp with the keep-full pattern and return once
    every completion is collected. SENDs get a receiver on the peer.
    """
    tasks = [pacing_task(qp, total, depth, batch, payload_size=payload_size, op=op, watch=watch)]
    if op is Opcode.SEND:
        tasks.append(receive_task(qp.peer, total, payload_size, repost_delay_ns=repost_delay_ns))
    results = SimDriver(qp.fabric).run(*tasks)
    result = results[0]
    if op is Opcode.SEND and results[1].payload_bytes != result.completed_bytes:
        raise ProtocolError(
            f"sent {result.completed_bytes} payload bytes but {results[1].payload_bytes} arrived"
        )
    logger.debug("paced %d x %dB: %d ns, %d post calls", total, payload_size,
                 result.elapsed_ns, result.post_calls)
    return result
