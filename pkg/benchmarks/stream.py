"""
Stream Benchmarks
The four measurement patterns over a blocking byte transport (TCP). Both
peers run the same function; behavior follows the connection's role.
"""
import logging
import struct
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Optional

import numpy as np

from benchmarks.verbs import payload_bytes
from errors import ProtocolError, TransportError
from models import BenchmarkConfig, LatencySamples, Role, RunReport, SchedulePoint
from transport import Transport

logger = logging.getLogger(__name__)

DONE_TOKEN = b"\x06"
ELAPSED_FRAME = struct.Struct("<Q")


def _send_messages(conn: Transport, payload: bytes, count: int) -> int:
    start = time.perf_counter_ns()
    for i in range(count):
        try:
            conn.send_blocking(payload)
        except TransportError as exc:
            raise TransportError(f"message {i}: {exc}") from exc
    return time.perf_counter_ns() - start


def _recv_messages(conn: Transport, size: int, count: int) -> int:
    buffer = memoryview(bytearray(size))
    start = time.perf_counter_ns()
    for i in range(count):
        try:
            conn.recv_into(buffer)
        except TransportError as exc:
            raise TransportError(f"message {i}: {exc}") from exc
    return time.perf_counter_ns() - start


def _sync(conn: Transport, role: Role) -> None:
    """Server acknowledges that everything before this point was drained."""
    if role is Role.SERVER:
        conn.send_blocking(DONE_TOKEN)
    else:
        token = conn.recv_blocking(1)
        if token != DONE_TOKEN:
            raise ProtocolError(f"unexpected completion token {token!r}")


def _report(config: BenchmarkConfig, point: SchedulePoint, run_index: int, messages: int,
            elapsed_ns: int, samples: Optional[np.ndarray] = None,
            payload_moved: Optional[int] = None) -> RunReport:
    return RunReport(
        transport=config.transport,
        mode=config.mode,
        role=config.role,
        payload_size=point.payload_size,
        run_index=run_index,
        messages=messages,
        elapsed_ns=max(1, elapsed_ns),
        latency=LatencySamples(samples) if samples is not None else None,
        payload_bytes_moved=payload_moved if payload_moved is not None else messages * point.payload_size,
    )


def _one_way(conn: Transport, config: BenchmarkConfig, size: int, count: int) -> int:
    if config.role is Role.CLIENT:
        payload = bytes(payload_bytes(size))
        start = time.perf_counter_ns()
        _send_messages(conn, payload, count)
        _sync(conn, Role.CLIENT)
        return time.perf_counter_ns() - start
    elapsed = _recv_messages(conn, size, count)
    _sync(conn, Role.SERVER)
    return elapsed


def unidirectional(conn: Transport, point: SchedulePoint, config: BenchmarkConfig,
                   run_index: int = 1) -> RunReport:
    """
    Client sends, server receives. The client's clock stops when the server's
    one-byte token arrives, so buffered data still in flight is included.
    """
    if config.warmup_count:
        _one_way(conn, config, point.payload_size, config.warmup_count)
    count = point.message_count - config.warmup_count
    elapsed = _one_way(conn, config, point.payload_size, count)
    return _report(config, point, run_index, count, elapsed)


def _both_ways(conn: Transport, size: int, count: int) -> int:
    payload = bytes(payload_bytes(size))
    start = time.perf_counter_ns()
    with ThreadPoolExecutor(max_workers=2, thread_name_prefix="wirebench") as pool:
        sending = pool.submit(_send_messages, conn, payload, count)
        receiving = pool.submit(_recv_messages, conn, size, count)
        sending.result()
        receiving.result()
    return time.perf_counter_ns() - start


def bidirectional(conn: Transport, point: SchedulePoint, config: BenchmarkConfig,
                  run_index: int = 1) -> RunReport:
    """Both peers send and receive at once; the report keeps the slower peer's time."""
    if config.warmup_count:
        _both_ways(conn, point.payload_size, config.warmup_count)
    count = point.message_count - config.warmup_count
    local = _both_ways(conn, point.payload_size, count)
    conn.send_blocking(ELAPSED_FRAME.pack(local))
    (remote,) = ELAPSED_FRAME.unpack(conn.recv_blocking(ELAPSED_FRAME.size))
    return _report(config, point, run_index, 2 * count, max(local, remote))


def _timed_sends(conn: Transport, payload: bytes, samples: Optional[np.ndarray], count: int) -> int:
    start = time.perf_counter_ns()
    for i in range(count):
        t0 = time.perf_counter_ns()
        try:
            conn.send_blocking(payload)
        except TransportError as exc:
            raise TransportError(f"message {i}: {exc}") from exc
        if samples is not None:
            samples[i] = time.perf_counter_ns() - t0
    return time.perf_counter_ns() - start


def onesided_latency(conn: Transport, point: SchedulePoint, config: BenchmarkConfig,
                     run_index: int = 1) -> RunReport:
    """
    Per-send latency. A stream send returns once the kernel took the bytes, so
    these samples are a lower bound on delivery time.
    """
    size = point.payload_size
    count = point.message_count - config.warmup_count
    if config.role is Role.SERVER:
        if config.warmup_count:
            _recv_messages(conn, size, config.warmup_count)
            _sync(conn, Role.SERVER)
        elapsed = _recv_messages(conn, size, count)
        _sync(conn, Role.SERVER)
        return _report(config, point, run_index, count, elapsed)

    payload = bytes(payload_bytes(size))
    if config.warmup_count:
        _timed_sends(conn, payload, None, config.warmup_count)
        _sync(conn, Role.CLIENT)
    samples = np.zeros(count, dtype=np.int64)
    elapsed = _timed_sends(conn, payload, samples, count)
    _sync(conn, Role.CLIENT)
    return _report(config, point, run_index, count, elapsed, samples)


def _ping(conn: Transport, ping: bytes, pong: memoryview, verify: bool,
          samples: Optional[np.ndarray], count: int) -> int:
    start = time.perf_counter_ns()
    for i in range(count):
        t0 = time.perf_counter_ns()
        conn.send_blocking(ping)
        conn.recv_into(pong)
        if samples is not None:
            samples[i] = time.perf_counter_ns() - t0
        if verify and pong != ping:
            raise ProtocolError(f"echo {i} differs from its ping")
    return time.perf_counter_ns() - start


def _pong(conn: Transport, echo: memoryview, count: int) -> int:
    start = time.perf_counter_ns()
    for _ in range(count):
        conn.recv_into(echo)
        conn.send_blocking(echo)
    return time.perf_counter_ns() - start


def pingpong(conn: Transport, point: SchedulePoint, config: BenchmarkConfig,
             run_index: int = 1) -> RunReport:
    """Client times each full round trip; server echoes every message unchanged."""
    size = point.payload_size
    count = point.message_count - config.warmup_count
    buffer = memoryview(bytearray(size))
    if config.role is Role.SERVER:
        if config.warmup_count:
            _pong(conn, buffer, config.warmup_count)
        elapsed = _pong(conn, buffer, count)
        return _report(config, point, run_index, count, elapsed, payload_moved=2 * count * size)

    ping = bytes(payload_bytes(size))
    if config.warmup_count:
        _ping(conn, ping, buffer, config.verify_echo, None, config.warmup_count)
    samples = np.zeros(count, dtype=np.int64)
    elapsed = _ping(conn, ping, buffer, config.verify_echo, samples, count)
    return _report(config, point, run_index, count, elapsed, samples, payload_moved=2 * count * size)
