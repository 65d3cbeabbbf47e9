"""
Simulated Verbs - in-process RC queue pairs
Work queues, completion queues, MTU packetization, RNR NAK back-pressure and
port_xmit_data-style wire accounting on a deterministic logical clock.
"""
import math
import threading
from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Deque, Generator, List, Optional, Tuple, Union

from errors import InvalidWorkRequest, QueueFullError, SimulationStalled, UnknownCounterError, VerbsError
from models import BenchmarkConfig, TransportKind
from overhead import per_message_wire_bytes


class Opcode(str, Enum):
    SEND = "send"
    RDMA_WRITE = "rdma_write"
    RDMA_READ = "rdma_read"
    RECV = "recv"


class CompletionStatus(str, Enum):
    OK = "ok"
    RNR_RETRY_EXCEEDED = "rnr_retry_exceeded"
    ERROR = "error"


SEND_OPCODES = (Opcode.SEND, Opcode.RDMA_WRITE, Opcode.RDMA_READ)

# wire framing charged per opcode
_FRAMING = {
    Opcode.SEND: TransportKind.RC_MSG,
    Opcode.RDMA_WRITE: TransportKind.RC_RDMA_WRITE,
    Opcode.RDMA_READ: TransportKind.RC_RDMA_READ,
}

Buffer = Union[bytearray, memoryview]


@dataclass(slots=True)
class WorkRequest:
    id: int
    op: Opcode
    payload_size: int = 0
    buffer: Optional[Buffer] = None
    rnr_naks: int = 0


@dataclass(slots=True, frozen=True)
class WorkCompletion:
    request_id: int
    status: CompletionStatus
    bytes: int
    opcode: Opcode
    completed_ns: int = 0


@dataclass(slots=True)
class CounterSet:
    port_xmit_data: int = 0
    rnr_nak_retry_err: int = 0
    messages_completed: int = 0


COUNTER_NAMES = ("port_xmit_data", "rnr_nak_retry_err", "messages_completed")


@dataclass(slots=True, frozen=True)
class Delivery:
    time_ns: int
    source_port: int
    opcode: Opcode
    payload_size: int


def opcode_for(kind: TransportKind) -> Opcode:
    kind = TransportKind(kind)
    for op, framing in _FRAMING.items():
        if framing is kind:
            return op
    raise InvalidWorkRequest(f"{kind.value} is not a simulated verbs transport")


class SimFabric:
    """Shared logical clock and event ordering for one linked pair of ports."""

    def __init__(self, config: BenchmarkConfig, record_deliveries: bool = False):
        self.now_ns = 0
        self.lock = threading.RLock()
        self.latency_ns = config.sim_latency_ns
        self.link_gbps = config.sim_link_gbps
        self.rnr_delay_ns = config.rnr_delay_ns
        self.max_rnr_retries = config.max_rnr_retries
        self.ports: List["SimQueuePair"] = []
        self.delivery_log: Optional[List[Delivery]] = [] if record_deliveries else None

    def service_ns(self, wire_bytes: int) -> int:
        """One-way latency plus serialization at the link rate (bits / Gbit/s = ns)."""
        if self.link_gbps <= 0:
            return self.latency_ns
        return self.latency_ns + math.ceil(wire_bytes * 8 / self.link_gbps)

    def next_event_ns(self) -> Optional[int]:
        due = [port._head_due_ns for port in self.ports if port._head_due_ns is not None]
        return min(due) if due else None

    def step(self, until_ns: Optional[int] = None) -> bool:
        """
        Process the earliest pending transmission.

        Returns False when nothing is due at or before until_ns; the clock then
        moves forward to until_ns.
        """
        with self.lock:
            due = self.next_event_ns()
            if due is None or (until_ns is not None and due > until_ns):
                if until_ns is not None and until_ns > self.now_ns:
                    self.now_ns = until_ns
                return False
            # ties go to the lower port number
            port = min((p for p in self.ports if p._head_due_ns == due), key=lambda p: p.port_num)
            self.now_ns = max(self.now_ns, due)
            port._transmit_head()
            return True

    def advance_to(self, time_ns: int) -> None:
        while self.step(until_ns=time_ns):
            pass

    def run_until_idle(self, max_events: int = 10_000_000) -> int:
        processed = 0
        while self.step():
            processed += 1
            if processed >= max_events:
                raise SimulationStalled(f"fabric still busy after {max_events} events")
        return processed


class SimQueuePair:
    """
    One RC endpoint. Occupancy counts send work requests posted and not yet
    polled, so a slot is only reusable after its completion is harvested.
    """

    service = "RC"

    def __init__(self, fabric: SimFabric, port_num: int, queue_depth: int, mtu: int,
                 kind: TransportKind = TransportKind.RC_MSG, recv_depth: Optional[int] = None):
        self.fabric = fabric
        self.port_num = port_num
        self.queue_depth = queue_depth
        self.recv_depth = recv_depth or queue_depth
        self.mtu = mtu
        self.kind = kind
        self.peer: Optional["SimQueuePair"] = None

        self.send_queue: Deque[WorkRequest] = deque()
        self.recv_queue: Deque[WorkRequest] = deque()
        self.completion_queue: Deque[WorkCompletion] = deque()
        self.recv_completion_queue: Deque[WorkCompletion] = deque()
        self.counters = CounterSet()

        self.max_occupancy = 0
        self.post_calls = 0
        self._outstanding: set = set()
        # ids below the floor were all posted; the set holds the posted ids above it
        self._used_floor = 1
        self._used_ids: set = set()
        self._head_due_ns: Optional[int] = None
        self._next_id = 1

    # === Introspection ===

    @property
    def occupancy(self) -> int:
        return len(self._outstanding)

    def next_wr_id(self) -> int:
        wr_id = self._next_id
        self._next_id += 1
        return wr_id

    def wire_bytes(self, wr: WorkRequest) -> int:
        return per_message_wire_bytes(_FRAMING[wr.op], wr.payload_size, self.mtu)

    # === Posting ===

    def _check_send(self, wr: WorkRequest, pending_ids: set) -> None:
        if wr.op not in SEND_OPCODES:
            raise InvalidWorkRequest(f"post_send does not accept {wr.op.value}")
        if wr.payload_size < 0:
            raise InvalidWorkRequest("payload_size must be non-negative")
        if wr.buffer is not None and len(wr.buffer) < wr.payload_size:
            raise InvalidWorkRequest(f"buffer of {len(wr.buffer)} bytes is smaller than payload_size")
        if wr.id in self._outstanding or wr.id in pending_ids:
            raise InvalidWorkRequest(f"work request id {wr.id} is already outstanding")
        self._check_fresh(wr.id)

    def _check_fresh(self, wr_id: int) -> None:
        if wr_id < 1:
            raise InvalidWorkRequest(f"work request id must be positive, got {wr_id}")
        if wr_id < self._used_floor or wr_id in self._used_ids:
            raise InvalidWorkRequest(f"work request id {wr_id} was already used on this queue pair")

    def _mark_used(self, wr_id: int) -> None:
        self._used_ids.add(wr_id)
        while self._used_floor in self._used_ids:
            self._used_ids.remove(self._used_floor)
            self._used_floor += 1

    def post_send_batch(self, wrs: List[WorkRequest]) -> None:
        """Post several send work requests in one call; all or none are accepted."""
        with self.fabric.lock:
            if self.occupancy + len(wrs) > self.queue_depth:
                raise QueueFullError(
                    f"send queue full: {self.occupancy} outstanding, depth {self.queue_depth}"
                )
            ids: set = set()
            for wr in wrs:
                self._check_send(wr, ids)
                ids.add(wr.id)
            self.post_calls += 1
            for wr in wrs:
                self._outstanding.add(wr.id)
                self._mark_used(wr.id)
                self.send_queue.append(wr)
                if self._head_due_ns is None:
                    self._head_due_ns = self.fabric.now_ns + self.fabric.service_ns(self.wire_bytes(wr))
            self.max_occupancy = max(self.max_occupancy, self.occupancy)

    def post_send(self, wr: WorkRequest) -> None:
        self.post_send_batch([wr])

    def post_recv(self, wr: WorkRequest) -> None:
        with self.fabric.lock:
            if wr.op is not Opcode.RECV:
                raise InvalidWorkRequest(f"post_recv does not accept {wr.op.value}")
            if len(self.recv_queue) >= self.recv_depth:
                raise QueueFullError(f"receive queue full at depth {self.recv_depth}")
            self._check_fresh(wr.id)
            self._mark_used(wr.id)
            self.recv_queue.append(wr)

    # === Polling ===

    def poll_cq(self, max_entries: int = 1) -> List[WorkCompletion]:
        """Non-blocking; returns up to max_entries send-side completions in completion order."""
        if max_entries < 1:
            raise VerbsError("poll_cq needs max_entries >= 1")
        with self.fabric.lock:
            polled = []
            while self.completion_queue and len(polled) < max_entries:
                wc = self.completion_queue.popleft()
                self._outstanding.discard(wc.request_id)
                polled.append(wc)
            return polled

    def poll_recv_cq(self, max_entries: int = 1) -> List[WorkCompletion]:
        if max_entries < 1:
            raise VerbsError("poll_recv_cq needs max_entries >= 1")
        with self.fabric.lock:
            polled = []
            while self.recv_completion_queue and len(polled) < max_entries:
                polled.append(self.recv_completion_queue.popleft())
            return polled

    def read_counter(self, name: str) -> int:
        if name not in COUNTER_NAMES:
            raise UnknownCounterError(f"unknown counter {name!r}")
        return getattr(self.counters, name)

    # === Fabric side ===

    def _complete_head(self, status: CompletionStatus, completed_bytes: int) -> None:
        now = self.fabric.now_ns
        wr = self.send_queue.popleft()
        self.completion_queue.append(WorkCompletion(wr.id, status, completed_bytes, wr.op, now))
        if status is CompletionStatus.OK:
            self.counters.messages_completed += 1
        if self.send_queue:
            self._head_due_ns = now + self.fabric.service_ns(self.wire_bytes(self.send_queue[0]))
        else:
            self._head_due_ns = None

    def _transmit_head(self) -> None:
        fabric = self.fabric
        wr = self.send_queue[0]
        wire = self.wire_bytes(wr)
        peer = self.peer

        if wr.op is Opcode.RDMA_READ:
            # response data leaves the responder's port
            peer.counters.port_xmit_data += wire
        else:
            self.counters.port_xmit_data += wire

        if wr.op is Opcode.SEND:
            if not peer.recv_queue:
                self.counters.rnr_nak_retry_err += 1
                wr.rnr_naks += 1
                if wr.rnr_naks >= fabric.max_rnr_retries:
                    self._complete_head(CompletionStatus.RNR_RETRY_EXCEEDED, 0)
                else:
                    self._head_due_ns = fabric.now_ns + fabric.rnr_delay_ns
                return
            recv = peer.recv_queue.popleft()
            if recv.payload_size < wr.payload_size:
                peer.recv_completion_queue.append(
                    WorkCompletion(recv.id, CompletionStatus.ERROR, 0, Opcode.RECV, fabric.now_ns))
                self._complete_head(CompletionStatus.ERROR, 0)
                return
            if wr.buffer is not None and recv.buffer is not None:
                recv.buffer[:wr.payload_size] = wr.buffer[:wr.payload_size]
            peer.recv_completion_queue.append(
                WorkCompletion(recv.id, CompletionStatus.OK, wr.payload_size, Opcode.RECV, fabric.now_ns))

        if fabric.delivery_log is not None:
            fabric.delivery_log.append(Delivery(fabric.now_ns, self.port_num, wr.op, wr.payload_size))
        self._complete_head(CompletionStatus.OK, wr.payload_size)


def create_queue_pair_pair(config: BenchmarkConfig,
                           record_deliveries: bool = False) -> Tuple[SimQueuePair, SimQueuePair]:
    """Two connected endpoints sharing one fabric, with empty queues and zeroed counters."""
    fabric = SimFabric(config, record_deliveries=record_deliveries)
    first = SimQueuePair(fabric, 0, config.queue_depth, config.mtu, config.transport)
    second = SimQueuePair(fabric, 1, config.queue_depth, config.mtu, config.transport)
    first.peer, second.peer = second, first
    fabric.ports = [first, second]
    return first, second


# === Cooperative driver ===

@dataclass(frozen=True)
class WakeAt:
    """Yielded by a task that waits for fabric progress or time_ns, whichever comes first."""
    time_ns: int


Task = Generator[Optional[WakeAt], None, object]


@dataclass
class _TaskState:
    gen: Task
    wake_ns: Optional[int] = None
    runnable: bool = True
    done: bool = False
    result: object = None


class SimDriver:
    """
    Runs generator tasks against one fabric in a single thread.

    A task yields None when it is blocked on fabric progress and WakeAt(t) when
    it must also run at time t if nothing else happens first. Each round every
    runnable task is resumed once, then the fabric processes one event (or
    jumps to the earliest wake time).
    """

    def __init__(self, fabric: SimFabric, max_events: Optional[int] = None):
        self.fabric = fabric
        self.max_events = max_events
        self.events = 0

    def run(self, *tasks: Task) -> List[object]:
        states = [_TaskState(gen=task) for task in tasks]
        while True:
            for state in states:
                if state.done or not state.runnable:
                    continue
                try:
                    signal = next(state.gen)
                except StopIteration as stop:
                    state.done = True
                    state.result = stop.value
                    continue
                state.runnable = False
                state.wake_ns = signal.time_ns if isinstance(signal, WakeAt) else None

            waiting = [s for s in states if not s.done]
            if not waiting:
                return [s.result for s in states]

            timed = [s.wake_ns for s in waiting if s.wake_ns is not None]
            next_wake = min(timed) if timed else None
            if next_wake is not None and next_wake <= self.fabric.now_ns:
                progressed = False
            else:
                progressed = self.fabric.step(until_ns=next_wake)
                if not progressed and next_wake is None:
                    raise SimulationStalled(
                        f"{len(waiting)} task(s) blocked with nothing in flight at t={self.fabric.now_ns} ns"
                    )
            if progressed:
                self.events += 1
                if self.max_events is not None and self.events > self.max_events:
                    raise SimulationStalled(f"simulation exceeded {self.max_events} fabric events")

            now = self.fabric.now_ns
            for state in waiting:
                if progressed or (state.wake_ns is not None and state.wake_ns <= now):
                    state.runnable = True
                    state.wake_ns = None
