"""
Transport - blocking byte channels
The Transport contract plus the TCP implementation and its 18-byte parameter handshake.
"""
import logging
import socket
import struct
import time
from abc import ABC, abstractmethod
from typing import Optional, Tuple, Union

from errors import HandshakeError, ProtocolError, TransportError, TruncationError
from models import BenchmarkConfig, BenchmarkMode, Endpoint, HandshakeInfo, SchedulePoint

logger = logging.getLogger(__name__)

HANDSHAKE_MAGIC = b"WBJ1"
HANDSHAKE_VERSION = 1
# magic, version, mode ordinal, payload_size (LE u32), message_count (LE u64)
HANDSHAKE_FRAME = struct.Struct("<4sBBIQ")
HANDSHAKE_SIZE = HANDSHAKE_FRAME.size
# sent by each peer after a run it completed; a peer that failed closes instead
RUN_CONFIRM = b"\x11"

BufferLike = Union[bytes, bytearray, memoryview]


def pack_handshake(info: HandshakeInfo) -> bytes:
    return HANDSHAKE_FRAME.pack(info.magic, info.version, info.mode, info.payload_size, info.message_count)


def unpack_handshake(frame: bytes) -> HandshakeInfo:
    if len(frame) != HANDSHAKE_SIZE:
        raise HandshakeError(f"handshake frame has {len(frame)} bytes, expected {HANDSHAKE_SIZE}")
    magic, version, mode, payload_size, message_count = HANDSHAKE_FRAME.unpack(frame)
    if magic != HANDSHAKE_MAGIC:
        raise HandshakeError("not a wirebench peer", field="magic")
    if version != HANDSHAKE_VERSION:
        raise HandshakeError(f"version mismatch: local {HANDSHAKE_VERSION}, peer {version}", field="version")
    return HandshakeInfo(magic=magic, version=version, mode=mode,
                         payload_size=payload_size, message_count=message_count)


def handshake_for(config: BenchmarkConfig, point: Optional[SchedulePoint] = None) -> HandshakeInfo:
    """The session frame carries the first schedule point; later frames carry each point."""
    if point is None:
        size, count = config.min_size, config.base_count or 0
    else:
        size, count = point.payload_size, point.message_count
    return HandshakeInfo(mode=config.mode.ordinal, payload_size=size, message_count=count)


def compare_handshake(local: HandshakeInfo, peer: HandshakeInfo) -> None:
    for field in ("mode", "payload_size", "message_count"):
        mine, theirs = getattr(local, field), getattr(peer, field)
        if mine != theirs:
            if field == "mode":
                mine = BenchmarkMode.from_ordinal(mine).value
                theirs = BenchmarkMode.from_ordinal(theirs).value if theirs < len(BenchmarkMode) else theirs
            raise HandshakeError(f"{field} mismatch: local {mine}, peer {theirs}", field=field)


class Transport(ABC):
    """
    Blocking, full-duplex byte channel. One context may send while another
    receives; no other sharing is supported. Hardware RDMA bindings would
    implement this contract.
    """

    bytes_sent: int = 0
    bytes_received: int = 0

    @abstractmethod
    def send_blocking(self, payload: BufferLike) -> None:
        """Return once every byte was accepted by the channel (not necessarily delivered)."""

    @abstractmethod
    def recv_into(self, view: memoryview) -> None:
        """Fill view completely or raise TruncationError."""

    def recv_blocking(self, length: int) -> bytes:
        if length == 0:
            return b""
        buffer = bytearray(length)
        self.recv_into(memoryview(buffer))
        return bytes(buffer)

    @abstractmethod
    def close(self) -> None:
        ...

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class Connection(Transport):
    """An established TCP session that passed the handshake."""

    def __init__(self, sock: socket.socket, peer: Tuple, info: HandshakeInfo, config: BenchmarkConfig):
        self.sock = sock
        self.peer = peer
        self.info = info
        self.config = config
        self.bytes_sent = 0
        self.bytes_received = 0
        self.closed = False

    def set_nodelay(self, enabled: bool) -> None:
        self.sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1 if enabled else 0)

    def send_blocking(self, payload: BufferLike) -> None:
        try:
            self.sock.sendall(payload)
        except socket.timeout as exc:
            raise TransportError(f"send stalled for {self.sock.gettimeout()} s") from exc
        except OSError as exc:
            raise TransportError(f"send to {self.peer} failed: {exc}") from exc
        self.bytes_sent += len(payload)

    def recv_into(self, view: memoryview) -> None:
        expected = len(view)
        got = 0
        while got < expected:
            try:
                n = self.sock.recv_into(view[got:])
            except socket.timeout as exc:
                raise TransportError(
                    f"no data for {self.sock.gettimeout()} s after {got} of {expected} bytes"
                ) from exc
            except OSError as exc:
                raise TransportError(f"receive from {self.peer} failed: {exc}") from exc
            if n == 0:
                self.bytes_received += got
                raise TruncationError(expected, got, bytes(view[:got]))
            got += n
        self.bytes_received += got

    def exchange_frame(self, local: HandshakeInfo) -> HandshakeInfo:
        """Send our frame, read the peer's, and reject any disagreement."""
        self.send_blocking(pack_handshake(local))
        peer = unpack_handshake(self.recv_blocking(HANDSHAKE_SIZE))
        compare_handshake(local, peer)
        return peer

    def confirm_run(self) -> None:
        """Trade outcome tokens. Raises unless both peers finished the run."""
        try:
            self.send_blocking(RUN_CONFIRM)
            token = self.recv_blocking(1)
        except TransportError as exc:
            raise TransportError(f"peer abandoned the run: {exc}") from exc
        if token != RUN_CONFIRM:
            raise ProtocolError(f"expected run confirmation, got {token!r}")

    def negotiate(self, point: SchedulePoint) -> HandshakeInfo:
        """Re-negotiation before each run on a reused session."""
        self.info = self.exchange_frame(handshake_for(self.config, point))
        return self.info

    def close(self) -> None:
        if self.closed:
            return
        self.closed = True
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()


def _establish(sock: socket.socket, peer: Tuple, config: BenchmarkConfig) -> Connection:
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1 if config.effective_nodelay else 0)
    sock.settimeout(config.timeout_s)
    conn = Connection(sock, peer, handshake_for(config), config)
    try:
        conn.info = conn.exchange_frame(handshake_for(config))
    except Exception:
        conn.close()
        raise
    sock.settimeout(config.watchdog_s)
    logger.info("connected to %s (%s, nodelay=%s)", peer, config.mode.value, config.effective_nodelay)
    return conn


class Listener:
    """A bound listening socket; port 0 picks a free port."""

    def __init__(self, endpoint: Endpoint):
        try:
            self.sock = socket.create_server((endpoint.host, endpoint.port), reuse_port=False)
        except OSError as exc:
            raise TransportError(f"cannot bind {endpoint}: {exc}") from exc
        self.host, self.port = self.sock.getsockname()[:2]

    def accept(self, config: BenchmarkConfig) -> Connection:
        self.sock.settimeout(config.timeout_s)
        try:
            sock, peer = self.sock.accept()
        except socket.timeout as exc:
            raise TransportError(f"no client within {config.timeout_s} s") from exc
        except OSError as exc:
            raise TransportError(f"accept failed: {exc}") from exc
        return _establish(sock, peer, config)

    def close(self) -> None:
        self.sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def open_listener(endpoint: Endpoint) -> Listener:
    return Listener(endpoint)


def listen(endpoint: Endpoint, config: BenchmarkConfig) -> Connection:
    """Accept exactly one client and validate its handshake."""
    with open_listener(endpoint) as listener:
        logger.info("listening on %s:%d", listener.host, listener.port)
        return listener.accept(config)


def connect(endpoint: Endpoint, config: BenchmarkConfig) -> Connection:
    """Connect, retrying refusals until timeout_s, then exchange handshakes."""
    deadline = time.monotonic() + config.timeout_s
    while True:
        remaining = deadline - time.monotonic()
        if remaining <= 0:
            raise TransportError(f"could not reach {endpoint} within {config.timeout_s} s")
        try:
            sock = socket.create_connection((endpoint.host, endpoint.port), timeout=remaining)
            break
        except ConnectionRefusedError:
            time.sleep(min(0.1, max(0.0, remaining)))
        except socket.timeout as exc:
            raise TransportError(f"timed out connecting to {endpoint}") from exc
        except OSError as exc:
            raise TransportError(f"cannot connect to {endpoint}: {exc}") from exc
    return _establish(sock, sock.getpeername(), config)
