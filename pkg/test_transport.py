"""
Transport Test Suite
Handshake frame, blocking send/receive semantics and TCP session setup over loopback.
"""
import socket
import struct

import pytest

from conftest import LOOPBACK, free_port, run_both
from errors import HandshakeError, ProtocolError, TransportError, TruncationError
from models import BenchmarkMode, Endpoint, HandshakeInfo, SchedulePoint
from transport import (
    HANDSHAKE_SIZE,
    compare_handshake,
    connect,
    listen,
    open_listener,
    pack_handshake,
    unpack_handshake,
)


# === Frame ===

def test_handshake_frame_layout():
    frame = pack_handshake(HandshakeInfo(mode=3, payload_size=4096, message_count=10))
    assert HANDSHAKE_SIZE == 18
    assert frame == b"WBJ1" + bytes([1, 3]) + (4096).to_bytes(4, "little") + (10).to_bytes(8, "little")
    info = unpack_handshake(frame)
    assert (info.mode, info.payload_size, info.message_count) == (3, 4096, 10)


def test_handshake_rejects_foreign_peer():
    with pytest.raises(HandshakeError, match="not a wirebench peer") as err:
        unpack_handshake(b"HTTP" + bytes(14))
    assert err.value.field == "magic"


def test_handshake_rejects_other_version():
    frame = struct.pack("<4sBBIQ", b"WBJ1", 2, 0, 1, 1)
    with pytest.raises(HandshakeError, match="version mismatch") as err:
        unpack_handshake(frame)
    assert err.value.field == "version"


def test_compare_names_the_field():
    local = HandshakeInfo(mode=0, payload_size=64, message_count=10)
    with pytest.raises(HandshakeError, match="mode mismatch: local unidir, peer pingpong"):
        compare_handshake(local, HandshakeInfo(mode=3, payload_size=64, message_count=10))
    with pytest.raises(HandshakeError, match="message_count mismatch"):
        compare_handshake(local, HandshakeInfo(mode=0, payload_size=64, message_count=11))


# === Sessions ===

def test_connect_and_exchange(tcp_configs, tcp_pair):
    server, client = tcp_pair(*tcp_configs())
    assert server.info == client.info
    assert client.bytes_sent == HANDSHAKE_SIZE
    assert server.bytes_received == HANDSHAKE_SIZE
    print("✅ Loopback session negotiated")


def test_parameter_mismatch_refuses_session(tcp_configs, tcp_pair):
    server_config, _ = tcp_configs(min_size=1, max_size=8)
    _, client_config = tcp_configs(min_size=2, max_size=8)
    with pytest.raises(HandshakeError, match="payload_size mismatch"):
        tcp_pair(server_config, client_config)


def test_listener_rejects_garbage(tcp_configs):
    server_config, _ = tcp_configs()
    listener = open_listener(Endpoint(host=LOOPBACK, port=0))
    raw = socket.create_connection((LOOPBACK, listener.port), timeout=5)
    try:
        raw.sendall(b"GET / HTTP/1.0\r\n\r\n")
        with pytest.raises(HandshakeError, match="not a wirebench peer"):
            listener.accept(server_config)
    finally:
        raw.close()
        listener.close()


@pytest.mark.parametrize("size", [1, 1 << 20])
def test_send_and_receive_exact_bytes(tcp_configs, tcp_pair, size):
    server, client = tcp_pair(*tcp_configs())
    payload = bytes(range(256)) * (size // 256) or b"\x7f"
    _, received = run_both(lambda: server.send_blocking(payload), lambda: client.recv_blocking(len(payload)))
    assert received == payload


def test_consecutive_messages_keep_boundaries(tcp_configs, tcp_pair):
    server, client = tcp_pair(*tcp_configs())
    blocks = [bytes([i]) * 4096 for i in range(3)]

    def send_all():
        for block in blocks:
            client.send_blocking(block)

    received, _ = run_both(lambda: [server.recv_blocking(4096) for _ in blocks], send_all)
    assert received == blocks
    assert server.bytes_received == HANDSHAKE_SIZE + 3 * 4096


def test_truncated_receive(tcp_configs, tcp_pair):
    server, client = tcp_pair(*tcp_configs())
    server.send_blocking(b"x" * 100)
    server.close()
    with pytest.raises(TruncationError) as err:
        client.recv_blocking(200)
    assert err.value.received == 100
    assert err.value.expected == 200
    assert err.value.partial == b"x" * 100


def test_zero_length_receive(tcp_configs, tcp_pair):
    _, client = tcp_pair(*tcp_configs())
    assert client.recv_blocking(0) == b""


def test_send_after_close(tcp_configs, tcp_pair):
    _, client = tcp_pair(*tcp_configs())
    client.close()
    client.close()
    with pytest.raises(TransportError):
        client.send_blocking(b"late")


def test_refused_connect_times_out(tcp_configs):
    _, client_config = tcp_configs(timeout_s=0.3)
    with pytest.raises(TransportError, match="could not reach"):
        connect(Endpoint(host=LOOPBACK, port=free_port()), client_config)


def test_listen_times_out_without_client(tcp_configs):
    server_config, _ = tcp_configs(timeout_s=0.2)
    with pytest.raises(TransportError, match="no client within 0.2 s"):
        listen(Endpoint(host=LOOPBACK, port=0), server_config)


def test_listen_reports_bind_failure():
    with open_listener(Endpoint(host=LOOPBACK, port=0)) as held:
        with pytest.raises(TransportError, match="cannot bind"):
            open_listener(Endpoint(host=LOOPBACK, port=held.port))


@pytest.mark.parametrize("mode,expected", [
    (BenchmarkMode.UNIDIR, False),
    (BenchmarkMode.BIDIR, False),
    (BenchmarkMode.LATENCY, True),
    (BenchmarkMode.PINGPONG, True),
])
def test_nodelay_follows_mode(tcp_configs, tcp_pair, mode, expected):
    server, client = tcp_pair(*tcp_configs(mode=mode))
    for conn in (server, client):
        assert bool(conn.sock.getsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY)) is expected


def test_nodelay_override(tcp_configs, tcp_pair):
    _, client = tcp_pair(*tcp_configs(mode=BenchmarkMode.UNIDIR, nodelay=True))
    assert client.sock.getsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY)


def test_per_point_negotiation(tcp_configs, tcp_pair):
    server, client = tcp_pair(*tcp_configs())
    point = SchedulePoint(payload_size=4096, message_count=50)
    server_info, client_info = run_both(lambda: server.negotiate(point), lambda: client.negotiate(point))
    assert server_info.payload_size == client_info.payload_size == 4096


def test_per_point_disagreement(tcp_configs, tcp_pair):
    server, client = tcp_pair(*tcp_configs())
    with pytest.raises(HandshakeError, match="message_count mismatch"):
        run_both(lambda: server.negotiate(SchedulePoint(payload_size=8, message_count=5)),
                 lambda: client.negotiate(SchedulePoint(payload_size=8, message_count=6)))


# === Run confirmation ===

def test_run_confirmation_round(tcp_configs, tcp_pair):
    server, client = tcp_pair(*tcp_configs())
    run_both(server.confirm_run, client.confirm_run)
    assert server.bytes_received == client.bytes_received == HANDSHAKE_SIZE + 1


def test_closed_peer_fails_confirmation(tcp_configs, tcp_pair):
    """A peer that gave up on a run closes instead of confirming it."""
    server, client = tcp_pair(*tcp_configs())
    client.close()
    with pytest.raises(TransportError, match="peer abandoned the run"):
        server.confirm_run()


def test_stray_byte_is_not_a_confirmation(tcp_configs, tcp_pair):
    server, client = tcp_pair(*tcp_configs())
    client.send_blocking(b"x")
    with pytest.raises(ProtocolError, match="expected run confirmation"):
        server.confirm_run()
