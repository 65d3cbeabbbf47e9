"""
Shared fixtures: small validated configs and loopback TCP pairs.
"""
import socket
import threading
from concurrent.futures import ThreadPoolExecutor

import pytest

from models import Endpoint, Role, TransportKind
from schedule import build_config
from transport import connect, open_listener

LOOPBACK = "127.0.0.1"


@pytest.fixture
def make_config():
    """Validated config with small defaults; keyword overrides win."""
    def _make(**fields):
        fields.setdefault("transport", TransportKind.RC_MSG)
        fields.setdefault("base_count", 100)
        fields.setdefault("min_size", 1)
        fields.setdefault("max_size", 1)
        return build_config(**fields)
    return _make


@pytest.fixture
def tcp_configs(make_config):
    """(server_config, client_config) for the same stream benchmark."""
    def _make(**fields):
        fields.setdefault("transport", TransportKind.RAW_STREAM)
        fields.setdefault("timeout_s", 5.0)
        fields.setdefault("watchdog_s", 10.0)
        server = make_config(role=Role.SERVER, endpoint=Endpoint(host=LOOPBACK, port=0), **fields)
        client = make_config(role=Role.CLIENT, endpoint=Endpoint(host=LOOPBACK, port=0), **fields)
        return server, client
    return _make


@pytest.fixture
def tcp_pair():
    """Open a handshaken loopback session; returns (server_conn, client_conn)."""
    opened = []

    def _open(server_config, client_config):
        listener = open_listener(Endpoint(host=LOOPBACK, port=0))
        accepted = {}

        def accept():
            try:
                accepted["conn"] = listener.accept(server_config)
            except Exception as exc:
                accepted["error"] = exc

        thread = threading.Thread(target=accept, daemon=True)
        thread.start()
        try:
            client = connect(Endpoint(host=LOOPBACK, port=listener.port), client_config)
        finally:
            thread.join(timeout=10)
            listener.close()
        if "error" in accepted:
            client.close()
            raise accepted["error"]
        server = accepted["conn"]
        opened.extend([server, client])
        return server, client

    yield _open
    for conn in opened:
        conn.close()


def run_both(server_fn, client_fn):
    """Run the two peers' halves concurrently and return (server_result, client_result)."""
    with ThreadPoolExecutor(max_workers=2) as pool:
        server = pool.submit(server_fn)
        client = pool.submit(client_fn)
        return server.result(timeout=120), client.result(timeout=120)


def free_port() -> int:
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as sock:
        sock.bind((LOOPBACK, 0))
        return sock.getsockname()[1]
