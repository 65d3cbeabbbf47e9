"""
Overhead - analytic wire-byte model
Per-packet header arithmetic for each transport kind and comparison against port counters.
"""
import math
from typing import Dict, Iterable, List, Optional

from errors import AccountingError
from models import OverheadReport, TransportKind

# InfiniBand packet components (bytes)
LRH = 8      # local routing header
BTH = 12     # base transport header
ICRC = 4     # invariant CRC
VCRC = 2     # variant CRC
RETH = 16    # RDMA extended transport header
DETH = 8     # datagram extended transport header
RC_BASE = LRH + BTH + ICRC + VCRC

# IP-over-datagram encapsulation
IPOIB_ENCAP = 4
IPV4_HEADER = 20
IPV4_OPTIONS_MAX = 40
LIBVMA_ADDRESS = 4
ETHERNET_HEADER = 14

# Published 1-byte per-message overheads (percent) for the datagram socket stacks.
PUBLISHED_ONE_BYTE_OVERHEAD = {
    TransportKind.UD_IPOIB: 9100.0,
    TransportKind.UD_LIBVMA: 7900.0,
}


def packet_count(payload: int, mtu: int) -> int:
    """Zero-byte messages still occupy one packet."""
    if payload < 0 or mtu < 1:
        raise AccountingError(f"invalid packetization: payload={payload} mtu={mtu}")
    return max(1, -(-payload // mtu))


def per_packet_header(kind: TransportKind, ip_options_bytes: int = 0) -> int:
    kind = TransportKind(kind)
    if kind is TransportKind.RC_MSG:
        return RC_BASE
    if kind in (TransportKind.RC_RDMA_WRITE, TransportKind.RC_RDMA_READ):
        # RETH charged on every packet, not only the first
        return RC_BASE + RETH
    if kind is TransportKind.UD_IPOIB:
        if not 0 <= ip_options_bytes <= IPV4_OPTIONS_MAX:
            raise AccountingError(f"ip_options_bytes out of range: {ip_options_bytes}")
        return RC_BASE + DETH + IPOIB_ENCAP + IPV4_HEADER + ip_options_bytes
    if kind is TransportKind.UD_LIBVMA:
        return RC_BASE + DETH + LIBVMA_ADDRESS + ETHERNET_HEADER
    raise AccountingError(f"{kind.value} has no fixed framing model")


def per_message_wire_bytes(kind: TransportKind, payload: int, mtu: int, ip_options_bytes: int = 0) -> int:
    return payload + packet_count(payload, mtu) * per_packet_header(kind, ip_options_bytes)


def overhead_percent(kind: TransportKind, payload: int, mtu: int, ip_options_bytes: int = 0) -> float:
    if payload < 1:
        raise AccountingError("overhead ratio is undefined for an empty payload")
    overhead = per_message_wire_bytes(kind, payload, mtu, ip_options_bytes) - payload
    return 100.0 * overhead / payload


def analytic_report(kind: TransportKind, payload: int, mtu: int, ip_options_bytes: int = 0) -> OverheadReport:
    packets = packet_count(payload, mtu)
    overhead = packets * per_packet_header(kind, ip_options_bytes)
    return OverheadReport(
        kind=kind,
        payload_size=payload,
        packets=packets,
        wire_bytes_per_message=payload + overhead,
        overhead_bytes=overhead,
        overhead_percent=100.0 * overhead / payload if payload else None,
    )


def overhead_curve(kind: TransportKind, sizes: Iterable[int], mtu: int,
                   ip_options_bytes: int = 0) -> List[OverheadReport]:
    return [analytic_report(kind, size, mtu, ip_options_bytes) for size in sizes]


def compare_counters(measured_xmit: int, payload_total: int, messages: int,
                     kind: TransportKind = TransportKind.RC_MSG, mtu: int = 4096,
                     payload_size: Optional[int] = None, ip_options_bytes: int = 0) -> OverheadReport:
    """
    Split a measured byte counter into payload, modeled headers and the rest.

    residual_unmodeled is measured per-message overhead minus the analytic
    overhead. Positive residuals are retransmissions or software signalling;
    a negative residual means the counter saw less than the headers alone
    and is flagged as an anomaly.
    """
    if messages < 1:
        raise AccountingError("messages must be at least 1")
    if measured_xmit < payload_total:
        raise AccountingError(
            f"measured {measured_xmit} bytes is less than the {payload_total} payload bytes sent"
        )
    if payload_size is None:
        payload_size = payload_total // messages
    measured_overhead = (measured_xmit - payload_total) / messages
    model = analytic_report(kind, payload_size, mtu, ip_options_bytes)
    residual = measured_overhead - model.overhead_bytes
    return OverheadReport(
        kind=kind,
        payload_size=payload_size,
        packets=model.packets,
        wire_bytes_per_message=payload_size + measured_overhead,
        overhead_bytes=measured_overhead,
        overhead_percent=100.0 * measured_overhead / payload_size if payload_size else None,
        residual_unmodeled=residual,
        anomaly=residual < 0,
    )


def known_measurements() -> Dict[TransportKind, OverheadReport]:
    """Decompose the published 1-byte figures into modeled headers and residual signalling."""
    reports = {}
    for kind, percent in PUBLISHED_ONE_BYTE_OVERHEAD.items():
        per_message = 1 + int(round(percent / 100.0))
        reports[kind] = compare_counters(per_message, 1, 1, kind=kind, mtu=4096, payload_size=1)
    return reports
