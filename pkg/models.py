"""
Wirebench Data Models - Pydantic 2
Configuration, schedule, statistics and report records shared by every module.
"""
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterable, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from errors import StatsError


# === Enumerations ===

class BenchmarkMode(str, Enum):
    UNIDIR = "unidir"
    BIDIR = "bidir"
    LATENCY = "latency"
    PINGPONG = "pingpong"
    OVERHEAD = "overhead"

    @property
    def ordinal(self) -> int:
        """Position used in the handshake frame."""
        return list(BenchmarkMode).index(self)

    @classmethod
    def from_ordinal(cls, value: int) -> "BenchmarkMode":
        members = list(cls)
        if not 0 <= value < len(members):
            raise ValueError(f"Unknown mode ordinal: {value}")
        return members[value]

    @property
    def single_outstanding(self) -> bool:
        """Modes measured with exactly one message in flight."""
        return self in (BenchmarkMode.LATENCY, BenchmarkMode.PINGPONG, BenchmarkMode.OVERHEAD)


class TransportKind(str, Enum):
    RC_MSG = "rc_msg"
    RC_RDMA_WRITE = "rc_rdma_write"
    RC_RDMA_READ = "rc_rdma_read"
    UD_IPOIB = "ud_ipoib"
    UD_LIBVMA = "ud_libvma"
    RAW_STREAM = "raw_stream"

    @property
    def simulated(self) -> bool:
        return self in (TransportKind.RC_MSG, TransportKind.RC_RDMA_WRITE, TransportKind.RC_RDMA_READ)

    @property
    def rdma(self) -> bool:
        return self in (TransportKind.RC_RDMA_WRITE, TransportKind.RC_RDMA_READ)


class Role(str, Enum):
    SERVER = "server"
    CLIENT = "client"


class PlotKind(str, Enum):
    THROUGHPUT = "throughput"
    LATENCY = "latency"
    OVERHEAD = "overhead"


# === Configuration ===

class Endpoint(BaseModel):
    model_config = ConfigDict(frozen=True)

    host: str = "127.0.0.1"
    port: int = Field(default=9100, ge=0, le=65535)

    @classmethod
    def parse(cls, text: str) -> "Endpoint":
        """Parse 'host:port'; an empty host means all interfaces."""
        host, sep, port = text.rpartition(":")
        if not sep or not port.isdigit():
            raise ValueError(f"expected host:port, got {text!r}")
        return cls(host=host.strip("[]") or "0.0.0.0", port=int(port))

    def __str__(self) -> str:
        return f"{self.host}:{self.port}"


class BenchmarkConfig(BaseModel):
    """One sweep's full parameterization. Cross-field rules live in schedule.validate_config."""
    model_config = ConfigDict(frozen=True)

    mode: BenchmarkMode = BenchmarkMode.UNIDIR
    transport: TransportKind = TransportKind.RC_MSG
    role: Role = Role.CLIENT
    endpoint: Endpoint = Field(default_factory=Endpoint)

    # None until validate_config picks the mode's desk-scale default
    base_count: Optional[int] = Field(default=None, ge=1)
    min_size: int = Field(default=1, ge=1)
    max_size: int = Field(default=1 << 20, ge=1)
    halve_from: int = Field(default=8192, ge=1)

    queue_depth: int = Field(default=128, ge=1)
    post_batch: int = Field(default=1, ge=1)
    runs: int = Field(default=3, ge=1)
    mtu: int = Field(default=4096, ge=1)
    rnr_delay: float = Field(default=10.0, ge=0.0, description="microseconds")
    max_rnr_retries: int = Field(default=7, ge=1)
    warmup_count: int = Field(default=0, ge=0)
    out_dir: Path = Path("results")

    # simulated link
    sim_latency_ns: int = Field(default=1000, ge=0)
    sim_link_gbps: float = Field(default=100.0, ge=0.0)
    sim_recv_delay_ns: int = Field(default=0, ge=0)

    # analytic model knob: optional IPv4 options on IPoIB (0 or up to 40)
    ip_options_bytes: int = Field(default=0, ge=0, le=40)

    # stream transport
    timeout_s: float = Field(default=30.0, gt=0.0)
    watchdog_s: float = Field(default=60.0, gt=0.0)
    connect_retries: int = Field(default=3, ge=0)
    nodelay: Optional[bool] = None
    verify_echo: bool = True

    @property
    def effective_nodelay(self) -> bool:
        if self.nodelay is not None:
            return self.nodelay
        return self.mode.single_outstanding

    @property
    def rnr_delay_ns(self) -> int:
        return int(round(self.rnr_delay * 1000))


class SchedulePoint(BaseModel):
    model_config = ConfigDict(frozen=True)

    payload_size: int = Field(ge=1)
    message_count: int = Field(ge=1)


class HandshakeInfo(BaseModel):
    """Benchmark parameters exchanged before any payload moves."""
    model_config = ConfigDict(frozen=True)

    magic: bytes = b"WBJ1"
    version: int = Field(default=1, ge=0, le=255)
    mode: int = Field(ge=0, le=255)
    payload_size: int = Field(ge=0, le=0xFFFFFFFF)
    message_count: int = Field(ge=0, le=0xFFFFFFFFFFFFFFFF)


# === Statistics ===

class LatencySamples:
    """Raw per-operation durations in nanoseconds."""

    __slots__ = ("_values",)

    def __init__(self, samples: Iterable[int] = ()):
        if isinstance(samples, LatencySamples):
            samples = samples.values
        values = np.array(samples, dtype=np.int64).reshape(-1)
        if values.size and int(values.min()) < 0:
            raise StatsError("latency samples must be non-negative")
        values.setflags(write=False)
        self._values = values

    @property
    def values(self) -> np.ndarray:
        return self._values

    def __len__(self) -> int:
        return int(self._values.size)

    def __iter__(self):
        return iter(self._values.tolist())

    def __repr__(self) -> str:
        return f"LatencySamples(n={len(self)})"


class StatSummary(BaseModel):
    count: int = Field(ge=1)
    avg_us: float
    p50_us: float
    p99_us: float
    p999_us: float
    p9999_us: float
    min_us: float
    max_us: float


class MetricRange(BaseModel):
    min: float
    avg: float
    max: float


class AggregatedPoint(BaseModel):
    payload_size: int = Field(ge=1)
    runs: int = Field(ge=1)
    mmps: MetricRange
    mbps: MetricRange
    avg_us: Optional[MetricRange] = None
    p999_us: Optional[MetricRange] = None
    p9999_us: Optional[MetricRange] = None
    overhead_pct: Optional[MetricRange] = None


# === Overhead ===

class OverheadReport(BaseModel):
    model_config = ConfigDict(use_enum_values=True)

    kind: TransportKind
    payload_size: int = Field(ge=0)
    packets: int = Field(ge=1)
    wire_bytes_per_message: float
    overhead_bytes: float
    overhead_percent: Optional[float] = None
    residual_unmodeled: Optional[float] = None
    anomaly: bool = False


# === Reports ===

class RunReport(BaseModel):
    """Result of one (payload size, run) measurement."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    transport: TransportKind
    mode: BenchmarkMode
    role: Role = Role.CLIENT
    payload_size: int = Field(ge=1)
    run_index: int = Field(ge=1)
    messages: int = Field(ge=0)
    elapsed_ns: int = Field(gt=0)
    latency: Optional[LatencySamples] = Field(default=None, exclude=True)
    summary: Optional[StatSummary] = None
    wire_bytes: Optional[int] = Field(default=None, ge=0)
    rnr_naks: Optional[int] = Field(default=None, ge=0)
    payload_bytes_moved: Optional[int] = Field(default=None, ge=0)
    overhead: Optional[OverheadReport] = None


class CsvRow(BaseModel):
    """One line of the results CSV; empty cells become None."""

    transport: str
    mode: str
    payload_bytes: int = Field(ge=1)
    run: int = Field(ge=1)
    messages: Optional[int] = None
    elapsed_ns: Optional[int] = None
    mmps: Optional[float] = None
    mbps: Optional[float] = None
    lat_avg_us: Optional[float] = None
    lat_p999_us: Optional[float] = None
    lat_p9999_us: Optional[float] = None
    wire_bytes: Optional[int] = None
    overhead_pct: Optional[float] = None
    rnr_naks: Optional[int] = None
    status: Literal["ok", "failed"] = "ok"
    error: Optional[str] = None

    @field_validator("*", mode="before")
    @classmethod
    def empty_to_none(cls, v: Any) -> Any:
        if isinstance(v, str) and v == "":
            return None
        return v


# === Plots ===

class PlotSpec(BaseModel):
    kind: PlotKind
    title: str = ""
    series: Dict[str, List[AggregatedPoint]] = Field(default_factory=dict)
    # series drawn without error bars (analytic reference curves)
    reference: List[str] = Field(default_factory=list)
    latency_metric: Literal["avg_us", "p999_us", "p9999_us"] = "avg_us"
