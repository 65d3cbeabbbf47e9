"""
Schedule - payload sizes, message counts, config validation
Builds the power-of-two sweep and checks a BenchmarkConfig before anything runs.
"""
import re
from typing import Any, Dict, List, Tuple

from pydantic import ValidationError

from errors import ConfigurationError, SizeParseError
from models import BenchmarkConfig, BenchmarkMode, SchedulePoint, TransportKind

KIB = 1 << 10
MIB = 1 << 20

# Desk-scale base counts; the original study used 100 M and 10 M.
THROUGHPUT_BASE_COUNT = 1_000_000
LATENCY_BASE_COUNT = 100_000

_SIZE_PATTERN = re.compile(r"^\s*(\d+)\s*([KkMm]?)\s*$")
_SUFFIX = {"": 1, "k": KIB, "m": MIB}


def is_power_of_two(value: int) -> bool:
    return isinstance(value, int) and value > 0 and value & (value - 1) == 0


def default_base_count(mode: BenchmarkMode) -> int:
    if mode in (BenchmarkMode.UNIDIR, BenchmarkMode.BIDIR):
        return THROUGHPUT_BASE_COUNT
    return LATENCY_BASE_COUNT


def build_schedule(base_count: int, min_size: int, max_size: int, halve_from: int) -> List[SchedulePoint]:
    """
    One point per power of two in [min_size, max_size], ascending.

    Sizes below halve_from get base_count messages. halve_from itself already
    gets half, and every further doubling halves again, never below one.
    """
    problems = []
    for name, value in (("min_size", min_size), ("max_size", max_size), ("halve_from", halve_from)):
        if not is_power_of_two(value):
            problems.append(f"{name} not a power of two")
    if not isinstance(base_count, int) or base_count < 1:
        problems.append("base_count must be at least 1")
    if not problems and min_size > max_size:
        problems.append("min_size exceeds max_size")
    if problems:
        raise ConfigurationError(problems)

    points = []
    size = min_size
    while size <= max_size:
        if size < halve_from:
            count = base_count
        else:
            k = (size // halve_from).bit_length() - 1
            count = max(1, base_count >> (k + 1))
        points.append(SchedulePoint(payload_size=size, message_count=count))
        size <<= 1
    return points


def config_schedule(config: BenchmarkConfig) -> List[SchedulePoint]:
    base = config.base_count or default_base_count(config.mode)
    return build_schedule(base, config.min_size, config.max_size, config.halve_from)


# === Size text ===

def parse_size(text: str) -> int:
    """'4K' -> 4096, '1M' -> 1048576. Suffixes are binary multiples."""
    match = _SIZE_PATTERN.match(str(text))
    if not match:
        raise SizeParseError(f"malformed size {text!r}")
    value = int(match.group(1)) * _SUFFIX[match.group(2).lower()]
    if value == 0:
        raise SizeParseError(f"size must be positive, got {text!r}")
    return value


def parse_size_range(text: str) -> Tuple[int, int]:
    """'1:1M' -> (1, 1048576)."""
    low, sep, high = str(text).partition(":")
    if not sep:
        raise SizeParseError(f"expected MIN:MAX, got {text!r}")
    return parse_size(low), parse_size(high)


def format_size(value: int) -> str:
    if value >= MIB and value % MIB == 0:
        return f"{value // MIB}M"
    if value >= KIB and value % KIB == 0:
        return f"{value // KIB}K"
    return str(value)


def size_label(value: int) -> str:
    """Axis label: 1B, 512B, 4KB, 1MB."""
    return format_size(value) + "B"


# === Config validation ===

def validate_config(config: BenchmarkConfig) -> BenchmarkConfig:
    """
    Check every cross-field invariant and return the effective config.

    All violations are collected into one ConfigurationError. Single-outstanding
    modes (latency, pingpong, overhead) are rewritten to queue_depth=1 and
    post_batch=1, and a missing base_count gets the mode's default.
    """
    problems: List[str] = []
    update: Dict[str, Any] = {}

    for name in ("min_size", "max_size", "halve_from", "mtu"):
        if not is_power_of_two(getattr(config, name)):
            problems.append(f"{name} not a power of two")
    if config.min_size > config.max_size:
        problems.append("min_size exceeds max_size")

    depth, batch = config.queue_depth, config.post_batch
    if config.mode.single_outstanding:
        depth, batch = 1, 1
        update.update(queue_depth=1, post_batch=1)
    if batch > depth:
        problems.append("post_batch exceeds queue_depth")

    transport = config.transport
    if transport in (TransportKind.UD_IPOIB, TransportKind.UD_LIBVMA):
        problems.append(f"transport {transport.value} is only available in the analytic overhead model")
    if transport.rdma and config.mode in (BenchmarkMode.PINGPONG, BenchmarkMode.OVERHEAD):
        problems.append(f"mode {config.mode.value} is not implemented over RDMA transports")
    if config.mode is BenchmarkMode.OVERHEAD and not transport.simulated:
        problems.append("mode overhead needs a simulated transport with port counters")
    if transport.simulated and config.sim_latency_ns == 0 and config.sim_link_gbps == 0:
        problems.append("sim_latency_ns or sim_link_gbps must be positive")

    base = config.base_count or default_base_count(config.mode)
    if config.base_count is None:
        update["base_count"] = base

    if not problems:
        smallest = build_schedule(base, config.min_size, config.max_size, config.halve_from)[-1].message_count
        if config.warmup_count >= smallest:
            problems.append(
                f"warmup_count must be below the smallest scheduled message count ({smallest})"
            )

    if problems:
        raise ConfigurationError(problems)
    return config.model_copy(update=update)


def build_config(**fields: Any) -> BenchmarkConfig:
    """Construct and validate in one step, reporting field errors as ConfigurationError."""
    try:
        config = BenchmarkConfig(**fields)
    except ValidationError as exc:
        problems = [
            f"{'.'.join(str(part) for part in err['loc'])}: {err['msg']}" for err in exc.errors()
        ]
        raise ConfigurationError(problems) from exc
    return validate_config(config)
