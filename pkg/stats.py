"""
Stats - latency digests, throughput, multi-run aggregation
Nearest-rank percentiles over raw nanosecond samples; decimal MB/s.
"""
import math
from fractions import Fraction
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from errors import StatsError
from models import AggregatedPoint, CsvRow, LatencySamples, MetricRange, RunReport, StatSummary

SampleInput = Union[LatencySamples, Sequence[int], np.ndarray]

SUMMARY_PERCENTILES = (50, 99, 99.9, 99.99)


def _as_array(samples: SampleInput) -> np.ndarray:
    if isinstance(samples, LatencySamples):
        return samples.values
    return LatencySamples(samples).values


def nearest_rank(p: Union[int, float, str], n: int) -> int:
    """1-based rank ceil(p/100 * n), computed exactly so 99.9 of 1000 is 999."""
    exact = Fraction(str(p)) * n / 100
    return min(n, max(1, math.ceil(exact)))


def _check_p(p) -> None:
    if not 0 < float(p) <= 100:
        raise StatsError(f"percentile must be in (0, 100], got {p}")


def percentile(samples: SampleInput, p: Union[int, float]) -> int:
    values = _as_array(samples)
    if values.size == 0:
        raise StatsError("percentile of an empty sample set")
    _check_p(p)
    ordered = np.sort(values, kind="stable")
    return int(ordered[nearest_rank(p, ordered.size) - 1])


def summarize(samples: SampleInput) -> StatSummary:
    values = _as_array(samples)
    n = int(values.size)
    if n == 0:
        raise StatsError("cannot summarize an empty sample set")
    ordered = np.sort(values, kind="stable")
    low, high = int(ordered[0]), int(ordered[-1])
    ranks = {p: int(ordered[nearest_rank(p, n) - 1]) for p in SUMMARY_PERCENTILES}
    avg = min(max(math.fsum(ordered.tolist()) / n, low), high)
    return StatSummary(
        count=n,
        avg_us=avg / 1000.0,
        p50_us=ranks[50] / 1000.0,
        p99_us=ranks[99] / 1000.0,
        p999_us=ranks[99.9] / 1000.0,
        p9999_us=ranks[99.99] / 1000.0,
        min_us=low / 1000.0,
        max_us=high / 1000.0,
    )


def throughput(messages: int, payload_size: int, elapsed_ns: int) -> Tuple[float, float]:
    """(mmps, MB/s) with decimal megabytes."""
    if elapsed_ns <= 0:
        raise StatsError("elapsed time must be positive")
    mmps = messages * 1e3 / elapsed_ns
    mbps = messages * payload_size * 1e3 / elapsed_ns
    return mmps, mbps


def report_throughput(report: RunReport) -> Tuple[float, float]:
    return throughput(report.messages, report.payload_size, report.elapsed_ns)


# === Aggregation ===

def _range(values: List[float]) -> MetricRange:
    low, high = min(values), max(values)
    avg = math.fsum(values) / len(values)
    return MetricRange(min=low, avg=min(max(avg, low), high), max=high)


def _optional_range(values: Iterable[Optional[float]]) -> Optional[MetricRange]:
    values = list(values)
    if not values or any(v is None for v in values):
        return None
    return _range(values)


def aggregate_metrics(payload_size: int, records: List[Dict[str, Optional[float]]]) -> AggregatedPoint:
    """min / mean / max per metric over runs of one payload size."""
    if not records:
        raise StatsError("nothing to aggregate")
    return AggregatedPoint(
        payload_size=payload_size,
        runs=len(records),
        mmps=_range([r["mmps"] for r in records]),
        mbps=_range([r["mbps"] for r in records]),
        avg_us=_optional_range(r.get("avg_us") for r in records),
        p999_us=_optional_range(r.get("p999_us") for r in records),
        p9999_us=_optional_range(r.get("p9999_us") for r in records),
        overhead_pct=_optional_range(r.get("overhead_pct") for r in records),
    )


def aggregate_runs(reports: List[RunReport]) -> AggregatedPoint:
    if not reports:
        raise StatsError("nothing to aggregate")
    sizes = {r.payload_size for r in reports}
    if len(sizes) != 1:
        raise StatsError(f"cannot aggregate mixed payload sizes {sorted(sizes)}")
    records = []
    for report in reports:
        mmps, mbps = report_throughput(report)
        summary = report.summary
        if summary is None and report.latency is not None and len(report.latency):
            summary = summarize(report.latency)
        records.append({
            "mmps": mmps,
            "mbps": mbps,
            "avg_us": summary.avg_us if summary else None,
            "p999_us": summary.p999_us if summary else None,
            "p9999_us": summary.p9999_us if summary else None,
            "overhead_pct": report.overhead.overhead_percent if report.overhead else None,
        })
    return aggregate_metrics(sizes.pop(), records)


def aggregate_rows(rows: List[CsvRow]) -> List[AggregatedPoint]:
    """One AggregatedPoint per payload size from successful CSV rows, ascending."""
    by_size: Dict[int, List[Dict[str, Optional[float]]]] = {}
    for row in rows:
        if row.status != "ok" or row.mmps is None or row.mbps is None:
            continue
        by_size.setdefault(row.payload_bytes, []).append({
            "mmps": row.mmps,
            "mbps": row.mbps,
            "avg_us": row.lat_avg_us,
            "p999_us": row.lat_p999_us,
            "p9999_us": row.lat_p9999_us,
            "overhead_pct": row.overhead_pct,
        })
    return [aggregate_metrics(size, by_size[size]) for size in sorted(by_size)]
