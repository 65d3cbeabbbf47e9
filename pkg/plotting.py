"""
Plotting - dual-axis SVG charts with min/avg/max error bars
Rendered from persisted CSV data through the plot.svg jinja2 template.
"""
import logging
import math
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple, Union

from jinja2 import Environment, FileSystemLoader, select_autoescape

from data_manager import read_csv
from errors import PlotError
from models import AggregatedPoint, CsvRow, MetricRange, PlotKind, PlotSpec, TransportKind
from overhead import analytic_report
from schedule import size_label
from stats import aggregate_rows

logger = logging.getLogger(__name__)

TEMPLATES_DIR = Path(__file__).parent / "templates"
WIDTH, HEIGHT = 960, 540
PLOT_LEFT, PLOT_RIGHT, PLOT_TOP, PLOT_BOTTOM = 90, 870, 50, 460
X_MIN_EXP, X_MAX_EXP = 0, 20  # 1B .. 1MB

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"]
DOTTED = "2 3"
REFERENCE_DASH = "7 4"

# (metric, axis, style) drawn for each plot kind; dotted always means message rate
_LAYOUT = {
    PlotKind.THROUGHPUT: [("mmps", "left", "dotted"), ("mbps", "right", "solid")],
    PlotKind.LATENCY: [(None, "left", "solid"), ("mmps", "right", "dotted")],
    PlotKind.OVERHEAD: [("overhead_pct", "left", "solid")],
}
_AXIS_LABELS = {
    "mmps": "message rate [mmps]",
    "mbps": "throughput [MB/s]",
    "avg_us": "average latency [µs]",
    "p999_us": "99.9th percentile latency [µs]",
    "p9999_us": "99.99th percentile latency [µs]",
    "overhead_pct": "overhead per message [%] (log)",
}

_environment = Environment(
    loader=FileSystemLoader(str(TEMPLATES_DIR)),
    autoescape=select_autoescape(enabled_extensions=("svg",)),
    trim_blocks=True,
)


# === Scales ===

def _x(size: int) -> float:
    exp = min(max(math.log2(size), X_MIN_EXP), X_MAX_EXP)
    return PLOT_LEFT + (exp - X_MIN_EXP) / (X_MAX_EXP - X_MIN_EXP) * (PLOT_RIGHT - PLOT_LEFT)


def nice_ceiling(value: float) -> float:
    if value <= 0:
        return 1.0
    magnitude = 10 ** math.floor(math.log10(value))
    for step in (1, 2, 2.5, 5, 10):
        if step * magnitude >= value:
            return step * magnitude
    return 10 * magnitude


class LinearScale:
    def __init__(self, high: float):
        self.high = nice_ceiling(high)

    def y(self, value: float) -> float:
        return PLOT_BOTTOM - value / self.high * (PLOT_BOTTOM - PLOT_TOP)

    def ticks(self) -> List[Dict[str, str]]:
        return [
            {"y": f"{self.y(self.high * i / 5):.1f}", "label": f"{self.high * i / 5:g}"}
            for i in range(6)
        ]


class LogScale:
    def __init__(self, low: float, high: float):
        if low <= 0:
            raise PlotError("log axis needs positive values")
        self.lo_exp = math.floor(math.log10(low))
        self.hi_exp = math.ceil(math.log10(high))
        if self.hi_exp == self.lo_exp:
            self.hi_exp += 1

    def y(self, value: float) -> float:
        frac = (math.log10(value) - self.lo_exp) / (self.hi_exp - self.lo_exp)
        return PLOT_BOTTOM - frac * (PLOT_BOTTOM - PLOT_TOP)

    def ticks(self) -> List[Dict[str, str]]:
        return [
            {"y": f"{self.y(10.0 ** e):.1f}", "label": f"{10.0 ** e:g}%"}
            for e in range(self.lo_exp, self.hi_exp + 1)
        ]


# === Rendering ===

def _metric(point: AggregatedPoint, name: str) -> Optional[MetricRange]:
    return getattr(point, name)


def _validate(spec: PlotSpec) -> None:
    if not spec.series:
        raise PlotError("plot has no series")
    for name, points in spec.series.items():
        if not points:
            raise PlotError(f"series {name!r} has no points")


def render_plot(spec: PlotSpec, path: Union[str, Path]) -> Path:
    """Write a self-contained SVG; error bars span min..max with a marker at avg."""
    _validate(spec)
    kind = PlotKind(spec.kind)
    layout = [(metric or spec.latency_metric, axis, style) for metric, axis, style in _LAYOUT[kind]]

    scales = {}
    labels = {}
    for metric, axis, _ in layout:
        ranges = [
            r for points in spec.series.values() for p in points
            if (r := _metric(p, metric)) is not None
        ]
        if not ranges:
            if axis == "left":
                raise PlotError(f"no {metric} values to plot")
            continue
        if kind is PlotKind.OVERHEAD:
            positive = [r.min for r in ranges if r.min > 0] + [r.max for r in ranges if r.max > 0]
            if not positive:
                raise PlotError("overhead plot needs positive percentages")
            scales[axis] = LogScale(min(positive), max(positive))
        else:
            scales[axis] = LinearScale(max(r.max for r in ranges))
        labels[axis] = _AXIS_LABELS[metric]

    lines, bars, markers, legend = [], [], [], []
    for index, (name, points) in enumerate(spec.series.items()):
        color = PALETTE[index % len(PALETTE)]
        reference = name in spec.reference
        ordered = sorted(points, key=lambda p: p.payload_size)
        for metric, axis, style in layout:
            scale = scales.get(axis)
            if scale is None:
                continue
            coords = []
            for point in ordered:
                value = _metric(point, metric)
                if value is None or (isinstance(scale, LogScale) and value.avg <= 0):
                    continue
                x, y = _x(point.payload_size), scale.y(value.avg)
                coords.append(f"{x:.1f},{y:.1f}")
                if reference:
                    continue
                markers.append({"x": f"{x:.1f}", "y": f"{y:.1f}", "color": color})
                low = value.min if not isinstance(scale, LogScale) or value.min > 0 else value.avg
                bars.append({
                    "x": f"{x:.1f}", "x_left": f"{x - 4:.1f}", "x_right": f"{x + 4:.1f}",
                    "y_min": f"{scale.y(low):.1f}", "y_max": f"{scale.y(value.max):.1f}",
                    "color": color,
                })
            if coords:
                dash = REFERENCE_DASH if reference else (DOTTED if style == "dotted" else None)
                lines.append({"points": " ".join(coords), "color": color, "style": style, "dash": dash})
        legend.append({
            "name": name,
            "color": color,
            "dash": REFERENCE_DASH if reference else None,
            "y": PLOT_TOP + 14 + 16 * index,
        })

    x_ticks = [{"x": f"{_x(1 << e):.1f}", "label": size_label(1 << e)} for e in range(X_MIN_EXP, X_MAX_EXP + 1)]
    right = scales.get("right")
    svg = _environment.get_template("plot.svg").render(
        width=WIDTH,
        height=HEIGHT,
        title=spec.title or f"{kind.value} vs payload size",
        plot={"left": PLOT_LEFT, "right": PLOT_RIGHT, "top": PLOT_TOP, "bottom": PLOT_BOTTOM},
        x_ticks=x_ticks,
        x_label="payload size",
        left_ticks=scales["left"].ticks(),
        left_label=labels["left"],
        right_ticks=right.ticks() if right else [],
        right_label=labels.get("right", ""),
        lines=lines,
        bars=bars,
        markers=markers,
        legend=legend,
    )
    path = Path(path)
    path.write_text(svg, encoding="utf-8")
    logger.info("wrote %s", path)
    return path


# === Spec builders ===

def _series_from_rows(rows_by_series: Dict[str, List[CsvRow]]) -> Dict[str, List[AggregatedPoint]]:
    series = {}
    for name, rows in rows_by_series.items():
        points = aggregate_rows(rows)
        if points:
            series[name] = points
    return series


def spec_from_rows(kind: PlotKind, rows_by_series: Dict[str, List[CsvRow]], title: str = "",
                   latency_metric: str = "avg_us") -> PlotSpec:
    return PlotSpec(kind=kind, title=title, series=_series_from_rows(rows_by_series),
                    latency_metric=latency_metric)


def analytic_series(kind: TransportKind, sizes: Iterable[int], mtu: int,
                    ip_options_bytes: int = 0) -> List[AggregatedPoint]:
    points = []
    zero = MetricRange(min=0.0, avg=0.0, max=0.0)
    for size in sizes:
        pct = analytic_report(kind, size, mtu, ip_options_bytes).overhead_percent
        points.append(AggregatedPoint(payload_size=size, runs=1, mmps=zero, mbps=zero,
                                      overhead_pct=MetricRange(min=pct, avg=pct, max=pct)))
    return points


REFERENCE_KINDS = (TransportKind.RC_MSG, TransportKind.RC_RDMA_WRITE,
                   TransportKind.UD_IPOIB, TransportKind.UD_LIBVMA)


def overhead_spec_from_rows(rows_by_series: Dict[str, List[CsvRow]], mtu: int = 4096,
                            sizes: Optional[List[int]] = None, ip_options_bytes: int = 0,
                            title: str = "") -> PlotSpec:
    """Measured overhead series plus the analytic header curves for each framing."""
    series = _series_from_rows(rows_by_series)
    sizes = sizes or [1 << e for e in range(X_MIN_EXP, X_MAX_EXP + 1)]
    reference = []
    for kind in REFERENCE_KINDS:
        name = f"model {kind.value}"
        series[name] = analytic_series(kind, sizes, mtu, ip_options_bytes)
        reference.append(name)
    return PlotSpec(kind=PlotKind.OVERHEAD, title=title or "per-message overhead", series=series,
                    reference=reference)


_MODE_PLOTS = {
    "unidir": [PlotKind.THROUGHPUT],
    "bidir": [PlotKind.THROUGHPUT],
    "latency": [PlotKind.LATENCY],
    "pingpong": [PlotKind.LATENCY],
    "overhead": [PlotKind.OVERHEAD, PlotKind.LATENCY],
}


def specs_for_rows(rows: List[CsvRow], mtu: int = 4096) -> List[Tuple[str, PlotSpec]]:
    """Group rows into one spec per plot kind, one series per (transport, mode)."""
    grouped: Dict[PlotKind, Dict[str, List[CsvRow]]] = {}
    for row in rows:
        for kind in _MODE_PLOTS.get(row.mode, []):
            grouped.setdefault(kind, {}).setdefault(f"{row.transport} {row.mode}", []).append(row)

    specs = []
    for kind, by_series in grouped.items():
        if kind is PlotKind.OVERHEAD:
            spec = overhead_spec_from_rows(by_series, mtu=mtu)
        else:
            spec = spec_from_rows(kind, by_series, title=f"{kind.value} vs payload size")
        if spec.series:
            specs.append((kind.value, spec))
    return specs


def render_from_csv(paths: Iterable[Union[str, Path]], out_dir: Union[str, Path],
                    mtu: int = 4096) -> List[Path]:
    """Regenerate every plot from persisted CSV files alone."""
    rows: List[CsvRow] = []
    for path in paths:
        rows.extend(read_csv(path))
    specs = specs_for_rows(rows, mtu=mtu)
    if not specs:
        raise PlotError("no successful rows to plot")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for stem, spec in specs:
        path = render_plot(spec, out_dir / f"{stem}.svg")
        written.append(path)
    return written
