"""
Results Manager - Persistence Layer
Versioned CSV results, the append-only run ledger and the sweep manifest.
"""
import csv
import json
import logging
from pathlib import Path
from typing import Iterable, List, Optional, Union

from errors import ResultsError
from models import BenchmarkConfig, CsvRow, RunReport, SchedulePoint
from stats import report_throughput

logger = logging.getLogger(__name__)

CSV_VERSION_LINE = "#wirebench-csv/1"
CSV_COLUMNS = [
    "transport", "mode", "payload_bytes", "run", "messages", "elapsed_ns",
    "mmps", "mbps", "lat_avg_us", "lat_p999_us", "lat_p9999_us",
    "wire_bytes", "overhead_pct", "rnr_naks", "status", "error",
]


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def report_to_row(report: RunReport) -> CsvRow:
    mmps, mbps = report_throughput(report)
    summary = report.summary
    return CsvRow(
        transport=report.transport.value,
        mode=report.mode.value,
        payload_bytes=report.payload_size,
        run=report.run_index,
        messages=report.messages,
        elapsed_ns=report.elapsed_ns,
        mmps=mmps,
        mbps=mbps,
        lat_avg_us=summary.avg_us if summary else None,
        lat_p999_us=summary.p999_us if summary else None,
        lat_p9999_us=summary.p9999_us if summary else None,
        wire_bytes=report.wire_bytes,
        overhead_pct=report.overhead.overhead_percent if report.overhead else None,
        rnr_naks=report.rnr_naks,
    )


def failed_row(config: BenchmarkConfig, point: SchedulePoint, run_index: int, exc: BaseException) -> CsvRow:
    return CsvRow(
        transport=config.transport.value,
        mode=config.mode.value,
        payload_bytes=point.payload_size,
        run=run_index,
        status="failed",
        error=f"{type(exc).__name__}: {exc}",
    )


def sort_rows(rows: Iterable[CsvRow]) -> List[CsvRow]:
    return sorted(rows, key=lambda r: (r.payload_bytes, r.run))


def write_csv(rows: Iterable[CsvRow], path: Union[str, Path]) -> Path:
    """Header-first, 6 significant digits for reals, rows by (size, run)."""
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(CSV_VERSION_LINE + "\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in sort_rows(rows):
            data = row.model_dump()
            writer.writerow([_cell(data[column]) for column in CSV_COLUMNS])
    return path


def read_csv(path: Union[str, Path]) -> List[CsvRow]:
    path = Path(path)
    with open(path, "r", encoding="utf-8", newline="") as f:
        first = f.readline().rstrip("\r\n")
        if first != CSV_VERSION_LINE:
            raise ResultsError(f"{path} is not a wirebench results file (first line {first!r})")
        reader = csv.DictReader(f)
        if reader.fieldnames != CSV_COLUMNS:
            raise ResultsError(f"{path} has an unexpected header {reader.fieldnames}")
        try:
            return [CsvRow(**record) for record in reader]
        except ValueError as exc:
            raise ResultsError(f"{path}: {exc}") from exc


class ResultsManager:
    """Own one output directory: CSV per (transport, mode), runs.jsonl, config.json."""

    def __init__(self, out_dir: Union[str, Path] = "./results"):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(exist_ok=True, parents=True)
        self.run_ledger = self.out_dir / "runs.jsonl"
        self.config_file = self.out_dir / "config.json"

    def csv_path(self, config: BenchmarkConfig) -> Path:
        return self.out_dir / f"{config.transport.value}_{config.mode.value}_{config.role.value}.csv"

    # === Manifest ===

    def save_config(self, config: BenchmarkConfig) -> None:
        self._save_json(self.config_file, config.model_dump(mode="json"))

    def load_config(self) -> Optional[BenchmarkConfig]:
        data = self._load_json(self.config_file)
        return BenchmarkConfig(**data) if data else None

    # === Run ledger ===

    def log_run(self, row: CsvRow) -> None:
        """Append one completed or failed (size, run) to the JSONL ledger."""
        with open(self.run_ledger, "a", encoding="utf-8") as f:
            f.write(row.model_dump_json() + "\n")

    def load_runs(self, limit: Optional[int] = None) -> List[CsvRow]:
        if not self.run_ledger.exists():
            return []
        rows = []
        with open(self.run_ledger, "r", encoding="utf-8") as f:
            for line in f:
                try:
                    rows.append(CsvRow(**json.loads(line)))
                except (json.JSONDecodeError, ValueError):
                    logger.warning("skipping malformed ledger line in %s", self.run_ledger)
        return rows[-limit:] if limit else rows

    # === CSV ===

    def flush(self, rows: List[CsvRow], path: Path) -> Path:
        written = write_csv(rows, path)
        logger.debug("flushed %d rows to %s", len(rows), written)
        return written

    # === Helpers ===

    def _save_json(self, filepath: Path, data) -> None:
        with open(filepath, "w", encoding="utf-8") as f:
            json.dump(data, f, indent=2, default=str)

    def _load_json(self, filepath: Path, default=None):
        try:
            with open(filepath, "r", encoding="utf-8") as f:
                return json.load(f)
        except (FileNotFoundError, json.JSONDecodeError):
            return default if default is not None else {}
