"""Telemetry ingestion service and time-series store.

Validated readings are appended to one in-memory log per meter and, when a
data directory is configured, mirrored to append-only NDJSON files
(``readings/<meter_id>.ndjson``). Restarting on the same directory replays
the files and reconstructs identical query answers.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from pathlib import Path

from .errors import NotFoundError, OrderingError, ValidationError
from .metersim import MeterReading
from .series import AGGREGATIONS, TimeSeries, bucket_series

QUERY_FIELDS = ("apparent_power", "kwh_total", "v_rms", "i_rms")


@dataclass(frozen=True)
class ReadingRecord:
    reading: MeterReading
    store_offset: int

    def __getattr__(self, name):
        return getattr(self.reading, name)

    def to_dict(self) -> dict:
        data = self.reading.to_dict()
        data["store_offset"] = self.store_offset
        return data


@dataclass
class SeriesQuery:
    """Range query over one meter's readings.

    ``step_ms`` buckets the range on the global [k*step, (k+1)*step) grid;
    without it the raw points in [from_ms, to_ms) are returned. ``agg``
    defaults to mean, except for the cumulative kwh_total field where the
    bucket maximum is the meaningful summary.
    """

    meter_id: str
    from_ms: int
    to_ms: int
    step_ms: int | None = None
    agg: str | None = None
    field: str = "apparent_power"

    def __post_init__(self):
        if self.from_ms >= self.to_ms:
            raise ValidationError("query interval must satisfy from_ms < to_ms")
        if self.step_ms is not None and self.step_ms <= 0:
            raise ValidationError("step_ms must be > 0 when present")
        if self.agg is not None and self.agg not in AGGREGATIONS:
            raise ValidationError(f"agg must be one of {AGGREGATIONS}")
        if self.field not in QUERY_FIELDS:
            raise ValidationError(f"field must be one of {QUERY_FIELDS}")

    def effective_agg(self) -> str:
        if self.agg is not None:
            return self.agg
        return "max" if self.field == "kwh_total" else "mean"


class TelemetryStore:
    """Single-writer-per-meter reading store with range queries."""

    def __init__(self, data_dir: str | Path | None = None):
        self._logs: dict[str, list[ReadingRecord]] = {}
        self._lock = threading.Lock()
        self._dir: Path | None = None
        if data_dir is not None:
            self._dir = Path(data_dir) / "readings"
            self._dir.mkdir(parents=True, exist_ok=True)
            self._replay()

    def _replay(self) -> None:
        assert self._dir is not None
        for path in sorted(self._dir.glob("*.ndjson")):
            meter_id = path.stem
            log: list[ReadingRecord] = []
            with open(path, encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    reading = MeterReading.from_dict(json.loads(line))
                    log.append(ReadingRecord(reading, len(log)))
            self._logs[meter_id] = log

    def register_meter(self, meter_id: str) -> None:
        """Make a meter known before its first reading (idempotent)."""
        with self._lock:
            self._logs.setdefault(meter_id, [])

    def meters(self) -> list[str]:
        with self._lock:
            return sorted(self._logs)

    def _log(self, meter_id: str) -> list[ReadingRecord]:
        try:
            return self._logs[meter_id]
        except KeyError:
            raise NotFoundError(f"unknown meter {meter_id!r}") from None

    def submit_reading(self, reading: MeterReading) -> int:
        """Validate and append one reading; returns its store offset."""
        reading.validate()
        with self._lock:
            log = self._logs.setdefault(reading.meter_id, [])
            if log and reading.timestamp_ms <= log[-1].timestamp_ms:
                raise OrderingError(
                    f"reading at {reading.timestamp_ms} ms not after stored head "
                    f"{log[-1].timestamp_ms} ms for meter {reading.meter_id!r}"
                )
            record = ReadingRecord(reading, len(log))
            log.append(record)
            if self._dir is not None:
                path = self._dir / f"{reading.meter_id}.ndjson"
                with open(path, "a", encoding="utf-8") as fh:
                    fh.write(reading.to_json_line() + "\n")
            return record.store_offset

    def latest(self, meter_id: str) -> ReadingRecord | None:
        """Highest-offset record, or None for a known meter with no readings."""
        with self._lock:
            log = self._log(meter_id)
            return log[-1] if log else None

    def reading_at_or_before(self, meter_id: str, ts_ms: int) -> ReadingRecord | None:
        """Last record with timestamp <= ts_ms (cumulative-series boundary rule)."""
        with self._lock:
            log = self._log(meter_id)
            lo, hi = 0, len(log)
            while lo < hi:
                mid = (lo + hi) // 2
                if log[mid].timestamp_ms <= ts_ms:
                    lo = mid + 1
                else:
                    hi = mid
            return log[lo - 1] if lo else None

    def kwh_at(self, meter_id: str, ts_ms: int) -> float:
        record = self.reading_at_or_before(meter_id, ts_ms)
        return record.kwh_total if record else 0.0

    def query_series(self, q: SeriesQuery) -> TimeSeries:
        with self._lock:
            log = self._log(q.meter_id)
            points = [
                (r.timestamp_ms, getattr(r.reading, q.field))
                for r in log
                if q.from_ms <= r.timestamp_ms < q.to_ms
            ]
        if q.step_ms is None:
            return TimeSeries([p[0] for p in points], [p[1] for p in points])
        return bucket_series(points, q.from_ms, q.to_ms, q.step_ms, q.effective_agg())
