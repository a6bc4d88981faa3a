"""Ordered (timestamp, value) series with explicit missing markers.

The substrate shared by the telemetry store and the forecasting pipeline:
timestamps are integer milliseconds since epoch, strictly increasing, and
``None`` marks a missing observation (an empty resample bucket, a dropped
sample).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

AGGREGATIONS = ("mean", "max", "last", "sum")


@dataclass
class TimeSeries:
    timestamps: list[int] = field(default_factory=list)
    values: list[float | None] = field(default_factory=list)

    def __post_init__(self):
        if len(self.timestamps) != len(self.values):
            raise ValidationError(
                f"length mismatch: {len(self.timestamps)} timestamps, "
                f"{len(self.values)} values"
            )
        for a, b in zip(self.timestamps, self.timestamps[1:]):
            if b <= a:
                raise ValidationError(f"timestamps not strictly increasing at {b}")

    def __len__(self) -> int:
        return len(self.timestamps)

    def defined_mask(self) -> list[bool]:
        return [v is not None for v in self.values]

    def defined_count(self) -> int:
        return sum(1 for v in self.values if v is not None)

    def to_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """(timestamps, values) as float arrays, missing encoded as NaN."""
        ts = np.asarray(self.timestamps, dtype=np.int64)
        vs = np.array(
            [math.nan if v is None else float(v) for v in self.values], dtype=float
        )
        return ts, vs

    @classmethod
    def from_arrays(cls, ts, vs) -> "TimeSeries":
        values: list[float | None] = [
            None if (v is None or (isinstance(v, float) and math.isnan(v)) or np.isnan(v))
            else float(v)
            for v in vs
        ]
        return cls([int(t) for t in ts], values)


def aggregate(values: list[float], agg: str) -> float:
    if agg == "mean":
        return sum(values) / len(values)
    if agg == "max":
        return max(values)
    if agg == "last":
        return values[-1]
    if agg == "sum":
        return sum(values)
    raise ValidationError(f"unknown aggregation {agg!r}")


def bucket_series(
    points: list[tuple[int, float]],
    from_ms: int,
    to_ms: int,
    step_ms: int,
    agg: str,
) -> TimeSeries:
    """Aggregate points falling in [from_ms, to_ms) into left-edge buckets.

    Buckets live on the global grid [k*step, (k+1)*step); every bucket
    overlapping the query range is emitted, empty ones as missing.
    """
    if step_ms <= 0:
        raise ValidationError("step_ms must be positive")
    if agg not in AGGREGATIONS:
        raise ValidationError(f"unknown aggregation {agg!r}")
    first_k = from_ms // step_ms
    last_k = (to_ms - 1) // step_ms
    if to_ms <= from_ms or last_k < first_k:
        return TimeSeries([], [])
    grouped: dict[int, list[float]] = {}
    for ts, value in points:
        if from_ms <= ts < to_ms:
            grouped.setdefault(ts // step_ms, []).append(value)
    timestamps = []
    values: list[float | None] = []
    for k in range(first_k, last_k + 1):
        timestamps.append(k * step_ms)
        bucket = grouped.get(k)
        values.append(aggregate(bucket, agg) if bucket else None)
    return TimeSeries(timestamps, values)
