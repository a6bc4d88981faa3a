"""CSV interchange for the forecaster.

Series files carry ``ds`` (ISO-8601 timestamp) and ``y`` columns plus any
regressor columns; holiday files carry ``holiday,ds,lower_window,
upper_window`` rows, one per holiday date.
"""

from __future__ import annotations

import csv
from datetime import datetime, timezone
from pathlib import Path

from ..errors import ValidationError
from ..series import TimeSeries
from .model import Holiday, Prediction


def ms_to_iso(ms: int) -> str:
    dt = datetime.fromtimestamp(ms / 1000.0, tz=timezone.utc)
    if ms % 1000:
        return dt.strftime("%Y-%m-%dT%H:%M:%S.%f")
    return dt.strftime("%Y-%m-%dT%H:%M:%S")


def iso_to_ms(text: str) -> int:
    text = text.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(round(dt.timestamp() * 1000))


def read_series_csv(path: str | Path) -> tuple[TimeSeries, dict[str, list[float]]]:
    """Load a ds/y CSV; extra columns come back as regressor series."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "ds" not in reader.fieldnames:
            raise ValidationError("series CSV needs a 'ds' column")
        if "y" not in reader.fieldnames:
            raise ValidationError("series CSV needs a 'y' column")
        extra_names = [c for c in reader.fieldnames if c not in ("ds", "y")]
        timestamps: list[int] = []
        values: list[float | None] = []
        extras: dict[str, list[float]] = {name: [] for name in extra_names}
        for row in reader:
            timestamps.append(iso_to_ms(row["ds"]))
            raw = (row["y"] or "").strip()
            values.append(float(raw) if raw else None)
            for name in extra_names:
                extras[name].append(float(row[name]))
    return TimeSeries(timestamps, values), extras


def write_series_csv(path: str | Path, series: TimeSeries) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["ds", "y"])
        for ts, value in zip(series.timestamps, series.values):
            writer.writerow([ms_to_iso(ts), "" if value is None else repr(value)])


def read_holidays_csv(path: str | Path) -> tuple[Holiday, ...]:
    """Group holiday rows by name; windows must agree within a name."""
    grouped: dict[str, dict] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = {"holiday", "ds"}
        if reader.fieldnames is None or not required <= set(reader.fieldnames):
            raise ValidationError("holiday CSV needs 'holiday' and 'ds' columns")
        for row in reader:
            name = row["holiday"]
            lower = int(row.get("lower_window") or 0)
            upper = int(row.get("upper_window") or 0)
            entry = grouped.setdefault(
                name, {"dates": [], "lower": lower, "upper": upper}
            )
            if (entry["lower"], entry["upper"]) != (lower, upper):
                raise ValidationError(
                    f"inconsistent windows for holiday {name!r}"
                )
            entry["dates"].append(row["ds"].strip())
    return tuple(
        Holiday(name, tuple(entry["dates"]), entry["lower"], entry["upper"])
        for name, entry in grouped.items()
    )


FORECAST_COLUMNS = ("ds", "yhat", "trend", "seasonal", "holiday", "regressor")


def forecast_rows(prediction: Prediction) -> list[dict]:
    rows = []
    for i, ts in enumerate(prediction.timestamps):
        rows.append(
            {
                "ds": ms_to_iso(ts),
                "yhat": float(prediction.yhat[i]),
                "trend": float(prediction.trend[i]),
                "seasonal": float(prediction.seasonal[i]),
                "holiday": float(prediction.holiday[i]),
                "regressor": float(prediction.regressor[i]),
            }
        )
    return rows


def write_forecast_csv(fh, prediction: Prediction) -> None:
    writer = csv.writer(fh)
    writer.writerow(FORECAST_COLUMNS)
    for row in forecast_rows(prediction):
        writer.writerow([row["ds"]] + [repr(row[c]) for c in FORECAST_COLUMNS[1:]])
