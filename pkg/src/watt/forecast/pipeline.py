"""Data preparation for the forecaster.

Missing-value imputation, outlier flagging, temporal resampling, classical
seasonal decomposition, and train/test splitting with train-only scaling.
All operations take and return :class:`~watt.series.TimeSeries`; none of
them mutate their input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DomainError, ValidationError
from ..series import AGGREGATIONS, TimeSeries, bucket_series

IMPUTE_METHODS = ("forward_fill", "backward_fill", "linear_interpolation")
OUTLIER_METHODS = ("zscore", "iqr")


@dataclass
class PipelineConfig:
    impute_method: str = "forward_fill"
    outlier_method: str = "zscore"
    zscore_threshold: float = 3.0
    iqr_multiplier: float = 1.5
    resample_step_ms: int = 3_600_000
    resample_agg: str = "mean"
    split_fraction: float = 0.8
    normalize: bool = True

    def __post_init__(self):
        if self.impute_method not in IMPUTE_METHODS:
            raise ValidationError(f"impute_method must be one of {IMPUTE_METHODS}")
        if self.outlier_method not in OUTLIER_METHODS:
            raise ValidationError(f"outlier_method must be one of {OUTLIER_METHODS}")
        if self.zscore_threshold <= 0 or self.iqr_multiplier <= 0:
            raise ValidationError("outlier thresholds must be > 0")
        if self.resample_step_ms <= 0:
            raise ValidationError("resample_step_ms must be > 0")
        if self.resample_agg not in AGGREGATIONS:
            raise ValidationError(f"resample_agg must be one of {AGGREGATIONS}")
        if not 0 < self.split_fraction < 1:
            raise ValidationError("split_fraction must be in (0, 1)")


def impute(series: TimeSeries, method: str) -> TimeSeries:
    """Fill missing values.

    forward_fill carries the last defined value forward (a leading gap
    stays missing), backward_fill mirrors that, and linear_interpolation is
    time-weighted between the nearest defined neighbours (gaps before the
    first or after the last defined value stay missing).
    """
    if method not in IMPUTE_METHODS:
        raise ValidationError(f"unknown impute method {method!r}")
    if series.defined_count() == 0:
        raise DomainError("cannot impute an all-missing series")
    ts = series.timestamps
    values = list(series.values)
    n = len(values)
    if method == "forward_fill":
        last: float | None = None
        for i in range(n):
            if values[i] is None:
                values[i] = last
            else:
                last = values[i]
    elif method == "backward_fill":
        nxt: float | None = None
        for i in range(n - 1, -1, -1):
            if values[i] is None:
                values[i] = nxt
            else:
                nxt = values[i]
    else:
        defined = [i for i, v in enumerate(values) if v is not None]
        for a, b in zip(defined, defined[1:]):
            if b - a == 1:
                continue
            va, vb = values[a], values[b]
            for i in range(a + 1, b):
                w = (ts[i] - ts[a]) / (ts[b] - ts[a])
                values[i] = va + (vb - va) * w
    return TimeSeries(list(ts), values)


def _quantile_r7(sorted_values: np.ndarray, q: float) -> float:
    # Linear interpolation on sorted order statistics, position q*(n-1).
    n = len(sorted_values)
    pos = q * (n - 1)
    lo = int(np.floor(pos))
    hi = min(lo + 1, n - 1)
    frac = pos - lo
    return float(sorted_values[lo] * (1 - frac) + sorted_values[hi] * frac)


def detect_outliers(
    series: TimeSeries, method: str, threshold: float | None = None
) -> list[bool]:
    """Flag outlying samples; missing entries are never flagged.

    zscore flags |x - mean| / population_std >= threshold (no flags when
    the spread is zero). iqr flags values outside
    [Q1 - mult*IQR, Q3 + mult*IQR] with R-7 quartiles.
    """
    if method not in OUTLIER_METHODS:
        raise ValidationError(f"unknown outlier method {method!r}")
    defined = [v for v in series.values if v is not None]
    if method == "zscore":
        threshold = 3.0 if threshold is None else threshold
        if len(defined) < 2:
            raise DomainError("zscore needs at least 2 defined values")
        arr = np.asarray(defined, dtype=float)
        mean = arr.mean()
        std = arr.std()  # population std (ddof=0)
        if std == 0:
            return [False] * len(series)
        return [
            v is not None and abs(v - mean) / std >= threshold
            for v in series.values
        ]
    threshold = 1.5 if threshold is None else threshold
    if len(defined) < 4:
        raise DomainError("iqr needs at least 4 defined values")
    arr = np.sort(np.asarray(defined, dtype=float))
    q1 = _quantile_r7(arr, 0.25)
    q3 = _quantile_r7(arr, 0.75)
    iqr = q3 - q1
    lo, hi = q1 - threshold * iqr, q3 + threshold * iqr
    return [v is not None and (v < lo or v > hi) for v in series.values]


def resample(series: TimeSeries, step_ms: int, agg: str = "mean") -> TimeSeries:
    """Regularize onto the global [k*step, (k+1)*step) grid, left-edge stamps."""
    if step_ms <= 0:
        raise ValidationError("step_ms must be > 0")
    points = [
        (ts, v) for ts, v in zip(series.timestamps, series.values) if v is not None
    ]
    if not points:
        return TimeSeries([], [])
    return bucket_series(points, points[0][0], points[-1][0] + 1, step_ms, agg)


@dataclass
class Decomposition:
    trend: TimeSeries
    seasonal: TimeSeries
    residual: TimeSeries


def decompose(series: TimeSeries, period: int) -> Decomposition:
    """Classical additive decomposition of a regular, gap-free series.

    Trend is the centered moving average (the standard 2x-period double
    average when the period is even); the seasonal component is the
    per-phase mean of the detrended values, re-centered to sum to zero over
    one period; the residual is what remains. All three are undefined at
    the edges the moving average cannot reach.
    """
    if period < 2:
        raise DomainError("period must be >= 2 samples")
    n = len(series)
    if n < 2 * period:
        raise DomainError(f"need at least {2 * period} samples, got {n}")
    if series.defined_count() != n:
        raise DomainError("decompose requires a gap-free series (impute first)")
    steps = {b - a for a, b in zip(series.timestamps, series.timestamps[1:])}
    if len(steps) > 1:
        raise DomainError("decompose requires regularly spaced samples")
    y = np.asarray(series.values, dtype=float)

    trend = np.full(n, np.nan)
    if period % 2 == 1:
        half = period // 2
        kernel = np.full(period, 1.0 / period)
        core = np.convolve(y, kernel, mode="valid")
        trend[half : n - half] = core
        lo, hi = half, n - half
    else:
        half = period // 2
        kernel = np.full(period + 1, 1.0 / period)
        kernel[0] = kernel[-1] = 0.5 / period
        core = np.convolve(y, kernel, mode="valid")
        trend[half : n - half] = core
        lo, hi = half, n - half

    detrended = y - trend
    phase_sums = np.zeros(period)
    phase_counts = np.zeros(period)
    for i in range(lo, hi):
        phase_sums[i % period] += detrended[i]
        phase_counts[i % period] += 1
    phase_means = phase_sums / np.where(phase_counts == 0, 1, phase_counts)
    phase_means -= phase_means.mean()

    seasonal = np.full(n, np.nan)
    for i in range(lo, hi):
        seasonal[i] = phase_means[i % period]
    residual = y - trend - seasonal

    ts = list(series.timestamps)
    return Decomposition(
        trend=TimeSeries.from_arrays(ts, trend),
        seasonal=TimeSeries.from_arrays(ts, seasonal),
        residual=TimeSeries.from_arrays(ts, residual),
    )


@dataclass(frozen=True)
class ScalingParams:
    """Train-derived min-max scaling; identity when disabled or degenerate."""

    y_min: float = 0.0
    y_span: float = 1.0

    def scale(self, x: float) -> float:
        return (x - self.y_min) / self.y_span

    def unscale(self, x: float) -> float:
        return x * self.y_span + self.y_min

    def apply(self, series: TimeSeries) -> TimeSeries:
        return TimeSeries(
            list(series.timestamps),
            [None if v is None else self.scale(v) for v in series.values],
        )


def split_and_normalize(
    series: TimeSeries, config: PipelineConfig
) -> tuple[TimeSeries, TimeSeries, ScalingParams]:
    """Temporal-order split; scaling parameters come from the train part only."""
    n = len(series)
    if n < 3:
        raise DomainError("need at least 3 samples to split")
    k = int(n * config.split_fraction)
    k = min(max(k, 1), n - 1)
    train = TimeSeries(series.timestamps[:k], list(series.values[:k]))
    test = TimeSeries(series.timestamps[k:], list(series.values[k:]))
    if not config.normalize:
        return train, test, ScalingParams()
    defined = [v for v in train.values if v is not None]
    if not defined:
        raise DomainError("train split has no defined values to scale by")
    y_min, y_max = min(defined), max(defined)
    span = y_max - y_min
    params = ScalingParams(y_min=y_min, y_span=span if span > 0 else 1.0)
    return params.apply(train), params.apply(test), params
