import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from watt.errors import DomainError, ValidationError
from watt.forecast.pipeline import (
    PipelineConfig,
    decompose,
    detect_outliers,
    impute,
    resample,
    split_and_normalize,
)
from watt.series import TimeSeries

from reference_impls import ref_detect_outliers, ref_impute, ref_resample


def series_of(values, step=1000, start=0):
    return TimeSeries([start + i * step for i in range(len(values))], list(values))


@st.composite
def random_series(draw, min_size=1, max_size=32, allow_missing=True):
    n = draw(st.integers(min_size, max_size))
    gaps = draw(st.lists(st.integers(1, 900), min_size=n, max_size=n))
    timestamps = np.cumsum(gaps).tolist()
    value = st.one_of(st.none(), st.floats(-1e6, 1e6)) if allow_missing else st.floats(-1e6, 1e6)
    values = draw(st.lists(value, min_size=n, max_size=n))
    return TimeSeries(timestamps, values)


class TestImpute:
    def test_linear_midpoint(self):
        out = impute(series_of([1.0, None, 3.0]), "linear_interpolation")
        assert out.values == [1.0, 2.0, 3.0]

    def test_linear_time_weighted(self):
        series = TimeSeries([0, 100, 400], [1.0, None, 4.0])
        out = impute(series, "linear_interpolation")
        assert out.values[1] == pytest.approx(1.0 + 3.0 * 100 / 400)

    def test_forward_fill_trailing(self):
        out = impute(series_of([1.0, None, None]), "forward_fill")
        assert out.values == [1.0, 1.0, 1.0]

    def test_edge_policies(self):
        series = series_of([None, 5.0])
        assert impute(series, "forward_fill").values == [None, 5.0]
        assert impute(series, "backward_fill").values == [5.0, 5.0]

    def test_all_missing_errors(self):
        with pytest.raises(DomainError):
            impute(series_of([None, None]), "forward_fill")

    def test_input_not_mutated(self):
        series = series_of([1.0, None])
        impute(series, "forward_fill")
        assert series.values == [1.0, None]

    @given(random_series(), st.sampled_from(("forward_fill", "backward_fill", "linear_interpolation")))
    @settings(max_examples=300, deadline=None)
    def test_matches_bruteforce(self, series, method):
        if series.defined_count() == 0:
            return
        ours = impute(series, method).values
        ref = ref_impute(series.timestamps, series.values, method)
        assert len(ours) == len(ref)
        for a, b in zip(ours, ref):
            if b is None:
                assert a is None
            else:
                assert a == pytest.approx(b, rel=1e-12, abs=1e-12)


class TestDetectOutliers:
    def test_zscore_single_spike(self):
        series = series_of([10.0] * 11 + [100.0])
        mask = detect_outliers(series, "zscore", 3.0)
        assert mask == [False] * 11 + [True]
        arr = np.array([10.0] * 11 + [100.0])
        z = abs(100.0 - arr.mean()) / arr.std()
        assert z == pytest.approx(3.3166, abs=1e-3)

    def test_iqr_example(self):
        series = series_of([1.0, 2.0, 3.0, 4.0, 100.0])
        mask = detect_outliers(series, "iqr", 1.5)
        assert mask == [False, False, False, False, True]

    def test_constant_series_no_flags(self):
        series = series_of([7.0] * 8)
        assert detect_outliers(series, "zscore", 3.0) == [False] * 8

    def test_zero_iqr_flags_off_median(self):
        series = series_of([5.0, 5.0, 5.0, 5.0, 5.0, 9.0])
        mask = detect_outliers(series, "iqr", 1.5)
        assert mask == [False] * 5 + [True]

    def test_preconditions(self):
        with pytest.raises(DomainError):
            detect_outliers(series_of([1.0]), "zscore", 3.0)
        with pytest.raises(DomainError):
            detect_outliers(series_of([1.0, 2.0, 3.0]), "iqr", 1.5)

    @given(random_series(min_size=4), st.sampled_from(("zscore", "iqr")),
           st.floats(0.5, 5.0))
    @settings(max_examples=300, deadline=None)
    def test_matches_bruteforce(self, series, method, threshold):
        needed = 2 if method == "zscore" else 4
        if series.defined_count() < needed:
            return
        ours = detect_outliers(series, method, threshold)
        ref = ref_detect_outliers(series.values, method, threshold)
        assert ours == ref


class TestResample:
    def test_daily_mean_of_hourly(self):
        hours = [i * 3_600_000 for i in range(24)]
        values = [float(i) for i in range(24)]
        out = resample(TimeSeries(hours, values), 86_400_000, "mean")
        assert out.timestamps == [0]
        assert out.values == [pytest.approx(sum(values) / 24)]

    def test_single_reading(self):
        out = resample(TimeSeries([5_500], [3.0]), 1000, "mean")
        assert out.timestamps == [5_000]
        assert out.values == [3.0]

    def test_gap_bucket_missing(self):
        out = resample(TimeSeries([0, 2500], [1.0, 2.0]), 1000, "mean")
        assert out.timestamps == [0, 1000, 2000]
        assert out.values == [1.0, None, 2.0]

    @given(random_series(), st.integers(1, 2000), st.sampled_from(("mean", "max", "last", "sum")))
    @settings(max_examples=300, deadline=None)
    def test_matches_bruteforce(self, series, step, agg):
        ours = resample(series, step, agg)
        ref_ts, ref_vals = ref_resample(series.timestamps, series.values, step, agg)
        assert ours.timestamps == ref_ts
        for a, b in zip(ours.values, ref_vals):
            if b is None:
                assert a is None
            else:
                assert a == pytest.approx(b, rel=1e-12, abs=1e-12)


class TestDecompose:
    def test_sawtooth_period_three(self):
        values = [1.0, 2.0, 3.0] * 4
        out = decompose(series_of(values), 3)
        trend = [v for v in out.trend.values if v is not None]
        assert trend == pytest.approx([2.0] * len(trend))
        assert out.trend.values[0] is None and out.trend.values[-1] is None
        for i, v in enumerate(out.seasonal.values):
            if v is not None:
                assert v == pytest.approx([-1.0, 0.0, 1.0][i % 3], abs=1e-12)
        for v in out.residual.values:
            if v is not None:
                assert v == pytest.approx(0.0, abs=1e-12)

    def test_constant_series(self):
        out = decompose(series_of([4.0] * 12), 4)
        for v in out.seasonal.values:
            if v is not None:
                assert v == pytest.approx(0.0, abs=1e-12)
        for v in out.residual.values:
            if v is not None:
                assert v == pytest.approx(0.0, abs=1e-12)

    def test_even_period_double_average(self):
        # Hand check: 2x4 moving average at index 2 of 0..7 ramp
        values = [float(i) for i in range(8)]
        out = decompose(series_of(values), 4)
        expected = (0.5 * 0 + 1 + 2 + 3 + 0.5 * 4) / 4
        assert out.trend.values[2] == pytest.approx(expected)

    def test_seasonal_sums_to_zero_per_period(self):
        rng = np.random.default_rng(3)
        values = (
            np.tile([0.0, 5.0, -1.0, 2.0], 6) + rng.normal(0, 0.1, 24)
        ).tolist()
        out = decompose(series_of(values), 4)
        defined = [v for v in out.seasonal.values if v is not None]
        one_period = defined[:4]
        assert sum(one_period) == pytest.approx(0.0, abs=1e-9)

    def test_additive_identity_where_defined(self):
        rng = np.random.default_rng(8)
        values = (np.linspace(0, 3, 20) + rng.normal(0, 1, 20)).tolist()
        out = decompose(series_of(values), 5)
        for y, t, s, r in zip(
            values, out.trend.values, out.seasonal.values, out.residual.values
        ):
            if t is not None and s is not None and r is not None:
                assert t + s + r == pytest.approx(y, abs=1e-9)

    def test_too_short_errors(self):
        with pytest.raises(DomainError):
            decompose(series_of([1.0] * 5), 3)


class TestSplitAndNormalize:
    def test_80_20(self):
        series = series_of([float(i) for i in range(10)])
        train, test, _ = split_and_normalize(series, PipelineConfig(normalize=False))
        assert len(train) == 8 and len(test) == 2
        assert test.timestamps[0] > train.timestamps[-1]

    def test_scaling_from_train_only(self):
        series = series_of([0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 50.0, 60.0])
        train, test, params = split_and_normalize(series, PipelineConfig())
        assert max(v for v in train.values) == pytest.approx(1.0)
        assert min(v for v in train.values) == pytest.approx(0.0)
        assert max(v for v in test.values) > 1.0

    def test_roundtrip(self):
        series = series_of([3.0, 9.0, 27.0, 81.0])
        _, _, params = split_and_normalize(series, PipelineConfig())
        for x in (3.0, 10.5, 81.0, -4.0):
            assert params.unscale(params.scale(x)) == pytest.approx(x, abs=1e-12)

    def test_too_short(self):
        with pytest.raises(DomainError):
            split_and_normalize(series_of([1.0, 2.0]), PipelineConfig())


class TestPipelineConfig:
    def test_defaults(self):
        config = PipelineConfig()
        assert config.zscore_threshold == 3.0
        assert config.iqr_multiplier == 1.5
        assert config.split_fraction == 0.8

    def test_validation(self):
        with pytest.raises(ValidationError):
            PipelineConfig(split_fraction=1.0)
        with pytest.raises(ValidationError):
            PipelineConfig(impute_method="magic")
        with pytest.raises(ValidationError):
            PipelineConfig(zscore_threshold=0.0)
