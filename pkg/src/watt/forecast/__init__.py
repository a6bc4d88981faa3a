"""Consumption forecasting: data preparation plus an additive decomposable model."""

from .pipeline import (
    Decomposition,
    PipelineConfig,
    ScalingParams,
    decompose,
    detect_outliers,
    impute,
    resample,
    split_and_normalize,
)
from .model import (
    FitResult,
    ForecastModel,
    Holiday,
    ModelConfig,
    Prediction,
    Seasonality,
    eval_trend,
    fit,
    fourier_features,
    make_changepoints,
    piecewise_linear,
    piecewise_logistic,
    predict,
)

__all__ = [
    "Decomposition",
    "PipelineConfig",
    "ScalingParams",
    "decompose",
    "detect_outliers",
    "impute",
    "resample",
    "split_and_normalize",
    "FitResult",
    "ForecastModel",
    "Holiday",
    "ModelConfig",
    "Prediction",
    "Seasonality",
    "eval_trend",
    "fit",
    "fourier_features",
    "make_changepoints",
    "piecewise_linear",
    "piecewise_logistic",
    "predict",
]
