"""Additive decomposable forecasting model.

The prediction is trend + seasonality + holiday effects + linear regressor
effects (or trend times one-plus-the-rest in multiplicative mode):

* trend: piecewise-linear in a hinge basis, or a saturating sigmoid, with
  rate changes at evenly spaced changepoints kept sparse by an L1 penalty;
* seasonality: truncated Fourier series per configured period;
* holidays: an indicator shift per holiday name over its date windows;
* regressors: external covariates entering linearly.

Fitting is penalized least squares. Linear-trend additive models reduce to
one regression on the design matrix [hinge | Fourier | holidays |
regressors], solved by proximal gradient (ISTA) to honor the L1 penalty on
rate changes. Logistic trends are fitted by proximal gradient descent with
an analytic Jacobian of the trend with respect to all of its parameters.
Multiplicative mode alternates between the trend and component
subproblems, each of which is again linear (or logistic) least squares.

Time is rescaled to [0, 1] over the training span and values by the
maximum absolute observation, mirroring the conventions of the widely used
decomposable forecasting tools this model follows.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from datetime import date
from pathlib import Path

import numpy as np

from ..errors import ConfigError, DomainError, ValidationError
from ..series import TimeSeries

MS_PER_DAY = 86_400_000
_EPOCH = date(1970, 1, 1)

DEFAULT_SEASONALITIES = (
    ("yearly", 365.25, 10),
    ("weekly", 7.0, 3),
    ("daily", 1.0, 4),
)
REGRESSOR_PRIOR_SCALE = 10.0

MAX_ITER = 10_000
OBJECTIVE_TOL = 1e-10


@dataclass(frozen=True)
class Seasonality:
    name: str
    period_days: float
    fourier_order: int

    def __post_init__(self):
        if self.period_days <= 0:
            raise ValidationError(f"seasonality period must be > 0: {self.name}")
        if self.fourier_order < 1:
            raise ValidationError(f"fourier_order must be >= 1: {self.name}")


@dataclass(frozen=True)
class Holiday:
    name: str
    dates: tuple[str, ...]  # ISO dates
    lower_window: int = 0
    upper_window: int = 0

    def day_numbers(self) -> set[int]:
        """Days since epoch covered by this holiday, windows included."""
        days = set()
        for iso in self.dates:
            base = (date.fromisoformat(iso) - _EPOCH).days
            for w in range(self.lower_window, self.upper_window + 1):
                days.add(base + w)
        return days


@dataclass(frozen=True)
class ModelConfig:
    trend_type: str = "linear"
    capacity: float | None = None
    n_changepoints: int = 25
    changepoint_range: float = 0.8
    changepoint_prior_scale: float = 0.05
    seasonalities: tuple[Seasonality, ...] = tuple(
        Seasonality(*s) for s in DEFAULT_SEASONALITIES
    )
    seasonality_prior_scale: float = 10.0
    seasonality_mode: str = "additive"
    holidays: tuple[Holiday, ...] = ()
    holidays_prior_scale: float = 10.0
    regressors: tuple[str, ...] = ()

    def __post_init__(self):
        if self.trend_type not in ("linear", "logistic"):
            raise ConfigError("trend_type must be linear or logistic")
        if self.trend_type == "logistic":
            if self.capacity is None or self.capacity <= 0:
                raise ConfigError("logistic trend requires a positive capacity")
        if self.n_changepoints < 0:
            raise ConfigError("n_changepoints must be >= 0")
        if not 0 <= self.changepoint_range <= 1:
            raise ConfigError("changepoint_range must be in [0, 1]")
        for scale in (
            self.changepoint_prior_scale,
            self.seasonality_prior_scale,
            self.holidays_prior_scale,
        ):
            if scale <= 0:
                raise ConfigError("prior scales must be > 0")
        if self.seasonality_mode not in ("additive", "multiplicative"):
            raise ConfigError("seasonality_mode must be additive or multiplicative")


def make_changepoints(
    span_start: float, span_end: float, n: int, range_fraction: float
) -> np.ndarray:
    """n candidate times evenly spaced over the first ``range_fraction`` of
    the span, excluding both endpoints."""
    if n < 0:
        raise DomainError("n must be >= 0")
    if n == 0:
        return np.empty(0)
    width = (span_end - span_start) * range_fraction
    return span_start + width * np.arange(1, n + 1) / (n + 1)


def fourier_features(t, period: float, order: int) -> np.ndarray:
    """Fourier basis [cos(2*pi*1*t/P), sin(2*pi*1*t/P), ..., order pairs]."""
    if period <= 0:
        raise DomainError("period must be > 0")
    if order < 1:
        raise DomainError("order must be >= 1")
    t = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.empty((t.shape[0], 2 * order))
    for j in range(1, order + 1):
        angle = 2.0 * np.pi * j * t / period
        out[:, 2 * (j - 1)] = np.cos(angle)
        out[:, 2 * (j - 1) + 1] = np.sin(angle)
    return out


def piecewise_linear(t, k: float, m: float, deltas, changepoints) -> np.ndarray:
    """Continuous piecewise-linear trend; each changepoint shifts the slope
    by its delta and the offset by -s*delta to keep the curve continuous."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    deltas = np.asarray(deltas, dtype=float)
    cps = np.asarray(changepoints, dtype=float)
    active = cps[None, :] <= t[:, None]
    k_t = k + active @ deltas
    m_t = m + active @ (-cps * deltas)
    return k_t * t + m_t


def _sigmoid(u: np.ndarray) -> np.ndarray:
    out = np.empty_like(u)
    pos = u >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-u[pos]))
    eu = np.exp(u[~pos])
    out[~pos] = eu / (1.0 + eu)
    return out


def _logistic_gammas(k: float, deltas: np.ndarray, m: float, cps: np.ndarray):
    """Offset adjustments keeping the sigmoid continuous at each changepoint."""
    rates = np.concatenate(([k], k + np.cumsum(deltas)))
    gammas = np.zeros(len(cps))
    total = 0.0
    for i, s in enumerate(cps):
        gammas[i] = (s - m - total) * (1.0 - rates[i] / rates[i + 1])
        total += gammas[i]
    return gammas


def piecewise_logistic(
    t, cap: float, k: float, m: float, deltas, changepoints
) -> np.ndarray:
    """Saturating trend cap / (1 + exp(-k_t (t - m_t))) with continuity-
    preserving offset adjustments at the changepoints."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    deltas = np.asarray(deltas, dtype=float)
    cps = np.asarray(changepoints, dtype=float)
    gammas = _logistic_gammas(k, deltas, m, cps)
    active = cps[None, :] <= t[:, None]
    k_t = k + active @ deltas
    m_t = m + active @ gammas
    return cap * _sigmoid(k_t * (t - m_t))


def logistic_trend_jacobian(
    t, cap: float, k: float, m: float, deltas, changepoints
) -> tuple[np.ndarray, np.ndarray]:
    """Trend values and their Jacobian with respect to [k, m, deltas...].

    The offset adjustments are functions of (k, m, deltas) through the
    continuity recursion, so their derivatives are accumulated alongside.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    deltas = np.asarray(deltas, dtype=float)
    cps = np.asarray(changepoints, dtype=float)
    n, J = t.shape[0], len(cps)
    P = J + 2  # parameter order: k, m, deltas
    rates = np.concatenate(([k], k + np.cumsum(deltas)))

    gammas = np.zeros(J)
    dgam = np.zeros((J, P))
    dGamma = np.zeros(P)
    total = 0.0
    for i in range(J):
        denom = rates[i + 1]
        a = cps[i] - m - total
        b = 1.0 - rates[i] / denom
        da = -dGamma.copy()
        da[1] -= 1.0
        dki = np.zeros(P)
        dki[0] = 1.0
        dki[2 : 2 + i] = 1.0
        dki1 = np.zeros(P)
        dki1[0] = 1.0
        dki1[2 : 2 + i + 1] = 1.0
        db = -(dki * denom - rates[i] * dki1) / denom**2
        gammas[i] = a * b
        dgam[i] = da * b + a * db
        total += gammas[i]
        dGamma += dgam[i]

    active = cps[None, :] <= t[:, None]
    k_t = k + active @ deltas
    m_t = m + active @ gammas
    dk_t = np.zeros((n, P))
    dk_t[:, 0] = 1.0
    dk_t[:, 2:] = active
    dm_t = active @ dgam
    dm_t[:, 1] += 1.0

    u = k_t * (t - m_t)
    sig = _sigmoid(u)
    du = dk_t * (t - m_t)[:, None] - k_t[:, None] * dm_t
    g = cap * sig
    dg = (cap * sig * (1.0 - sig))[:, None] * du
    return g, dg


# ---------------------------------------------------------------------------
# component design


@dataclass
class _ComponentDesign:
    matrix: np.ndarray  # (n, K)
    l2_diag: np.ndarray  # (K,)
    seasonal_slices: dict[str, slice]
    holiday_slices: dict[str, int]
    regressor_slices: dict[str, int]


def _build_components(
    times_ms: np.ndarray,
    config: ModelConfig,
    holidays: tuple[Holiday, ...],
    regressors: dict[str, np.ndarray],
) -> _ComponentDesign:
    n = len(times_ms)
    t_days = times_ms / MS_PER_DAY
    blocks: list[np.ndarray] = []
    l2: list[np.ndarray] = []
    seasonal_slices: dict[str, slice] = {}
    holiday_slices: dict[str, int] = {}
    regressor_slices: dict[str, int] = {}
    col = 0
    for season in config.seasonalities:
        block = fourier_features(t_days, season.period_days, season.fourier_order)
        blocks.append(block)
        width = block.shape[1]
        seasonal_slices[season.name] = slice(col, col + width)
        l2.append(np.full(width, 1.0 / config.seasonality_prior_scale**2))
        col += width
    day_numbers = (times_ms // MS_PER_DAY).astype(int)
    for holiday in holidays:
        active = holiday.day_numbers()
        indicator = np.array(
            [1.0 if d in active else 0.0 for d in day_numbers]
        ).reshape(n, 1)
        blocks.append(indicator)
        holiday_slices[holiday.name] = col
        l2.append(np.full(1, 1.0 / config.holidays_prior_scale**2))
        col += 1
    for name in config.regressors:
        if name not in regressors:
            raise ValidationError(f"missing values for regressor {name!r}")
        values = np.asarray(regressors[name], dtype=float)
        if values.shape != (n,):
            raise ValidationError(
                f"regressor {name!r} has {values.shape[0] if values.ndim else 0} "
                f"values, expected {n}"
            )
        blocks.append(values.reshape(n, 1))
        regressor_slices[name] = col
        l2.append(np.full(1, 1.0 / REGRESSOR_PRIOR_SCALE**2))
        col += 1
    if blocks:
        matrix = np.hstack(blocks)
        l2_diag = np.concatenate(l2)
    else:
        matrix = np.zeros((n, 0))
        l2_diag = np.zeros(0)
    return _ComponentDesign(
        matrix, l2_diag, seasonal_slices, holiday_slices, regressor_slices
    )


# ---------------------------------------------------------------------------
# solvers


def _soft_threshold(x: np.ndarray, amount: float) -> np.ndarray:
    return np.sign(x) * np.maximum(np.abs(x) - amount, 0.0)


def solve_l1_l2_least_squares(
    X: np.ndarray,
    y: np.ndarray,
    l1_weight: float,
    l1_slice: slice,
    l2_diag: np.ndarray,
    max_iter: int = MAX_ITER,
    tol: float = OBJECTIVE_TOL,
) -> np.ndarray:
    """Minimize 0.5||y - Xb||^2 + l1_weight*||b[l1]||_1 + 0.5*b'diag(l2)b.

    The L2/unpenalized block is eliminated in closed form (its optimum given
    the L1 block is a ridge solve), and ISTA runs on the reduced problem in
    the L1 coordinates alone, which conditions far better than iterating the
    full design. The objective and its 1e-10-change stopping rule are those
    of the joint problem.
    """
    n_cols = X.shape[1]
    if n_cols == 0:
        return np.zeros(0)
    l1_idx = np.arange(n_cols)[l1_slice]
    rest_idx = np.setdiff1d(np.arange(n_cols), l1_idx)
    A = X[:, rest_idx]
    H = X[:, l1_idx]
    d_a = l2_diag[rest_idx]
    d_h = l2_diag[l1_idx]

    # Jitter keeps the elimination solvable when A has exact collinearity.
    M_a = A.T @ A + np.diag(d_a) + 1e-10 * np.eye(len(rest_idx))

    def solve_rest(delta: np.ndarray) -> np.ndarray:
        return np.linalg.solve(M_a, A.T @ (y - H @ delta)) if len(rest_idx) else np.zeros(0)

    def objective(delta: np.ndarray, a: np.ndarray) -> float:
        r = y - A @ a - H @ delta
        return (
            0.5 * float(r @ r)
            + 0.5 * float((d_a * a * a).sum())
            + 0.5 * float((d_h * delta * delta).sum())
            + l1_weight * float(np.abs(delta).sum())
        )

    if len(l1_idx):
        # Warm start at the ridge solution (tiny L2 standing in for the L1
        # term); ISTA then shrinks toward the L1 optimum from a point that
        # is already close, which matters on the collinear hinge basis.
        d_init = l2_diag.copy()
        d_init[l1_idx] += 1e-8
        full = np.linalg.solve(
            X.T @ X + np.diag(d_init) + 1e-10 * np.eye(n_cols), X.T @ y
        )
        delta = full[l1_idx]
    else:
        delta = np.zeros(0)
    a = solve_rest(delta)
    if len(l1_idx):
        lipschitz = float(np.linalg.eigvalsh(H.T @ H + np.diag(d_h)).max())
        step = 1.0 / max(lipschitz, 1e-12)
        prev = objective(delta, a)
        for _ in range(max_iter):
            r = y - A @ a - H @ delta
            grad = -(H.T @ r) + d_h * delta
            delta = _soft_threshold(delta - step * grad, step * l1_weight)
            a = solve_rest(delta)
            current = objective(delta, a)
            if abs(prev - current) <= tol:
                break
            prev = current
    beta = np.zeros(n_cols)
    beta[rest_idx] = a
    beta[l1_idx] = delta
    return beta


def _prox_gradient_descent(
    params: np.ndarray,
    smooth_fn,
    l1_weight: float,
    l1_slice: slice,
    max_iter: int = MAX_ITER,
    tol: float = OBJECTIVE_TOL,
) -> np.ndarray:
    """Proximal gradient descent with backtracking for non-quadratic losses."""
    f, grad = smooth_fn(params)
    step = 1.0
    total = f + l1_weight * float(np.abs(params[l1_slice]).sum())
    for _ in range(max_iter):
        for _ in range(60):
            candidate = params - step * grad
            candidate[l1_slice] = _soft_threshold(
                candidate[l1_slice], step * l1_weight
            )
            f_new, grad_new = smooth_fn(candidate)
            diff = candidate - params
            bound = f + float(grad @ diff) + float(diff @ diff) / (2.0 * step)
            if f_new <= bound + 1e-15:
                break
            step *= 0.5
        new_total = f_new + l1_weight * float(np.abs(candidate[l1_slice]).sum())
        params, f, grad = candidate, f_new, grad_new
        if abs(total - new_total) <= tol:
            break
        total = new_total
        step *= 1.2
    return params


# ---------------------------------------------------------------------------
# fitted model


@dataclass
class ForecastModel:
    config: ModelConfig
    k: float
    m: float
    changepoints_t: np.ndarray
    deltas: np.ndarray
    seasonal_coeffs: dict[str, np.ndarray]
    holiday_effects: dict[str, float]
    regressor_coeffs: dict[str, float]
    t_start_ms: int
    t_scale_ms: int
    y_scale: float

    def scale_time(self, times_ms: np.ndarray) -> np.ndarray:
        return (np.asarray(times_ms, dtype=float) - self.t_start_ms) / self.t_scale_ms

    def trend_scaled(self, t: np.ndarray) -> np.ndarray:
        if self.config.trend_type == "linear":
            return piecewise_linear(t, self.k, self.m, self.deltas, self.changepoints_t)
        cap_scaled = self.config.capacity / self.y_scale
        return piecewise_logistic(
            t, cap_scaled, self.k, self.m, self.deltas, self.changepoints_t
        )

    def _component_values(
        self, times_ms: np.ndarray, regressors: dict | None
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        n = len(times_ms)
        t_days = np.asarray(times_ms, dtype=float) / MS_PER_DAY
        seasonal = np.zeros(n)
        for season in self.config.seasonalities:
            coeffs = self.seasonal_coeffs[season.name]
            seasonal += fourier_features(
                t_days, season.period_days, season.fourier_order
            ) @ coeffs
        holiday = np.zeros(n)
        day_numbers = (np.asarray(times_ms) // MS_PER_DAY).astype(int)
        for hol in self.config.holidays:
            active = hol.day_numbers()
            indicator = np.array([1.0 if d in active else 0.0 for d in day_numbers])
            holiday += self.holiday_effects[hol.name] * indicator
        regressor = np.zeros(n)
        for name in self.config.regressors:
            if regressors is None or name not in regressors:
                raise ValidationError(f"missing values for regressor {name!r}")
            values = np.asarray(regressors[name], dtype=float)
            if values.shape != (n,):
                raise ValidationError(f"regressor {name!r} length mismatch")
            regressor += self.regressor_coeffs[name] * values
        return seasonal, holiday, regressor

    def predict(self, times_ms, regressors: dict | None = None) -> "Prediction":
        times = np.asarray(list(times_ms), dtype=np.int64)
        t = self.scale_time(times)
        g = self.trend_scaled(t)
        seasonal, holiday, regressor = self._component_values(times, regressors)
        trend = g * self.y_scale
        if self.config.seasonality_mode == "additive":
            return Prediction(
                timestamps=[int(x) for x in times],
                yhat=trend + (seasonal + holiday + regressor) * self.y_scale,
                trend=trend,
                seasonal=seasonal * self.y_scale,
                holiday=holiday * self.y_scale,
                regressor=regressor * self.y_scale,
            )
        # multiplicative: components stay fractional, trend carries the units
        return Prediction(
            timestamps=[int(x) for x in times],
            yhat=trend * (1.0 + seasonal + holiday + regressor),
            trend=trend,
            seasonal=seasonal,
            holiday=holiday,
            regressor=regressor,
        )

    # -- persistence -------------------------------------------------------

    def to_json_dict(self) -> dict:
        return {
            "config": {
                "trend_type": self.config.trend_type,
                "capacity": self.config.capacity,
                "n_changepoints": self.config.n_changepoints,
                "changepoint_range": self.config.changepoint_range,
                "changepoint_prior_scale": self.config.changepoint_prior_scale,
                "seasonalities": [
                    [s.name, s.period_days, s.fourier_order]
                    for s in self.config.seasonalities
                ],
                "seasonality_prior_scale": self.config.seasonality_prior_scale,
                "seasonality_mode": self.config.seasonality_mode,
                "holidays": [
                    {
                        "name": h.name,
                        "dates": list(h.dates),
                        "lower_window": h.lower_window,
                        "upper_window": h.upper_window,
                    }
                    for h in self.config.holidays
                ],
                "holidays_prior_scale": self.config.holidays_prior_scale,
                "regressors": list(self.config.regressors),
            },
            "k": self.k,
            "m": self.m,
            "changepoints_t": self.changepoints_t.tolist(),
            "deltas": self.deltas.tolist(),
            "seasonal_coeffs": {
                name: coeffs.tolist() for name, coeffs in self.seasonal_coeffs.items()
            },
            "holiday_effects": self.holiday_effects,
            "regressor_coeffs": self.regressor_coeffs,
            "t_start_ms": self.t_start_ms,
            "t_scale_ms": self.t_scale_ms,
            "y_scale": self.y_scale,
        }

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh, indent=2, sort_keys=True)

    @classmethod
    def from_json_dict(cls, data: dict) -> "ForecastModel":
        cfg = data["config"]
        config = ModelConfig(
            trend_type=cfg["trend_type"],
            capacity=cfg["capacity"],
            n_changepoints=int(cfg["n_changepoints"]),
            changepoint_range=float(cfg["changepoint_range"]),
            changepoint_prior_scale=float(cfg["changepoint_prior_scale"]),
            seasonalities=tuple(
                Seasonality(name, float(period), int(order))
                for name, period, order in cfg["seasonalities"]
            ),
            seasonality_prior_scale=float(cfg["seasonality_prior_scale"]),
            seasonality_mode=cfg["seasonality_mode"],
            holidays=tuple(
                Holiday(
                    h["name"],
                    tuple(h["dates"]),
                    int(h["lower_window"]),
                    int(h["upper_window"]),
                )
                for h in cfg["holidays"]
            ),
            holidays_prior_scale=float(cfg["holidays_prior_scale"]),
            regressors=tuple(cfg["regressors"]),
        )
        return cls(
            config=config,
            k=float(data["k"]),
            m=float(data["m"]),
            changepoints_t=np.asarray(data["changepoints_t"], dtype=float),
            deltas=np.asarray(data["deltas"], dtype=float),
            seasonal_coeffs={
                name: np.asarray(coeffs, dtype=float)
                for name, coeffs in data["seasonal_coeffs"].items()
            },
            holiday_effects={k: float(v) for k, v in data["holiday_effects"].items()},
            regressor_coeffs={
                k: float(v) for k, v in data["regressor_coeffs"].items()
            },
            t_start_ms=int(data["t_start_ms"]),
            t_scale_ms=int(data["t_scale_ms"]),
            y_scale=float(data["y_scale"]),
        )

    @classmethod
    def load(cls, path: str | Path) -> "ForecastModel":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json_dict(json.load(fh))


@dataclass
class Prediction:
    timestamps: list[int]
    yhat: np.ndarray
    trend: np.ndarray
    seasonal: np.ndarray
    holiday: np.ndarray
    regressor: np.ndarray


@dataclass
class FitResult:
    model: ForecastModel
    residuals: list[float]
    in_sample_rmse: float


def eval_trend(model: ForecastModel, t) -> np.ndarray:
    """Trend in model (scaled) time units; see ``piecewise_linear`` and
    ``piecewise_logistic`` for the functional forms."""
    return model.trend_scaled(np.atleast_1d(np.asarray(t, dtype=float)))


# ---------------------------------------------------------------------------
# fitting


def _logistic_smooth_factory(
    t: np.ndarray,
    cap: float,
    S: np.ndarray,
    y: np.ndarray,
    l2_diag: np.ndarray,
    n_changepoints: int,
    cps: np.ndarray,
    multiplicative: bool,
):
    """Smooth part of the objective and its gradient for logistic trends.

    Parameter vector layout: [k, m, deltas..., component coefficients...].
    """
    P = 2 + n_changepoints

    def smooth(params: np.ndarray):
        k, m = params[0], params[1]
        deltas = params[2:P]
        c = params[P:]
        g, dg = logistic_trend_jacobian(t, cap, k, m, deltas, cps)
        comp = S @ c if S.shape[1] else np.zeros_like(g)
        if multiplicative:
            model_vals = g * (1.0 + comp)
            r = model_vals - y
            grad_trend = dg.T @ (r * (1.0 + comp))
            grad_c = S.T @ (r * g) if S.shape[1] else np.zeros(0)
        else:
            r = g + comp - y
            grad_trend = dg.T @ r
            grad_c = S.T @ r if S.shape[1] else np.zeros(0)
        f = 0.5 * float(r @ r) + 0.5 * float((l2_diag * c * c).sum())
        grad = np.concatenate((grad_trend, grad_c + l2_diag * c))
        return f, grad

    return smooth


def logistic_objective_and_grad(
    params: np.ndarray,
    t: np.ndarray,
    cap: float,
    S: np.ndarray,
    y: np.ndarray,
    l2_diag: np.ndarray,
    n_changepoints: int,
    cps: np.ndarray,
    l1_weight: float,
    multiplicative: bool = False,
) -> tuple[float, np.ndarray]:
    """Full fitting objective (including the L1 term) and its gradient.

    Differentiable wherever no delta sits exactly at zero; the L1 term
    contributes l1_weight * sign(delta).
    """
    smooth = _logistic_smooth_factory(
        t, cap, S, y, l2_diag, n_changepoints, cps, multiplicative
    )
    f, grad = smooth(params)
    deltas = params[2 : 2 + n_changepoints]
    f += l1_weight * float(np.abs(deltas).sum())
    grad = grad.copy()
    grad[2 : 2 + n_changepoints] += l1_weight * np.sign(deltas)
    return f, grad


def _logistic_init(t: np.ndarray, y: np.ndarray, cap: float) -> tuple[float, float]:
    # Boundary-condition init: pass the sigmoid through the clipped endpoints.
    y0 = min(max(y[0], 0.01 * cap), 0.99 * cap)
    y1 = min(max(y[-1], 0.01 * cap), 0.99 * cap)
    r0 = cap / y0
    r1 = cap / y1
    if abs(r0 - r1) <= 0.01:
        r0 = 1.05 * r0
    L0 = math.log(r0 - 1.0)
    L1 = math.log(r1 - 1.0)
    span = t[-1] - t[0]
    k = (L0 - L1) / span
    m = t[0] + L0 * span / (L0 - L1)
    return k, m


def fit(
    config: ModelConfig,
    train: TimeSeries,
    holidays: tuple[Holiday, ...] | None = None,
    regressors: dict | None = None,
) -> FitResult:
    """Estimate all model parameters from a training series.

    Times are rescaled to [0, 1] and values by max |y|; rate changes get an
    L1 penalty of 1/changepoint_prior_scale, seasonal/holiday/regressor
    coefficients Gaussian penalties with the configured prior scales.
    """
    if len(train) < 2:
        raise DomainError("need at least 2 training points")
    if train.defined_count() != len(train):
        raise DomainError("training series has missing values (impute first)")
    ts, y = train.to_arrays()
    t_scale = int(ts[-1] - ts[0])
    if t_scale <= 0:
        raise DomainError("training span is degenerate (constant time)")
    y_scale = float(np.abs(y).max())
    if y_scale == 0.0:
        y_scale = 1.0
    y_scaled = y / y_scale
    t = (ts - ts[0]) / t_scale

    holiday_list = tuple(holidays) if holidays is not None else config.holidays
    if holidays is not None:
        config = replace(config, holidays=holiday_list)
    regressors = {
        name: np.asarray(values, dtype=float)
        for name, values in (regressors or {}).items()
    }

    n_cp = min(config.n_changepoints, len(train) - 1)
    cps = make_changepoints(0.0, 1.0, n_cp, config.changepoint_range)
    components = _build_components(ts, config, holiday_list, regressors)
    S = components.matrix
    l1_weight = 1.0 / config.changepoint_prior_scale

    if config.trend_type == "logistic":
        if np.any(y > config.capacity):
            raise DomainError("observations exceed the logistic capacity")
        cap_scaled = config.capacity / y_scale
        k0, m0 = _logistic_init(t, y_scaled, cap_scaled)
        g0 = piecewise_logistic(t, cap_scaled, k0, m0, np.zeros(n_cp), cps)
        c0 = _ridge_solve(S, y_scaled - g0, components.l2_diag)
        params = np.concatenate(([k0, m0], np.zeros(n_cp), c0))
        smooth = _logistic_smooth_factory(
            t,
            cap_scaled,
            S,
            y_scaled,
            components.l2_diag,
            n_cp,
            cps,
            config.seasonality_mode == "multiplicative",
        )
        params = _prox_gradient_descent(
            params, smooth, l1_weight, slice(2, 2 + n_cp)
        )
        k, m = float(params[0]), float(params[1])
        deltas = params[2 : 2 + n_cp]
        c = params[2 + n_cp :]
    elif config.seasonality_mode == "additive":
        hinge = np.maximum(t[:, None] - cps[None, :], 0.0) if n_cp else np.zeros((len(t), 0))
        X = np.hstack((t.reshape(-1, 1), np.ones((len(t), 1)), hinge, S))
        l2_diag = np.concatenate((np.zeros(2 + n_cp), components.l2_diag))
        beta = solve_l1_l2_least_squares(
            X, y_scaled, l1_weight, slice(2, 2 + n_cp), l2_diag
        )
        k, m = float(beta[0]), float(beta[1])
        deltas = beta[2 : 2 + n_cp]
        c = beta[2 + n_cp :]
    else:
        k, m, deltas, c = _fit_linear_multiplicative(
            t, y_scaled, cps, S, components.l2_diag, l1_weight
        )

    model = ForecastModel(
        config=config,
        k=k,
        m=m,
        changepoints_t=cps,
        deltas=np.asarray(deltas, dtype=float),
        seasonal_coeffs={
            name: c[sl].copy() for name, sl in components.seasonal_slices.items()
        },
        holiday_effects={
            name: float(c[idx]) for name, idx in components.holiday_slices.items()
        },
        regressor_coeffs={
            name: float(c[idx]) for name, idx in components.regressor_slices.items()
        },
        t_start_ms=int(ts[0]),
        t_scale_ms=t_scale,
        y_scale=y_scale,
    )
    prediction = model.predict(list(ts), regressors if config.regressors else None)
    residuals = (y - prediction.yhat).tolist()
    rmse = float(np.sqrt(np.mean((y - prediction.yhat) ** 2)))
    return FitResult(model=model, residuals=residuals, in_sample_rmse=rmse)


def _ridge_solve(S: np.ndarray, target: np.ndarray, l2_diag: np.ndarray) -> np.ndarray:
    if S.shape[1] == 0:
        return np.zeros(0)
    M = S.T @ S + np.diag(l2_diag) + 1e-10 * np.eye(S.shape[1])
    return np.linalg.solve(M, S.T @ target)


def _fit_linear_multiplicative(
    t: np.ndarray,
    y: np.ndarray,
    cps: np.ndarray,
    S: np.ndarray,
    l2_diag: np.ndarray,
    l1_weight: float,
    rounds: int = 25,
) -> tuple[float, float, np.ndarray, np.ndarray]:
    """Alternate trend and component solves for y = g(t) * (1 + S c)."""
    n_cp = len(cps)
    n = len(t)
    hinge = np.maximum(t[:, None] - cps[None, :], 0.0) if n_cp else np.zeros((n, 0))
    X_trend = np.hstack((t.reshape(-1, 1), np.ones((n, 1)), hinge))
    trend_l2 = np.zeros(2 + n_cp)

    theta = solve_l1_l2_least_squares(
        X_trend, y, l1_weight, slice(2, 2 + n_cp), trend_l2
    )
    c = np.zeros(S.shape[1])
    prev_obj = math.inf
    for _ in range(rounds):
        g = X_trend @ theta
        if S.shape[1]:
            weighted = g[:, None] * S
            c = _ridge_solve(weighted, y - g, l2_diag)
        w = 1.0 + (S @ c if S.shape[1] else np.zeros(n))
        theta = solve_l1_l2_least_squares(
            w[:, None] * X_trend, y, l1_weight, slice(2, 2 + n_cp), trend_l2
        )
        r = (X_trend @ theta) * w - y
        obj = (
            0.5 * float(r @ r)
            + l1_weight * float(np.abs(theta[2:]).sum())
            + 0.5 * float((l2_diag * c * c).sum())
        )
        if abs(prev_obj - obj) <= OBJECTIVE_TOL:
            break
        prev_obj = obj
    return float(theta[0]), float(theta[1]), theta[2:], c


def predict(
    model: ForecastModel, future_times, future_regressors: dict | None = None
) -> Prediction:
    """Evaluate the fitted model; regressor values are required for every
    configured regressor."""
    return model.predict(future_times, future_regressors)
