"""HTTP+JSON API over the telemetry store, ledger, billing and forecaster.

One FastAPI app serves all module surfaces under /api/v1. When a scenario
is attached, a background thread steps the simulated fleet in wall-clock
time and feeds the store, which is what makes the relay endpoint and the
live dashboard meaningful.
"""

from __future__ import annotations

import threading
import time
from contextlib import asynccontextmanager
from datetime import datetime, timezone
from pathlib import Path

from fastapi import Body, FastAPI, Query, Request
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from . import billing as billing_mod
from .billing import BillingEngine, Goal, tariff_by_name
from .errors import (
    ClockRegressionError,
    ConfigError,
    ConflictError,
    DomainError,
    InsufficientBalanceError,
    NotFoundError,
    OrderingError,
    PreconditionError,
    ValidationError,
    WattError,
)
from .forecast import ModelConfig, Seasonality, fit
from .forecast.io import forecast_rows
from .forecast.pipeline import impute, resample
from .ingest import SeriesQuery, TelemetryStore
from .ledger import Chain
from .metersim import MeterReading, Scenario

DEFAULT_OPENING_BALANCE = 1_000_000  # paise per consumer account

_STATUS = {
    ValidationError: 400,
    DomainError: 400,
    ConfigError: 400,
    OrderingError: 409,
    ClockRegressionError: 409,
    ConflictError: 409,
    InsufficientBalanceError: 402,
    NotFoundError: 404,
    PreconditionError: 412,
}


class LiveFleet(threading.Thread):
    """Steps an attached scenario fleet in wall-clock time."""

    def __init__(self, scenario: Scenario, store: TelemetryStore):
        super().__init__(daemon=True, name="watt-live-fleet")
        self.interval_s = scenario.interval_ms / 1000.0
        now_ms = int(time.time() * 1000)
        self.fleet = scenario.build_fleet(start_ms=now_ms)
        self.store = store
        self._stop = threading.Event()
        for meter_id, _ in scenario.meters:
            store.register_meter(meter_id)

    def run(self) -> None:
        while not self._stop.wait(self.interval_s):
            now_ms = int(time.time() * 1000)
            try:
                readings = self.fleet.step(now_ms)
            except ClockRegressionError:
                continue
            for reading in readings:
                try:
                    self.store.submit_reading(reading)
                except (ValidationError, OrderingError):
                    pass

    def stop(self) -> None:
        self._stop.set()


class AppState:
    def __init__(
        self,
        data_dir: str | Path,
        scenario: Scenario | None = None,
        genesis_timestamp_ms: int = 0,
        opening_balance_paise: int = DEFAULT_OPENING_BALANCE,
        tariff_config: str | Path | None = None,
    ):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.store = TelemetryStore(self.data_dir)
        balances = {}
        if scenario is not None:
            balances = {m: opening_balance_paise for m, _ in scenario.meters}
        self.chain = Chain(
            genesis_timestamp_ms=genesis_timestamp_ms,
            initial_balances=balances,
            path=self.data_dir / "chain.ndjson",
        )
        self.engine = BillingEngine(self.store, self.chain, data_dir=self.data_dir)
        self.tariff_config = tariff_config
        self.scenario = scenario
        self.live: LiveFleet | None = None

    def start_live(self) -> None:
        if self.scenario is not None and self.live is None:
            self.live = LiveFleet(self.scenario, self.store)
            self.live.start()

    def stop_live(self) -> None:
        if self.live is not None:
            self.live.stop()
            self.live = None


def current_month_period(now_ms: int) -> tuple[int, int]:
    """[first of this month, first of next month) in epoch ms, UTC."""
    now = datetime.fromtimestamp(now_ms / 1000.0, tz=timezone.utc)
    start = now.replace(day=1, hour=0, minute=0, second=0, microsecond=0)
    if start.month == 12:
        end = start.replace(year=start.year + 1, month=1)
    else:
        end = start.replace(month=start.month + 1)
    return int(start.timestamp() * 1000), int(end.timestamp() * 1000)


def _parse_period(period: str) -> tuple[int, int]:
    try:
        start_text, end_text = period.split("-", 1)
        return int(start_text), int(end_text)
    except ValueError:
        raise ValidationError("period must look like <start_ms>-<end_ms>") from None


def _block_payload(block) -> dict:
    return {
        "index": block.index,
        "timestamp_ms": block.timestamp_ms,
        "prev_hash": block.prev_hash.hex(),
        "hash": block.hash.hex(),
        "gas_total": block.gas_total,
        "transactions": [tx.to_dict() for tx in block.transactions],
    }


def forecast_config_for_span(span_ms: int) -> ModelConfig:
    """Enable only the seasonalities the history can support."""
    seasonalities = []
    if span_ms >= 2 * 86_400_000:
        seasonalities.append(Seasonality("daily", 1.0, 4))
    if span_ms >= 14 * 86_400_000:
        seasonalities.append(Seasonality("weekly", 7.0, 3))
    if span_ms >= 730 * 86_400_000:
        seasonalities.append(Seasonality("yearly", 365.25, 10))
    if not seasonalities:
        seasonalities.append(Seasonality("daily", 1.0, 2))
    return ModelConfig(trend_type="linear", seasonalities=tuple(seasonalities))


def forecast_for_meter(
    store: TelemetryStore, meter_id: str, horizon_hours: float, step_ms: int
) -> list[dict]:
    latest = store.latest(meter_id)
    if latest is None:
        raise PreconditionError(f"meter {meter_id!r} has no readings to fit on")
    raw = store.query_series(
        SeriesQuery(
            meter_id=meter_id,
            from_ms=0,
            to_ms=latest.timestamp_ms + 1,
            step_ms=None,
            field="apparent_power",
        )
    )
    history = resample(raw, step_ms, "mean")
    if history.defined_count() < len(history):
        history = impute(history, "linear_interpolation")
    if history.defined_count() < 2:
        raise PreconditionError("not enough history to fit a forecast")
    span = history.timestamps[-1] - history.timestamps[0]
    config = forecast_config_for_span(span)
    result = fit(config, history)
    steps = int(round(horizon_hours * 3_600_000 / step_ms))
    start = history.timestamps[-1] + step_ms
    future = [start + i * step_ms for i in range(steps)]
    if not future:
        return []
    prediction = result.model.predict(future)
    return forecast_rows(prediction)


def create_app(
    data_dir: str | Path,
    scenario: Scenario | None = None,
    genesis_timestamp_ms: int = 0,
    opening_balance_paise: int = DEFAULT_OPENING_BALANCE,
    tariff_config: str | Path | None = None,
    static_dir: str | Path | None = None,
) -> FastAPI:
    state = AppState(
        data_dir,
        scenario=scenario,
        genesis_timestamp_ms=genesis_timestamp_ms,
        opening_balance_paise=opening_balance_paise,
        tariff_config=tariff_config,
    )

    @asynccontextmanager
    async def lifespan(_app: FastAPI):
        state.start_live()
        yield
        state.stop_live()

    app = FastAPI(title="watt", lifespan=lifespan)
    app.state.watt = state

    @app.exception_handler(WattError)
    async def watt_error_handler(_request: Request, exc: WattError):
        status = _STATUS.get(type(exc), 400)
        return JSONResponse(
            status_code=status,
            content={"error": type(exc).__name__, "detail": str(exc)},
        )

    # -- ingest ------------------------------------------------------------

    @app.post("/api/v1/readings")
    def submit_reading(body: dict = Body(...)):
        reading = MeterReading.from_dict(body)
        offset = state.store.submit_reading(reading)
        return {"offset": offset}

    @app.get("/api/v1/meters")
    def list_meters():
        out = []
        for meter_id in state.store.meters():
            entry = {"meter_id": meter_id}
            if state.live is not None:
                try:
                    entry["relay_on"] = state.live.fleet.relay_state(meter_id)
                except NotFoundError:
                    pass
            out.append(entry)
        return out

    @app.get("/api/v1/meters/{meter_id}/latest")
    def latest(meter_id: str):
        record = state.store.latest(meter_id)
        if record is None:
            return {"meter_id": meter_id, "reading": None}
        return {"meter_id": meter_id, "reading": record.to_dict()}

    @app.get("/api/v1/meters/{meter_id}/series")
    def series(
        meter_id: str,
        from_ms: int = Query(alias="from"),
        to_ms: int = Query(alias="to"),
        step: int | None = None,
        agg: str | None = None,
        field: str = "apparent_power",
    ):
        q = SeriesQuery(
            meter_id=meter_id,
            from_ms=from_ms,
            to_ms=to_ms,
            step_ms=step,
            agg=agg,
            field=field,
        )
        result = state.store.query_series(q)
        return {"timestamps": result.timestamps, "values": result.values}

    @app.post("/api/v1/meters/{meter_id}/relay")
    def set_relay(meter_id: str, body: dict = Body(...)):
        if state.live is None:
            raise ConflictError("no simulator attached to this server")
        if "on" not in body:
            raise ValidationError('body must carry {"on": bool}')
        new_state = state.live.fleet.set_relay(meter_id, bool(body["on"]))
        return {"meter_id": meter_id, "on": new_state}

    # -- ledger --------------------------------------------------------------

    @app.get("/api/v1/chain/blocks")
    def chain_blocks():
        return [_block_payload(b) for b in state.chain.blocks]

    @app.get("/api/v1/chain/blocks/{index}")
    def chain_block(index: int):
        if not 0 <= index < len(state.chain.blocks):
            raise NotFoundError(f"no block at index {index}")
        return _block_payload(state.chain.blocks[index])

    @app.get("/api/v1/chain/verify")
    def chain_verify():
        result = state.chain.verify()
        return {"ok": result.ok, "first_bad_index": result.first_bad_index}

    @app.get("/api/v1/accounts/{account_id}")
    def account(account_id: str):
        return {"account": account_id, "balance_paise": state.chain.balance(account_id)}

    # -- billing -------------------------------------------------------------

    @app.get("/api/v1/invoices")
    def invoices(meter: str | None = None, period: str | None = None):
        parsed = _parse_period(period) if period else None
        return [inv.to_dict() for inv in state.engine.invoices(meter, parsed)]

    @app.get("/api/v1/invoices/{invoice_id}")
    def invoice(invoice_id: str):
        return state.engine.get_invoice(invoice_id).to_dict()

    @app.post("/api/v1/billing/run")
    def billing_run(body: dict = Body(...)):
        try:
            period_start = int(body["period_start"])
            period_end = int(body["period_end"])
        except (KeyError, TypeError, ValueError):
            raise ValidationError(
                "body must carry integer period_start and period_end"
            ) from None
        default_tariff = scenario.tariff if scenario is not None else "state"
        tariff = tariff_by_name(
            str(body.get("tariff", default_tariff)), state.tariff_config
        )
        now_ms = int(time.time() * 1000)
        issued, block = state.engine.run_billing_cycle(
            period_start, period_end, tariff, now_ms=now_ms
        )
        return {
            "invoices": [inv.to_dict() for inv in issued],
            "block_index": block.index if block is not None else None,
        }

    @app.post("/api/v1/invoices/{invoice_id}/pay")
    def pay(invoice_id: str, body: dict = Body(...)):
        payer = body.get("payer")
        if not payer:
            raise ValidationError('body must carry {"payer": account}')
        receipt = state.engine.pay_invoice(
            invoice_id, str(payer), now_ms=int(time.time() * 1000)
        )
        return {
            "invoice_id": receipt.invoice_id,
            "tx_id": receipt.tx_id,
            "gas": receipt.gas,
            "block_index": receipt.block_index,
            "block_hash": receipt.block_hash,
        }

    @app.put("/api/v1/meters/{meter_id}/goal")
    def put_goal(meter_id: str, body: dict = Body(...)):
        try:
            target = float(body["kwh_target"])
        except (KeyError, TypeError, ValueError):
            raise ValidationError('body must carry {"kwh_target": number}') from None
        if "period_start" in body or "period_end" in body:
            try:
                period = (int(body["period_start"]), int(body["period_end"]))
            except (KeyError, TypeError, ValueError):
                raise ValidationError(
                    "period_start and period_end must both be integers"
                ) from None
        else:
            period = current_month_period(int(time.time() * 1000))
        goal = state.engine.set_goal(
            Goal(
                meter_id=meter_id,
                period_start_ms=period[0],
                period_end_ms=period[1],
                kwh_target=target,
            )
        )
        return {
            "meter_id": goal.meter_id,
            "period_start_ms": goal.period_start_ms,
            "period_end_ms": goal.period_end_ms,
            "kwh_target": goal.kwh_target,
        }

    @app.get("/api/v1/meters/{meter_id}/goal")
    def get_goal(meter_id: str):
        goal = state.engine.get_goal(meter_id)
        return {
            "meter_id": goal.meter_id,
            "period_start_ms": goal.period_start_ms,
            "period_end_ms": goal.period_end_ms,
            "kwh_target": goal.kwh_target,
        }

    @app.get("/api/v1/meters/{meter_id}/goal/progress")
    def goal_progress(meter_id: str):
        progress = state.engine.goal_progress(meter_id, int(time.time() * 1000))
        return {
            "meter_id": meter_id,
            "kwh_used": progress.kwh_used,
            "fraction_of_target": progress.fraction_of_target,
            "projected_overshoot": progress.projected_overshoot,
        }

    @app.get("/api/v1/peaks")
    def peaks(
        threshold: float | None = None,
        from_ms: int | None = Query(default=None, alias="from"),
        to_ms: int | None = Query(default=None, alias="to"),
        step: int = 60_000,
    ):
        if threshold is None:
            if scenario is None or scenario.peak_threshold_va is None:
                raise ValidationError("threshold is required (no scenario default)")
            threshold = scenario.peak_threshold_va
        if from_ms is None or to_ms is None:
            bounds = []
            for meter_id in state.store.meters():
                record = state.store.latest(meter_id)
                if record is not None:
                    first = state.store.query_series(
                        SeriesQuery(
                            meter_id=meter_id,
                            from_ms=0,
                            to_ms=record.timestamp_ms + 1,
                        )
                    )
                    if first.timestamps:
                        bounds.append((first.timestamps[0], record.timestamp_ms))
            if not bounds:
                return []
            from_ms = min(b[0] for b in bounds) if from_ms is None else from_ms
            to_ms = max(b[1] for b in bounds) + 1 if to_ms is None else to_ms
        aggregate = state.engine.aggregate_power(from_ms, to_ms, step)
        events = billing_mod.detect_peaks(aggregate, threshold)
        return [
            {
                "timestamp_ms": e.timestamp_ms,
                "aggregate_power_va": e.aggregate_power_va,
                "threshold_va": e.threshold_va,
            }
            for e in events
        ]

    # -- forecast --------------------------------------------------------------

    @app.get("/api/v1/forecast/{meter_id}")
    def forecast(meter_id: str, horizon_hours: float = 24.0, step_ms: int = 3_600_000):
        if meter_id not in state.store.meters():
            raise NotFoundError(f"unknown meter {meter_id!r}")
        return forecast_for_meter(state.store, meter_id, horizon_hours, step_ms)

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app
