"""Tariff engine and automated billing cycle.

Pricing uses the 2019-20 Indian distribution-utility cost structure as the
per-kWh schedule: five cost heads, in integer paise per kWh, for the state
and private sectors. Each invoice line is the head rate times the billed
kWh, rounded half-even to whole paise; the invoice total is the sum of its
lines. Note the private-sector source table prints a total of Rs 6.99/kWh
while its five components sum to Rs 7.00/kWh; this engine prices by
component sum, so private totals come out at 700 paise per kWh.

A billing cycle reads each meter's cumulative energy counter at the period
boundaries, issues one invoice per meter, and commits one metadata
transaction per invoice (amount 0, payload = the invoice document) in a
single block. Money moves only when an invoice is paid, which appends a
fresh payment block and marks the invoice paid.
"""

from __future__ import annotations

import hashlib
import json
import threading
import time
from dataclasses import dataclass, replace
from pathlib import Path

from .errors import (
    ConfigError,
    ConflictError,
    DomainError,
    NotFoundError,
    PreconditionError,
    ValidationError,
)
from .ingest import TelemetryStore
from .ledger import Chain, make_transaction
from .series import TimeSeries

UTILITY_ACCOUNT = "utility"

STATE_HEADS = (
    ("cost_of_power", 470),
    ("employee", 51),
    ("interest", 41),
    ("depreciation", 21),
    ("other", 26),
)
PRIVATE_HEADS = (
    ("cost_of_power", 517),
    ("employee", 49),
    ("interest", 57),
    ("depreciation", 30),
    ("other", 47),
)


@dataclass(frozen=True)
class Tariff:
    name: str
    heads: tuple[tuple[str, int], ...]

    def __post_init__(self):
        object.__setattr__(self, "heads", tuple(tuple(h) for h in self.heads))
        for head, rate in self.heads:
            if rate < 0:
                raise ValidationError(f"negative rate for head {head!r}")

    @property
    def total_rate_paise(self) -> int:
        return sum(rate for _, rate in self.heads)


STATE_TARIFF = Tariff("state", STATE_HEADS)
PRIVATE_TARIFF = Tariff("private", PRIVATE_HEADS)
BUILTIN_TARIFFS = {"state": STATE_TARIFF, "private": PRIVATE_TARIFF}


def tariff_by_name(name: str, config_path: str | Path | None = None) -> Tariff:
    """Resolve a tariff by name, optionally from a JSON config file.

    The config file maps tariff names to {head_name: rate_paise} objects
    and extends/overrides the two built-in presets.
    """
    tariffs = dict(BUILTIN_TARIFFS)
    if config_path is not None:
        try:
            with open(config_path, encoding="utf-8") as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read tariff config: {exc}") from exc
        for tariff_name, heads in raw.items():
            tariffs[tariff_name] = Tariff(
                tariff_name, tuple((str(h), int(r)) for h, r in heads.items())
            )
    try:
        return tariffs[name]
    except KeyError:
        raise ConfigError(f"unknown tariff {name!r}") from None


@dataclass
class Invoice:
    invoice_id: str
    meter_id: str
    period_start_ms: int
    period_end_ms: int
    kwh_billed: float
    lines: tuple[tuple[str, int], ...]
    total_paise: int
    status: str = "issued"  # issued | paid
    payment_tx: str | None = None  # hex tx id once paid

    def to_dict(self) -> dict:
        return {
            "invoice_id": self.invoice_id,
            "meter_id": self.meter_id,
            "period_start_ms": self.period_start_ms,
            "period_end_ms": self.period_end_ms,
            "kwh_billed": self.kwh_billed,
            "lines": [[head, amount] for head, amount in self.lines],
            "total_paise": self.total_paise,
            "status": self.status,
            "payment_tx": self.payment_tx,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Invoice":
        return cls(
            invoice_id=data["invoice_id"],
            meter_id=data["meter_id"],
            period_start_ms=int(data["period_start_ms"]),
            period_end_ms=int(data["period_end_ms"]),
            kwh_billed=float(data["kwh_billed"]),
            lines=tuple((h, int(a)) for h, a in data["lines"]),
            total_paise=int(data["total_paise"]),
            status=data["status"],
            payment_tx=data["payment_tx"],
        )

    def document_bytes(self) -> bytes:
        """Canonical invoice document, the payload hashed into the ledger."""
        doc = {
            "invoice_id": self.invoice_id,
            "kwh_billed": self.kwh_billed,
            "lines": [[head, amount] for head, amount in self.lines],
            "meter_id": self.meter_id,
            "period_end_ms": self.period_end_ms,
            "period_start_ms": self.period_start_ms,
            "total_paise": self.total_paise,
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()


@dataclass(frozen=True)
class Goal:
    meter_id: str
    period_start_ms: int
    period_end_ms: int
    kwh_target: float

    def __post_init__(self):
        if self.kwh_target <= 0:
            raise ValidationError("kwh_target must be > 0")
        if self.period_start_ms >= self.period_end_ms:
            raise ValidationError("goal period must be non-empty")


@dataclass(frozen=True)
class GoalProgress:
    kwh_used: float
    fraction_of_target: float
    projected_overshoot: bool


@dataclass(frozen=True)
class PeakEvent:
    timestamp_ms: int
    aggregate_power_va: float
    threshold_va: float


@dataclass(frozen=True)
class PaymentReceipt:
    invoice_id: str
    tx_id: str
    gas: int
    block_index: int
    block_hash: str


def make_invoice_id(meter_id: str, period_start_ms: int, period_end_ms: int) -> str:
    raw = f"{meter_id}|{period_start_ms}|{period_end_ms}".encode()
    return hashlib.sha256(raw).hexdigest()[:16]


def round_half_even(x: float) -> int:
    return round(x)


def compute_invoice(
    kwh: float,
    tariff: Tariff,
    meter_id: str,
    period_start_ms: int,
    period_end_ms: int,
) -> Invoice:
    """Price ``kwh`` against a tariff: one rounded line per cost head."""
    if kwh < 0:
        raise DomainError(f"cannot invoice negative consumption: {kwh}")
    lines = tuple(
        (head, round_half_even(rate * kwh)) for head, rate in tariff.heads
    )
    return Invoice(
        invoice_id=make_invoice_id(meter_id, period_start_ms, period_end_ms),
        meter_id=meter_id,
        period_start_ms=period_start_ms,
        period_end_ms=period_end_ms,
        kwh_billed=kwh,
        lines=lines,
        total_paise=sum(amount for _, amount in lines),
    )


def detect_peaks(aggregate_series: TimeSeries, threshold_va: float) -> list[PeakEvent]:
    """One event per sample strictly above the threshold."""
    if threshold_va <= 0:
        raise DomainError("threshold must be > 0")
    events = []
    for ts, value in zip(aggregate_series.timestamps, aggregate_series.values):
        if value is not None and value > threshold_va:
            events.append(PeakEvent(ts, value, threshold_va))
    return events


class BillingEngine:
    """Smart-contract-style billing rules over the store and the chain.

    Invoices and goals are kept in memory and mirrored to
    ``billing.json`` under the data directory when one is configured.
    """

    def __init__(
        self,
        store: TelemetryStore,
        chain: Chain,
        data_dir: str | Path | None = None,
        utility_account: str = UTILITY_ACCOUNT,
    ):
        self.store = store
        self.chain = chain
        self.utility_account = utility_account
        self._lock = threading.Lock()
        self._invoices: dict[str, Invoice] = {}
        self._goals: dict[str, Goal] = {}
        self._path = Path(data_dir) / "billing.json" if data_dir is not None else None
        if self._path is not None and self._path.exists():
            self._load()

    # -- persistence ------------------------------------------------------

    def _load(self) -> None:
        assert self._path is not None
        with open(self._path, encoding="utf-8") as fh:
            data = json.load(fh)
        self._invoices = {
            inv["invoice_id"]: Invoice.from_dict(inv) for inv in data.get("invoices", [])
        }
        self._goals = {
            g["meter_id"]: Goal(
                meter_id=g["meter_id"],
                period_start_ms=int(g["period_start_ms"]),
                period_end_ms=int(g["period_end_ms"]),
                kwh_target=float(g["kwh_target"]),
            )
            for g in data.get("goals", [])
        }

    def _save(self) -> None:
        if self._path is None:
            return
        data = {
            "invoices": [inv.to_dict() for inv in self._invoices.values()],
            "goals": [
                {
                    "meter_id": g.meter_id,
                    "period_start_ms": g.period_start_ms,
                    "period_end_ms": g.period_end_ms,
                    "kwh_target": g.kwh_target,
                }
                for g in self._goals.values()
            ],
        }
        tmp = self._path.with_suffix(".json.tmp")
        self._path.parent.mkdir(parents=True, exist_ok=True)
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(data, fh, sort_keys=True)
        tmp.replace(self._path)

    # -- invoices ----------------------------------------------------------

    def account_for_meter(self, meter_id: str) -> str:
        return meter_id

    def invoices(
        self,
        meter_id: str | None = None,
        period: tuple[int, int] | None = None,
    ) -> list[Invoice]:
        with self._lock:
            result = list(self._invoices.values())
        if meter_id is not None:
            result = [inv for inv in result if inv.meter_id == meter_id]
        if period is not None:
            start, end = period
            result = [
                inv
                for inv in result
                if inv.period_start_ms == start and inv.period_end_ms == end
            ]
        return sorted(result, key=lambda inv: (inv.period_start_ms, inv.meter_id))

    def get_invoice(self, invoice_id: str) -> Invoice:
        with self._lock:
            try:
                return self._invoices[invoice_id]
            except KeyError:
                raise NotFoundError(f"unknown invoice {invoice_id!r}") from None

    def run_billing_cycle(
        self,
        period_start_ms: int,
        period_end_ms: int,
        tariff: Tariff,
        now_ms: int | None = None,
    ) -> tuple[list[Invoice], object | None]:
        """Issue one invoice per meter for a closed period.

        Consumption is the cumulative counter at the period end minus the
        counter at the period start (last reading at or before each
        boundary). All newly issued invoices are committed as zero-amount
        metadata transactions in a single block. Re-running a period is a
        no-op that returns the existing invoices.
        """
        if period_start_ms >= period_end_ms:
            raise ValidationError("billing period must be non-empty")
        if now_ms is None:
            now_ms = int(time.time() * 1000)
        if period_end_ms > now_ms:
            raise PreconditionError(
                f"period ends at {period_end_ms} ms, after now ({now_ms} ms)"
            )
        with self._lock:
            invoices: list[Invoice] = []
            fresh: list[Invoice] = []
            for meter_id in self.store.meters():
                invoice_id = make_invoice_id(meter_id, period_start_ms, period_end_ms)
                existing = self._invoices.get(invoice_id)
                if existing is not None:
                    invoices.append(existing)
                    continue
                kwh = self.store.kwh_at(meter_id, period_end_ms) - self.store.kwh_at(
                    meter_id, period_start_ms
                )
                invoice = compute_invoice(
                    max(kwh, 0.0), tariff, meter_id, period_start_ms, period_end_ms
                )
                invoices.append(invoice)
                fresh.append(invoice)
            block = None
            if fresh:
                transactions = [
                    make_transaction(
                        from_account=self.account_for_meter(inv.meter_id),
                        to_account=self.utility_account,
                        amount_paise=0,
                        payload=inv.document_bytes(),
                        timestamp_ms=period_end_ms,
                    )
                    for inv in fresh
                ]
                block = self.chain.add_block(transactions, timestamp_ms=period_end_ms)
                for inv in fresh:
                    self._invoices[inv.invoice_id] = inv
                self._save()
            return invoices, block

    def pay_invoice(
        self,
        invoice_id: str,
        payer_account: str,
        now_ms: int | None = None,
    ) -> PaymentReceipt:
        """Settle an issued invoice: one payment transaction in a new block."""
        with self._lock:
            invoice = self._invoices.get(invoice_id)
            if invoice is None:
                raise NotFoundError(f"unknown invoice {invoice_id!r}")
            if invoice.status == "paid":
                raise ConflictError(f"invoice {invoice_id} already paid")
            timestamp = now_ms if now_ms is not None else invoice.period_end_ms
            receipt_doc = json.dumps(
                {
                    "invoice_id": invoice.invoice_id,
                    "payer": payer_account,
                    "total_paise": invoice.total_paise,
                },
                sort_keys=True,
                separators=(",", ":"),
            ).encode()
            tx = make_transaction(
                from_account=payer_account,
                to_account=self.utility_account,
                amount_paise=invoice.total_paise,
                payload=receipt_doc,
                timestamp_ms=timestamp,
            )
            block = self.chain.add_block([tx], timestamp_ms=timestamp)
            paid = replace(invoice, status="paid", payment_tx=tx.tx_id.hex())
            self._invoices[invoice_id] = paid
            self._save()
            return PaymentReceipt(
                invoice_id=invoice_id,
                tx_id=tx.tx_id.hex(),
                gas=tx.gas,
                block_index=block.index,
                block_hash=block.hash.hex(),
            )

    # -- goals and peaks ---------------------------------------------------

    def set_goal(self, goal: Goal) -> Goal:
        """Set the active goal for a meter (one per meter per period)."""
        if goal.meter_id not in self.store.meters():
            raise NotFoundError(f"unknown meter {goal.meter_id!r}")
        with self._lock:
            self._goals[goal.meter_id] = goal
            self._save()
        return goal

    def get_goal(self, meter_id: str) -> Goal:
        with self._lock:
            goal = self._goals.get(meter_id)
        if goal is None:
            raise NotFoundError(f"no goal set for meter {meter_id!r}")
        return goal

    def goal_progress(self, meter_id: str, now_ms: int) -> GoalProgress:
        """Usage against target, with a linear-extrapolation overshoot flag."""
        goal = self.get_goal(meter_id)
        upto = min(now_ms, goal.period_end_ms)
        kwh_used = max(
            0.0,
            self.store.kwh_at(meter_id, upto)
            - self.store.kwh_at(meter_id, goal.period_start_ms),
        )
        fraction = kwh_used / goal.kwh_target
        span = goal.period_end_ms - goal.period_start_ms
        elapsed = (upto - goal.period_start_ms) / span
        overshoot = False
        if elapsed > 0:
            overshoot = kwh_used / elapsed > goal.kwh_target
        return GoalProgress(
            kwh_used=kwh_used,
            fraction_of_target=fraction,
            projected_overshoot=overshoot,
        )

    def aggregate_power(
        self, from_ms: int, to_ms: int, step_ms: int
    ) -> TimeSeries:
        """Fleet-wide apparent power: per-meter bucket means, summed.

        A bucket is missing only when no meter has a sample in it.
        """
        from .ingest import SeriesQuery

        meters = self.store.meters()
        per_meter = [
            self.store.query_series(
                SeriesQuery(
                    meter_id=m,
                    from_ms=from_ms,
                    to_ms=to_ms,
                    step_ms=step_ms,
                    agg="mean",
                )
            )
            for m in meters
        ]
        if not per_meter or not per_meter[0].timestamps:
            return TimeSeries([], [])
        timestamps = per_meter[0].timestamps
        values: list[float | None] = []
        for i in range(len(timestamps)):
            bucket = [s.values[i] for s in per_meter if s.values[i] is not None]
            values.append(sum(bucket) if bucket else None)
        return TimeSeries(timestamps, values)
