"""Deterministic smart-meter fleet simulation.

Each simulated meter plays the role of a sensing assembly on one appliance:
it reports RMS voltage and current, the apparent power their product gives,
and a cumulative energy counter advanced as

    kwh += apparent_power * (now_ms - last_ms) / 3_600_000_000.0

The 3.6e9 divisor folds the ms-to-hour conversion (3.6e6) together with the
W-to-kW factor (1e3). Current is clamped to the 0..100 A sensor range.
Given the same seed and scenario, a fleet reproduces its reading trace
byte for byte.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import (
    ClockRegressionError,
    ConfigError,
    DomainError,
    NotFoundError,
    ValidationError,
)

MS_PER_KWH = 3_600_000_000.0  # VA·ms per kWh
NOMINAL_VOLTAGE = 230.0
CURRENT_LIMIT_A = 100.0
MINUTES_PER_DAY = 1440

READING_KEYS = ("meter_id", "timestamp_ms", "v_rms", "i_rms", "apparent_power", "kwh_total")


def apparent_power(v_rms: float, i_rms: float) -> float:
    """Apparent power (VA) from RMS voltage and current."""
    for name, value in (("v_rms", v_rms), ("i_rms", i_rms)):
        if not math.isfinite(value):
            raise DomainError(f"{name} must be finite, got {value!r}")
        if value < 0:
            raise DomainError(f"{name} must be non-negative, got {value!r}")
    return v_rms * i_rms


@dataclass(frozen=True)
class EnergyAccumulator:
    """Cumulative kWh counter; ``last_millis`` unset before the first sample."""

    kwh: float = 0.0
    last_millis: int | None = None


def accumulate_energy(
    acc: EnergyAccumulator, power_va: float, now_ms: int
) -> EnergyAccumulator:
    """Advance the counter to ``now_ms`` at the sampled apparent power.

    The first sample only anchors the clock; energy accrues from the second
    sample on. A sample older than the anchor is rejected and the
    accumulator is left untouched.
    """
    if acc.last_millis is None:
        return replace(acc, last_millis=now_ms)
    if now_ms < acc.last_millis:
        raise ClockRegressionError(
            f"sample at {now_ms} ms predates accumulator clock {acc.last_millis} ms"
        )
    gained = power_va * (now_ms - acc.last_millis) / MS_PER_KWH
    return EnergyAccumulator(kwh=acc.kwh + gained, last_millis=now_ms)


@dataclass(frozen=True)
class ApplianceProfile:
    """Electrical behaviour of the appliance behind one meter."""

    name: str
    rated_power: float  # watts
    duty_schedule: tuple[tuple[int, int], ...] = ()  # on-windows, minutes of day
    power_factor: float = 1.0
    noise_sigma_v: float = 2.0
    noise_sigma_frac_i: float = 0.01

    def __post_init__(self):
        if self.rated_power < 0:
            raise ValidationError(f"rated_power must be >= 0, got {self.rated_power}")
        if not 0 < self.power_factor <= 1:
            raise ValidationError(
                f"power_factor must be in (0, 1], got {self.power_factor}"
            )
        if self.noise_sigma_v < 0 or self.noise_sigma_frac_i < 0:
            raise ValidationError("noise sigmas must be >= 0")
        object.__setattr__(
            self, "duty_schedule", tuple(tuple(w) for w in self.duty_schedule)
        )
        windows = sorted(self.duty_schedule)
        for start, end in windows:
            if not (0 <= start < end <= MINUTES_PER_DAY):
                raise ValidationError(
                    f"duty window ({start}, {end}) outside [0, {MINUTES_PER_DAY})"
                )
        for (_, prev_end), (next_start, _) in zip(windows, windows[1:]):
            if next_start < prev_end:
                raise ValidationError("duty windows overlap")

    def is_on_at(self, timestamp_ms: int) -> bool:
        """True when the appliance's schedule has it drawing power."""
        if not self.duty_schedule:
            return True
        minute = (timestamp_ms // 60_000) % MINUTES_PER_DAY
        return any(start <= minute < end for start, end in self.duty_schedule)


@dataclass(frozen=True)
class MeterReading:
    meter_id: str
    timestamp_ms: int
    v_rms: float
    i_rms: float
    apparent_power: float
    kwh_total: float

    def validate(self) -> None:
        if self.v_rms < 0:
            raise ValidationError(f"v_rms must be >= 0, got {self.v_rms}")
        if not 0 <= self.i_rms <= CURRENT_LIMIT_A:
            raise ValidationError(
                f"i_rms must be in [0, {CURRENT_LIMIT_A}], got {self.i_rms}"
            )
        if self.kwh_total < 0:
            raise ValidationError(f"kwh_total must be >= 0, got {self.kwh_total}")
        expected = self.v_rms * self.i_rms
        if abs(self.apparent_power - expected) > 1e-9 * max(abs(expected), 1e-300):
            raise ValidationError(
                f"apparent_power {self.apparent_power} inconsistent with "
                f"v_rms*i_rms = {expected}"
            )

    def to_dict(self) -> dict:
        return {key: getattr(self, key) for key in READING_KEYS}

    def to_json_line(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_dict(cls, data: dict) -> "MeterReading":
        unknown = set(data) - set(READING_KEYS)
        if unknown:
            raise ValidationError(f"unknown reading keys: {sorted(unknown)}")
        try:
            return cls(
                meter_id=str(data["meter_id"]),
                timestamp_ms=int(data["timestamp_ms"]),
                v_rms=float(data["v_rms"]),
                i_rms=float(data["i_rms"]),
                apparent_power=float(data["apparent_power"]),
                kwh_total=float(data["kwh_total"]),
            )
        except KeyError as exc:
            raise ValidationError(f"missing reading key: {exc.args[0]}") from exc


@dataclass
class MeterState:
    meter_id: str
    profile: ApplianceProfile
    relay_on: bool = True
    accumulator: EnergyAccumulator = field(default_factory=EnergyAccumulator)
    rng: random.Random = field(default_factory=random.Random)


def _meter_rng(seed: int, meter_id: str) -> random.Random:
    # Independent stream per meter so fleet composition changes don't shift noise.
    digest = hashlib.sha256(f"{seed}:{meter_id}".encode()).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


class FleetSimulator:
    """Steps a fleet of meters through simulated time.

    Meters keep insertion order; per-meter noise streams are derived from
    (seed, meter_id) so traces are reproducible and independent of fleet
    composition.
    """

    def __init__(
        self,
        seed: int = 0,
        interval_ms: int = 1000,
        nominal_voltage: float = NOMINAL_VOLTAGE,
        start_ms: int = 0,
    ):
        if interval_ms <= 0:
            raise ConfigError(f"interval_ms must be positive, got {interval_ms}")
        self.seed = seed
        self.interval_ms = interval_ms
        self.nominal_voltage = nominal_voltage
        self.start_ms = start_ms
        self._meters: dict[str, MeterState] = {}
        self._last_step_ms = start_ms

    def add_meter(self, meter_id: str, profile: ApplianceProfile) -> MeterState:
        if meter_id in self._meters:
            raise ValidationError(f"duplicate meter_id {meter_id!r}")
        state = MeterState(
            meter_id=meter_id, profile=profile, rng=_meter_rng(self.seed, meter_id)
        )
        self._meters[meter_id] = state
        return state

    def meter_ids(self) -> list[str]:
        return list(self._meters)

    def relay_state(self, meter_id: str) -> bool:
        return self._state(meter_id).relay_on

    def _state(self, meter_id: str) -> MeterState:
        try:
            return self._meters[meter_id]
        except KeyError:
            raise NotFoundError(f"unknown meter {meter_id!r}") from None

    def set_relay(self, meter_id: str, on: bool) -> bool:
        """Switch a meter's relay; idempotent, returns the new state."""
        state = self._state(meter_id)
        state.relay_on = bool(on)
        return state.relay_on

    def step(self, now_ms: int) -> list[MeterReading]:
        """Sample every meter at ``now_ms`` and advance the accumulators."""
        if now_ms <= self._last_step_ms:
            raise ClockRegressionError(
                f"step time {now_ms} not after previous step {self._last_step_ms}"
            )
        readings = []
        for state in self._meters.values():
            readings.append(self._sample(state, now_ms))
        self._last_step_ms = now_ms
        return readings

    def _sample(self, state: MeterState, now_ms: int) -> MeterReading:
        profile = state.profile
        rng = state.rng
        v = self.nominal_voltage + rng.gauss(0.0, profile.noise_sigma_v)
        v = max(v, 0.0)
        if state.relay_on and profile.is_on_at(now_ms) and v > 0:
            demand_va = profile.rated_power / profile.power_factor
            i = (demand_va / v) * (1.0 + rng.gauss(0.0, profile.noise_sigma_frac_i))
            i = min(max(i, 0.0), CURRENT_LIMIT_A)
        else:
            i = 0.0
        power = apparent_power(v, i)
        state.accumulator = accumulate_energy(state.accumulator, power, now_ms)
        return MeterReading(
            meter_id=state.meter_id,
            timestamp_ms=now_ms,
            v_rms=v,
            i_rms=i,
            apparent_power=power,
            kwh_total=state.accumulator.kwh,
        )

    def run(self, duration_ms: int):
        """Yield reading batches for each interval in (start, start+duration]."""
        steps = duration_ms // self.interval_ms
        now = self._last_step_ms
        for _ in range(steps):
            now += self.interval_ms
            yield self.step(now)


@dataclass(frozen=True)
class Scenario:
    """Parsed simulation scenario file."""

    seed: int
    interval_ms: int
    duration_ms: int
    meters: tuple[tuple[str, ApplianceProfile], ...]
    tariff: str = "state"
    peak_threshold_va: float | None = None

    def build_fleet(self, start_ms: int = 0) -> FleetSimulator:
        fleet = FleetSimulator(
            seed=self.seed, interval_ms=self.interval_ms, start_ms=start_ms
        )
        for meter_id, profile in self.meters:
            fleet.add_meter(meter_id, profile)
        return fleet


_SCENARIO_KEYS = {"seed", "interval_ms", "duration_ms", "meters", "tariff", "peak_threshold_va"}
_METER_KEYS = {"meter_id", "profile"}
_PROFILE_KEYS = {
    "name",
    "rated_power",
    "duty_schedule",
    "power_factor",
    "noise_sigma_v",
    "noise_sigma_frac_i",
}


def _reject_unknown(data: dict, allowed: set, where: str) -> None:
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


def parse_scenario(data: dict) -> Scenario:
    if not isinstance(data, dict):
        raise ConfigError("scenario must be a JSON object")
    _reject_unknown(data, _SCENARIO_KEYS, "scenario")
    try:
        seed = int(data["seed"])
        interval_ms = int(data["interval_ms"])
        duration_ms = int(data["duration_ms"])
        raw_meters = data["meters"]
    except KeyError as exc:
        raise ConfigError(f"scenario missing key: {exc.args[0]}") from exc
    if interval_ms <= 0 or duration_ms < 0:
        raise ConfigError("interval_ms must be > 0 and duration_ms >= 0")
    if not isinstance(raw_meters, list) or not raw_meters:
        raise ConfigError("scenario needs a non-empty meters list")
    meters = []
    seen = set()
    for entry in raw_meters:
        if not isinstance(entry, dict):
            raise ConfigError("each meter entry must be an object")
        _reject_unknown(entry, _METER_KEYS, "meter entry")
        try:
            meter_id = str(entry["meter_id"])
            raw_profile = entry["profile"]
        except KeyError as exc:
            raise ConfigError(f"meter entry missing key: {exc.args[0]}") from exc
        if meter_id in seen:
            raise ConfigError(f"duplicate meter_id {meter_id!r}")
        seen.add(meter_id)
        if not isinstance(raw_profile, dict):
            raise ConfigError("profile must be an object")
        _reject_unknown(raw_profile, _PROFILE_KEYS, f"profile of {meter_id!r}")
        try:
            profile = ApplianceProfile(
                name=str(raw_profile.get("name", meter_id)),
                rated_power=float(raw_profile["rated_power"]),
                duty_schedule=tuple(
                    (int(a), int(b)) for a, b in raw_profile.get("duty_schedule", [])
                ),
                power_factor=float(raw_profile.get("power_factor", 1.0)),
                noise_sigma_v=float(raw_profile.get("noise_sigma_v", 2.0)),
                noise_sigma_frac_i=float(raw_profile.get("noise_sigma_frac_i", 0.01)),
            )
        except KeyError as exc:
            raise ConfigError(f"profile missing key: {exc.args[0]}") from exc
        except ValidationError as exc:
            raise ConfigError(f"invalid profile for {meter_id!r}: {exc}") from exc
        meters.append((meter_id, profile))
    tariff = str(data.get("tariff", "state"))
    threshold = data.get("peak_threshold_va")
    return Scenario(
        seed=seed,
        interval_ms=interval_ms,
        duration_ms=duration_ms,
        meters=tuple(meters),
        tariff=tariff,
        peak_threshold_va=None if threshold is None else float(threshold),
    )


def load_scenario(path: str | Path) -> Scenario:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read scenario file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"scenario is not valid JSON: {exc}") from exc
    return parse_scenario(data)
