import pytest

from watt.ingest import TelemetryStore
from watt.ledger import Chain
from watt.metersim import ApplianceProfile, FleetSimulator, MeterReading


def make_reading(
    meter_id="m1",
    timestamp_ms=1_000,
    v_rms=230.0,
    i_rms=5.0,
    kwh_total=0.0,
    apparent_power=None,
):
    return MeterReading(
        meter_id=meter_id,
        timestamp_ms=timestamp_ms,
        v_rms=v_rms,
        i_rms=i_rms,
        apparent_power=v_rms * i_rms if apparent_power is None else apparent_power,
        kwh_total=kwh_total,
    )


@pytest.fixture
def store():
    return TelemetryStore()


@pytest.fixture
def quiet_profile():
    # No noise: deterministic readings at exactly the rated draw.
    return ApplianceProfile(
        name="bulb",
        rated_power=920.0,
        power_factor=1.0,
        noise_sigma_v=0.0,
        noise_sigma_frac_i=0.0,
    )


@pytest.fixture
def fleet(quiet_profile):
    sim = FleetSimulator(seed=11, interval_ms=1000)
    sim.add_meter("m1", quiet_profile)
    return sim


@pytest.fixture
def chain(tmp_path):
    return Chain(
        genesis_timestamp_ms=1_700_000_000_000,
        initial_balances={"alice": 500_000, "bob": 100_000},
        path=tmp_path / "chain.ndjson",
    )
