import time

import pytest
from fastapi.testclient import TestClient

from watt.metersim import parse_scenario
from watt.server import create_app, current_month_period

from conftest import make_reading

HOUR_MS = 3_600_000


def reading_body(meter_id="m1", timestamp_ms=1_000, i_rms=5.0, kwh_total=0.0):
    return make_reading(
        meter_id=meter_id, timestamp_ms=timestamp_ms, i_rms=i_rms, kwh_total=kwh_total
    ).to_dict()


@pytest.fixture
def client(tmp_path):
    app = create_app(tmp_path / "data", genesis_timestamp_ms=1_700_000_000_000)
    with TestClient(app) as c:
        yield c


def feed_hours(client, meter_id, hours, power_va=1150.0, start_ms=0):
    kwh = 0.0
    for h in range(1, hours + 1):
        ts = start_ms + h * HOUR_MS
        if h > 1:
            kwh += power_va * HOUR_MS / 3.6e9
        body = make_reading(
            meter_id=meter_id,
            timestamp_ms=ts,
            v_rms=230.0,
            i_rms=power_va / 230.0,
            kwh_total=kwh,
        ).to_dict()
        response = client.post("/api/v1/readings", json=body)
        assert response.status_code == 200
    return kwh


class TestReadings:
    def test_submit_then_latest(self, client):
        body = reading_body()
        assert client.post("/api/v1/readings", json=body).json() == {"offset": 0}
        got = client.get("/api/v1/meters/m1/latest").json()
        assert got["reading"]["timestamp_ms"] == 1_000
        assert got["reading"]["store_offset"] == 0

    def test_validation_maps_to_400(self, client):
        body = reading_body()
        body["i_rms"] = 150.0
        body["apparent_power"] = 230.0 * 150.0
        assert client.post("/api/v1/readings", json=body).status_code == 400

    def test_ordering_maps_to_409(self, client):
        client.post("/api/v1/readings", json=reading_body(timestamp_ms=2000))
        response = client.post("/api/v1/readings", json=reading_body(timestamp_ms=1000))
        assert response.status_code == 409

    def test_unknown_meter_404(self, client):
        assert client.get("/api/v1/meters/ghost/latest").status_code == 404

    def test_series_query(self, client):
        client.post("/api/v1/readings", json=reading_body(timestamp_ms=100, i_rms=1.0))
        client.post("/api/v1/readings", json=reading_body(timestamp_ms=200, i_rms=2.0))
        got = client.get(
            "/api/v1/meters/m1/series",
            params={"from": 0, "to": 1000, "step": 1000, "agg": "mean"},
        ).json()
        assert got["timestamps"] == [0]
        assert got["values"][0] == pytest.approx(230.0 * 1.5)

    def test_relay_without_simulator_409(self, client):
        client.post("/api/v1/readings", json=reading_body())
        response = client.post("/api/v1/meters/m1/relay", json={"on": False})
        assert response.status_code == 409


class TestChainEndpoints:
    def test_fresh_chain_verifies(self, client):
        got = client.get("/api/v1/chain/verify").json()
        assert got == {"ok": True, "first_bad_index": None}

    def test_genesis_visible(self, client):
        blocks = client.get("/api/v1/chain/blocks").json()
        assert len(blocks) == 1
        assert blocks[0]["index"] == 0
        assert blocks[0]["prev_hash"] == "00" * 32

    def test_block_by_index_404(self, client):
        assert client.get("/api/v1/chain/blocks/5").status_code == 404

    def test_account_balance_defaults_zero(self, client):
        got = client.get("/api/v1/accounts/nobody").json()
        assert got == {"account": "nobody", "balance_paise": 0}


class TestBillingFlow:
    def run_cycle(self, client, hours=48):
        feed_hours(client, "m1", hours)
        response = client.post(
            "/api/v1/billing/run",
            json={
                "period_start": 0,
                "period_end": hours * HOUR_MS,
                "tariff": "state",
            },
        )
        assert response.status_code == 200
        return response.json()

    def test_billing_then_payment_receipt_matches_chain(self, client, tmp_path):
        result = self.run_cycle(client)
        assert len(result["invoices"]) == 1
        assert result["block_index"] == 1
        invoice = result["invoices"][0]

        # fund the payer, then pay
        state = client.app.state.watt
        state.chain.accounts["m1"] = 10_000_000
        pay = client.post(
            f"/api/v1/invoices/{invoice['invoice_id']}/pay", json={"payer": "m1"}
        )
        assert pay.status_code == 200
        receipt = pay.json()

        block = client.get(f"/api/v1/chain/blocks/{receipt['block_index']}").json()
        assert block["hash"] == receipt["block_hash"]
        tx = next(t for t in block["transactions"] if t["tx_id"] == receipt["tx_id"])
        assert tx["amount_paise"] == invoice["total_paise"]
        assert tx["gas"] == receipt["gas"]
        assert client.get("/api/v1/chain/verify").json()["ok"] is True

    def test_double_pay_conflict(self, client):
        result = self.run_cycle(client)
        invoice = result["invoices"][0]
        client.app.state.watt.chain.accounts["m1"] = 10_000_000
        first = client.post(
            f"/api/v1/invoices/{invoice['invoice_id']}/pay", json={"payer": "m1"}
        )
        assert first.status_code == 200
        second = client.post(
            f"/api/v1/invoices/{invoice['invoice_id']}/pay", json={"payer": "m1"}
        )
        assert second.status_code == 409

    def test_insufficient_balance_402(self, client):
        result = self.run_cycle(client)
        invoice = result["invoices"][0]
        response = client.post(
            f"/api/v1/invoices/{invoice['invoice_id']}/pay", json={"payer": "pauper"}
        )
        assert response.status_code == 402

    def test_open_period_412(self, client):
        feed_hours(client, "m1", 2)
        future = int(time.time() * 1000) + 10 * HOUR_MS
        response = client.post(
            "/api/v1/billing/run",
            json={"period_start": 0, "period_end": future, "tariff": "state"},
        )
        assert response.status_code == 412

    def test_invoice_filtering(self, client):
        result = self.run_cycle(client)
        inv = result["invoices"][0]
        period = f"{inv['period_start_ms']}-{inv['period_end_ms']}"
        listed = client.get(
            "/api/v1/invoices", params={"meter": "m1", "period": period}
        ).json()
        assert [i["invoice_id"] for i in listed] == [inv["invoice_id"]]
        empty = client.get("/api/v1/invoices", params={"meter": "nope"}).json()
        assert empty == []


class TestGoalAndPeaks:
    def test_goal_roundtrip_and_progress(self, client):
        feed_hours(client, "m1", 10)
        now = int(time.time() * 1000)
        put = client.put(
            "/api/v1/meters/m1/goal",
            json={"kwh_target": 100.0, "period_start": 0, "period_end": now + HOUR_MS},
        )
        assert put.status_code == 200
        got = client.get("/api/v1/meters/m1/goal").json()
        assert got["kwh_target"] == 100.0
        progress = client.get("/api/v1/meters/m1/goal/progress").json()
        assert progress["kwh_used"] == pytest.approx(1150 * 9 * HOUR_MS / 3.6e9)
        assert progress["fraction_of_target"] == pytest.approx(
            progress["kwh_used"] / 100.0
        )

    def test_goal_defaults_to_current_month(self, client):
        feed_hours(client, "m1", 2)
        put = client.put("/api/v1/meters/m1/goal", json={"kwh_target": 5.0}).json()
        start, end = current_month_period(int(time.time() * 1000))
        assert put["period_start_ms"] == start
        assert put["period_end_ms"] == end

    def test_goal_for_unknown_meter_404(self, client):
        response = client.put("/api/v1/meters/ghost/goal", json={"kwh_target": 5.0})
        assert response.status_code == 404

    def test_progress_without_goal_404(self, client):
        feed_hours(client, "m1", 2)
        assert client.get("/api/v1/meters/m1/goal/progress").status_code == 404

    def test_peaks(self, client):
        client.post("/api/v1/readings", json=reading_body(timestamp_ms=1_000, i_rms=1.0))
        client.post("/api/v1/readings", json=reading_body(timestamp_ms=61_000, i_rms=50.0))
        client.post("/api/v1/readings", json=reading_body(timestamp_ms=121_000, i_rms=1.0))
        events = client.get("/api/v1/peaks", params={"threshold": 1000.0}).json()
        assert len(events) == 1
        assert events[0]["aggregate_power_va"] == pytest.approx(230.0 * 50.0)


class TestForecastEndpoint:
    def test_rows_and_headers(self, client):
        import numpy as np

        kwh = 0.0
        for h in range(1, 80):
            power = 1000.0 + 500.0 * np.sin(2 * np.pi * h / 24)
            ts = h * HOUR_MS
            kwh += power * HOUR_MS / 3.6e9 if h > 1 else 0.0
            body = make_reading(
                timestamp_ms=ts,
                v_rms=230.0,
                i_rms=power / 230.0,
                kwh_total=kwh,
            ).to_dict()
            client.post("/api/v1/readings", json=body)
        rows = client.get(
            "/api/v1/forecast/m1", params={"horizon_hours": 12}
        ).json()
        assert len(rows) == 12
        assert set(rows[0]) == {"ds", "yhat", "trend", "seasonal", "holiday", "regressor"}

    def test_unknown_meter_404(self, client):
        assert client.get("/api/v1/forecast/ghost").status_code == 404


class TestPersistenceAcrossRestart:
    def test_restart_preserves_state(self, tmp_path):
        data_dir = tmp_path / "data"
        app1 = create_app(data_dir, genesis_timestamp_ms=7)
        with TestClient(app1) as c1:
            feed_hours(c1, "m1", 48)
            c1.app.state.watt.chain.accounts["m1"] = 10_000_000
            run = c1.post(
                "/api/v1/billing/run",
                json={"period_start": 0, "period_end": 48 * HOUR_MS, "tariff": "state"},
            ).json()
            head_before = c1.get("/api/v1/chain/blocks").json()[-1]["hash"]
            latest_before = c1.get("/api/v1/meters/m1/latest").json()

        app2 = create_app(data_dir, genesis_timestamp_ms=7)
        with TestClient(app2) as c2:
            assert c2.get("/api/v1/meters/m1/latest").json() == latest_before
            blocks = c2.get("/api/v1/chain/blocks").json()
            assert blocks[-1]["hash"] == head_before
            assert c2.get("/api/v1/chain/verify").json()["ok"] is True
            invoices = c2.get("/api/v1/invoices").json()
            assert [i["invoice_id"] for i in invoices] == [
                i["invoice_id"] for i in run["invoices"]
            ]


class TestScenarioDefaults:
    def test_peaks_threshold_defaults_from_scenario(self, tmp_path):
        scenario = parse_scenario(
            {
                "seed": 1,
                "interval_ms": 1000,
                "duration_ms": 0,
                "peak_threshold_va": 5000.0,
                "meters": [{"meter_id": "m1", "profile": {"rated_power": 10.0}}],
            }
        )
        app = create_app(tmp_path / "data", scenario=scenario)
        client = TestClient(app)  # no lifespan: fleet thread stays off
        assert client.get("/api/v1/peaks").json() == []

    def test_peaks_threshold_required_without_scenario(self, tmp_path):
        app = create_app(tmp_path / "data")
        client = TestClient(app)
        assert client.get("/api/v1/peaks").status_code == 400


class TestLiveScenario:
    def test_live_fleet_feeds_store_and_relay_works(self, tmp_path):
        scenario = parse_scenario(
            {
                "seed": 3,
                "interval_ms": 100,
                "duration_ms": 0,
                "meters": [
                    {
                        "meter_id": "live1",
                        "profile": {"rated_power": 460.0, "noise_sigma_v": 0.0,
                                    "noise_sigma_frac_i": 0.0},
                    }
                ],
            }
        )
        app = create_app(tmp_path / "data", scenario=scenario)
        with TestClient(app) as client:
            deadline = time.time() + 5.0
            reading = None
            while time.time() < deadline:
                got = client.get("/api/v1/meters/live1/latest").json()
                if got["reading"] is not None:
                    reading = got["reading"]
                    break
                time.sleep(0.05)
            assert reading is not None, "live fleet produced no readings"
            assert reading["i_rms"] == pytest.approx(2.0)

            toggled = client.post("/api/v1/meters/live1/relay", json={"on": False})
            assert toggled.json() == {"meter_id": "live1", "on": False}
            deadline = time.time() + 5.0
            saw_zero = False
            while time.time() < deadline:
                got = client.get("/api/v1/meters/live1/latest").json()["reading"]
                if got and got["i_rms"] == 0.0:
                    saw_zero = True
                    break
                time.sleep(0.05)
            assert saw_zero, "relay off did not drive current to zero"
