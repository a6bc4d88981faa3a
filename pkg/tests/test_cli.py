import json
from pathlib import Path

import pytest

from watt.billing import STATE_TARIFF, compute_invoice
from watt.cli import main
from watt.ingest import TelemetryStore
from watt.ledger import Chain, make_transaction

from conftest import make_reading

HOUR_MS = 3_600_000


def write_scenario(path: Path, seed=5, interval_ms=60_000, duration_ms=3_600_000):
    scenario = {
        "seed": seed,
        "interval_ms": interval_ms,
        "duration_ms": duration_ms,
        "meters": [
            {"meter_id": "m1", "profile": {"rated_power": 500.0}},
            {"meter_id": "m2", "profile": {"rated_power": 1500.0,
                                           "duty_schedule": [[0, 720]]}},
        ],
    }
    path.write_text(json.dumps(scenario))
    return scenario


class TestSimulate:
    def test_writes_expected_line_count(self, tmp_path):
        scenario_file = tmp_path / "scenario.json"
        write_scenario(scenario_file)
        out = tmp_path / "readings.ndjson"
        assert main(["simulate", str(scenario_file), "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert len(lines) == 60 * 2  # duration/interval steps x meters
        record = json.loads(lines[0])
        assert list(record) == [
            "meter_id",
            "timestamp_ms",
            "v_rms",
            "i_rms",
            "apparent_power",
            "kwh_total",
        ]

    def test_malformed_scenario_exits_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        out = tmp_path / "x.ndjson"
        assert main(["simulate", str(bad), "--out", str(out)]) == 2
        assert "error" in capsys.readouterr().err

    def test_unknown_scenario_key_exits_2(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"seed": 1, "interval_ms": 1, "duration_ms": 1,
                                   "meters": [], "extra": True}))
        assert main(["simulate", str(bad), "--out", str(tmp_path / "x")]) == 2

    def test_same_seed_byte_identical(self, tmp_path):
        scenario_file = tmp_path / "scenario.json"
        write_scenario(scenario_file)
        out1, out2 = tmp_path / "a.ndjson", tmp_path / "b.ndjson"
        main(["simulate", str(scenario_file), "--out", str(out1)])
        main(["simulate", str(scenario_file), "--out", str(out2)])
        assert out1.read_bytes() == out2.read_bytes()

    def test_data_dir_sink_builds_store(self, tmp_path):
        scenario_file = tmp_path / "scenario.json"
        write_scenario(scenario_file)
        data = tmp_path / "data"
        assert main(["simulate", str(scenario_file), "--data-dir", str(data)]) == 0
        store = TelemetryStore(data)
        assert store.meters() == ["m1", "m2"]
        assert store.latest("m1") is not None


def build_fixture_store(data_dir: Path, hours=48, power_va=2300.0):
    store = TelemetryStore(data_dir)
    kwh = 0.0
    for h in range(1, hours + 1):
        ts = h * HOUR_MS
        if h > 1:
            kwh += power_va * HOUR_MS / 3.6e9
        store.submit_reading(
            make_reading(
                timestamp_ms=ts, v_rms=230.0, i_rms=power_va / 230.0, kwh_total=kwh
            )
        )
    return store


class TestBill:
    def test_bill_matches_compute_invoice_oracle(self, tmp_path, capsys):
        data = tmp_path / "data"
        build_fixture_store(data)
        code = main(
            [
                "bill",
                "--data-dir",
                str(data),
                "--period-start",
                "0",
                "--period-end",
                str(48 * HOUR_MS),
                "--format",
                "json",
            ]
        )
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        (invoice,) = payload["invoices"]
        expected_kwh = 2300.0 * 47 * HOUR_MS / 3.6e9
        oracle = compute_invoice(expected_kwh, STATE_TARIFF, "m1", 0, 48 * HOUR_MS)
        assert invoice["total_paise"] == oracle.total_paise
        assert invoice["kwh_billed"] == pytest.approx(oracle.kwh_billed, rel=1e-12)
        assert payload["block_index"] == 1

    def test_bill_without_store_exits_2(self, tmp_path):
        assert (
            main(
                [
                    "bill",
                    "--data-dir",
                    str(tmp_path / "void"),
                    "--period-start",
                    "0",
                    "--period-end",
                    "1000",
                ]
            )
            == 2
        )

    def test_bill_stdout_stable_across_runs(self, tmp_path, capsys):
        data = tmp_path / "data"
        build_fixture_store(data)
        args = [
            "bill",
            "--data-dir",
            str(data),
            "--period-start",
            "0",
            "--period-end",
            str(48 * HOUR_MS),
        ]
        main(args)
        first = capsys.readouterr().out
        main(args)  # idempotent rerun
        second = capsys.readouterr().out
        assert first.splitlines()[:-1] == second.splitlines()[:-1]
        assert "committed block 1" in first
        assert "no new invoices" in second


class TestLedgerCommand:
    def seed_chain(self, data_dir: Path):
        chain = Chain(
            genesis_timestamp_ms=0,
            initial_balances={"a": 100_000},
            path=data_dir / "chain.ndjson",
        )
        chain.add_block([make_transaction("a", "b", 10, b"x", 1)], timestamp_ms=1)
        return chain

    def test_verify_ok(self, tmp_path, capsys):
        data = tmp_path / "data"
        data.mkdir()
        self.seed_chain(data)
        assert main(["ledger", "verify", "--data-dir", str(data)]) == 0
        assert capsys.readouterr().out.strip() == "ok"

    def test_verify_tampered_exits_1(self, tmp_path, capsys):
        data = tmp_path / "data"
        data.mkdir()
        self.seed_chain(data)
        path = data / "chain.ndjson"
        raw = bytearray(path.read_bytes())
        raw[len(raw) // 2] ^= 0x01
        path.write_bytes(bytes(raw))
        assert main(["ledger", "verify", "--data-dir", str(data)]) == 1
        assert "first_bad_index=" in capsys.readouterr().out

    def test_show_json_golden_stable(self, tmp_path, capsys):
        data = tmp_path / "data"
        data.mkdir()
        self.seed_chain(data)
        main(["ledger", "show", "--data-dir", str(data), "--format", "json"])
        first = capsys.readouterr().out
        main(["ledger", "show", "--data-dir", str(data), "--format", "json"])
        second = capsys.readouterr().out
        assert first == second
        lines = first.splitlines()
        assert len(lines) == 2
        assert json.loads(lines[0])["index"] == 0

    def test_missing_chain_exits_2(self, tmp_path):
        assert main(["ledger", "verify", "--data-dir", str(tmp_path)]) == 2

    def test_show_matches_committed_golden_file(self, tmp_path, capsys):
        # Rebuild the fixture chain from scratch; stdout must match the
        # golden file byte for byte on any platform.
        data = tmp_path / "data"
        data.mkdir()
        chain = Chain(
            genesis_timestamp_ms=1_700_000_000_000,
            initial_balances={"consumer-1": 1_000_000},
            path=data / "chain.ndjson",
        )
        chain.add_block(
            [
                make_transaction(
                    "consumer-1",
                    "utility",
                    60_900,
                    b"invoice-fixture",
                    1_700_000_100_000,
                )
            ],
            timestamp_ms=1_700_000_100_000,
        )
        chain.add_block(
            [make_transaction("consumer-1", "utility", 0, b"", 1_700_000_200_000)],
            timestamp_ms=1_700_000_200_000,
        )
        assert main(["ledger", "show", "--data-dir", str(data), "--format", "json"]) == 0
        golden = (Path(__file__).parent / "golden" / "ledger_show.ndjson").read_text()
        assert capsys.readouterr().out == golden


class TestForecastCommand:
    def test_horizon_zero_prints_header_only(self, tmp_path, capsys):
        data = tmp_path / "data"
        build_fixture_store(data, hours=30)
        code = main(
            [
                "forecast",
                "--data-dir",
                str(data),
                "--meter",
                "m1",
                "--horizon-hours",
                "0",
            ]
        )
        assert code == 0
        out = capsys.readouterr().out
        assert out == "ds,yhat,trend,seasonal,holiday,regressor\n"

    def test_forecast_rows(self, tmp_path, capsys):
        data = tmp_path / "data"
        build_fixture_store(data, hours=80)
        code = main(
            [
                "forecast",
                "--data-dir",
                str(data),
                "--meter",
                "m1",
                "--horizon-hours",
                "6",
            ]
        )
        assert code == 0
        lines = capsys.readouterr().out.splitlines()
        assert len(lines) == 7
        assert lines[0] == "ds,yhat,trend,seasonal,holiday,regressor"

    def test_unknown_meter_exits_2(self, tmp_path):
        data = tmp_path / "data"
        build_fixture_store(data, hours=10)
        assert (
            main(["forecast", "--data-dir", str(data), "--meter", "ghost"]) == 2
        )


class TestExportCommand:
    def test_csv(self, tmp_path, capsys):
        data = tmp_path / "data"
        build_fixture_store(data, hours=3)
        assert main(["export", "--data-dir", str(data), "--meter", "m1"]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "ds,y"
        assert len(lines) == 4

    def test_json_kwh(self, tmp_path, capsys):
        data = tmp_path / "data"
        build_fixture_store(data, hours=3)
        assert (
            main(
                [
                    "export",
                    "--data-dir",
                    str(data),
                    "--meter",
                    "m1",
                    "--field",
                    "kwh_total",
                    "--format",
                    "json",
                ]
            )
            == 0
        )
        payload = json.loads(capsys.readouterr().out)
        assert len(payload["timestamps"]) == 3
        assert payload["values"][0] == 0.0
