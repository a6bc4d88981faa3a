"""Operator command line: simulate, serve, bill, ledger, forecast, export.

Exit codes: 0 success, 1 domain failure (e.g. chain verification failed),
2 usage or configuration error. WATT_DATA_DIR and WATT_PORT provide the
defaults for --data-dir and --port.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .billing import BillingEngine, tariff_by_name
from .errors import ConfigError, WattError
from .ingest import SeriesQuery, TelemetryStore
from .ledger import Chain, verify_chain_file
from .metersim import load_scenario
from .series import TimeSeries

DEFAULT_DATA_DIR = os.environ.get("WATT_DATA_DIR", "watt-data")
DEFAULT_PORT = int(os.environ.get("WATT_PORT", "8000"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="watt",
        description="Smart-meter fleet simulation, billing ledger and forecasting.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run a scenario and emit readings")
    p_sim.add_argument("scenario", help="scenario JSON file")
    sink = p_sim.add_mutually_exclusive_group(required=True)
    sink.add_argument("--out", help="write NDJSON readings to this file")
    sink.add_argument("--url", help="POST readings to a running service")
    sink.add_argument("--data-dir", help="submit readings into a local store")

    p_serve = sub.add_parser("serve", help="serve the HTTP API")
    p_serve.add_argument("--data-dir", default=DEFAULT_DATA_DIR)
    p_serve.add_argument("--port", type=int, default=DEFAULT_PORT)
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--scenario", help="attach a live simulated fleet")
    p_serve.add_argument("--static-dir", help="serve a dashboard build from here")
    p_serve.add_argument("--genesis-ts", type=int, default=0)
    p_serve.add_argument(
        "--opening-balance",
        type=int,
        default=1_000_000,
        help="opening paise per scenario meter account",
    )
    p_serve.add_argument("--tariffs", help="tariff config JSON")

    p_bill = sub.add_parser("bill", help="run a billing cycle for a closed period")
    p_bill.add_argument("--data-dir", default=DEFAULT_DATA_DIR)
    p_bill.add_argument("--period-start", type=int, required=True)
    p_bill.add_argument("--period-end", type=int, required=True)
    p_bill.add_argument("--tariff", default="state")
    p_bill.add_argument("--tariffs", help="tariff config JSON")
    p_bill.add_argument(
        "--at", type=int, help="clock for the period-closed check (default: period end)"
    )
    p_bill.add_argument("--format", choices=("text", "json"), default="text")

    p_ledger = sub.add_parser("ledger", help="inspect or verify the chain")
    p_ledger.add_argument("action", choices=("verify", "show"))
    p_ledger.add_argument("--data-dir", default=DEFAULT_DATA_DIR)
    p_ledger.add_argument("--chain-file", help="explicit chain NDJSON path")
    p_ledger.add_argument("--format", choices=("text", "json"), default="text")

    p_fc = sub.add_parser("forecast", help="fit and print a consumption forecast")
    p_fc.add_argument("--data-dir", default=DEFAULT_DATA_DIR)
    p_fc.add_argument("--meter", required=True)
    p_fc.add_argument("--horizon-hours", type=float, default=24.0)
    p_fc.add_argument("--step-ms", type=int, default=3_600_000)

    p_exp = sub.add_parser("export", help="dump a meter's stored series")
    p_exp.add_argument("--data-dir", default=DEFAULT_DATA_DIR)
    p_exp.add_argument("--meter", required=True)
    p_exp.add_argument(
        "--field",
        default="apparent_power",
        choices=("apparent_power", "kwh_total", "v_rms", "i_rms"),
    )
    p_exp.add_argument("--format", choices=("csv", "json"), default="csv")
    return parser


def cmd_simulate(args) -> int:
    scenario = load_scenario(args.scenario)
    fleet = scenario.build_fleet()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            for batch in fleet.run(scenario.duration_ms):
                for reading in batch:
                    fh.write(reading.to_json_line() + "\n")
    elif args.data_dir:
        store = TelemetryStore(args.data_dir)
        for batch in fleet.run(scenario.duration_ms):
            for reading in batch:
                store.submit_reading(reading)
    else:
        import requests

        session = requests.Session()
        endpoint = args.url.rstrip("/") + "/api/v1/readings"
        for batch in fleet.run(scenario.duration_ms):
            for reading in batch:
                response = session.post(endpoint, json=reading.to_dict(), timeout=30)
                response.raise_for_status()
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .server import create_app

    scenario = load_scenario(args.scenario) if args.scenario else None
    static_dir = args.static_dir
    if static_dir is None and Path("frontend/dist").is_dir():
        static_dir = "frontend/dist"
    app = create_app(
        args.data_dir,
        scenario=scenario,
        genesis_timestamp_ms=args.genesis_ts,
        opening_balance_paise=args.opening_balance,
        tariff_config=args.tariffs,
        static_dir=static_dir,
    )
    try:
        uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    except SystemExit as exc:  # uvicorn exits nonzero when the port is busy
        return 1 if exc.code else 0
    return 0


def _open_engine(data_dir: str) -> BillingEngine:
    data_path = Path(data_dir)
    if not (data_path / "readings").is_dir():
        raise ConfigError(f"no service store under {data_dir!r} (run simulate/serve first)")
    store = TelemetryStore(data_path)
    chain = Chain(path=data_path / "chain.ndjson")
    return BillingEngine(store, chain, data_dir=data_path)


def cmd_bill(args) -> int:
    engine = _open_engine(args.data_dir)
    tariff = tariff_by_name(args.tariff, args.tariffs)
    now_ms = args.at if args.at is not None else args.period_end
    invoices, block = engine.run_billing_cycle(
        args.period_start, args.period_end, tariff, now_ms=now_ms
    )
    if args.format == "json":
        print(
            json.dumps(
                {
                    "invoices": [inv.to_dict() for inv in invoices],
                    "block_index": block.index if block is not None else None,
                },
                sort_keys=True,
            )
        )
        return 0
    for inv in invoices:
        print(
            f"invoice {inv.invoice_id} meter={inv.meter_id} "
            f"kwh={inv.kwh_billed:.6f} total_paise={inv.total_paise} "
            f"status={inv.status}"
        )
        for head, amount in inv.lines:
            print(f"  {head}: {amount}")
    if block is not None:
        print(f"committed block {block.index} ({block.hash.hex()})")
    else:
        print("no new invoices (period already billed)")
    return 0


def cmd_ledger(args) -> int:
    chain_file = Path(args.chain_file or Path(args.data_dir) / "chain.ndjson")
    if not chain_file.exists():
        raise ConfigError(f"chain file not found: {chain_file}")
    if args.action == "verify":
        result = verify_chain_file(chain_file)
        if result.ok:
            print("ok")
            return 0
        print(f"first_bad_index={result.first_bad_index}")
        return 1
    from .ledger import load_chain_file

    blocks = load_chain_file(chain_file)
    if args.format == "json":
        for block in blocks:
            print(block.to_json_line())
    else:
        for block in blocks:
            print(
                f"block {block.index} ts={block.timestamp_ms} "
                f"txs={len(block.transactions)} gas={block.gas_total} "
                f"hash={block.hash.hex()}"
            )
    return 0


def cmd_forecast(args) -> int:
    from .server import forecast_for_meter

    data_path = Path(args.data_dir)
    if not (data_path / "readings").is_dir():
        raise ConfigError(f"no service store under {args.data_dir!r}")
    store = TelemetryStore(data_path)
    if args.meter not in store.meters():
        raise ConfigError(f"unknown meter {args.meter!r}")
    sys.stdout.write(",".join(("ds", "yhat", "trend", "seasonal", "holiday", "regressor")) + "\n")
    if args.horizon_hours > 0:
        rows = forecast_for_meter(store, args.meter, args.horizon_hours, args.step_ms)
        for row in rows:
            sys.stdout.write(
                ",".join(
                    [row["ds"]]
                    + [
                        repr(row[c])
                        for c in ("yhat", "trend", "seasonal", "holiday", "regressor")
                    ]
                )
                + "\n"
            )
    return 0


def cmd_export(args) -> int:
    from .forecast.io import ms_to_iso

    data_path = Path(args.data_dir)
    if not (data_path / "readings").is_dir():
        raise ConfigError(f"no service store under {args.data_dir!r}")
    store = TelemetryStore(data_path)
    if args.meter not in store.meters():
        raise ConfigError(f"unknown meter {args.meter!r}")
    latest = store.latest(args.meter)
    if latest is None:
        series = TimeSeries([], [])
    else:
        series = store.query_series(
            SeriesQuery(
                meter_id=args.meter,
                from_ms=0,
                to_ms=latest.timestamp_ms + 1,
                field=args.field,
            )
        )
    if args.format == "json":
        print(
            json.dumps(
                {"timestamps": series.timestamps, "values": series.values},
                sort_keys=True,
            )
        )
    else:
        print("ds,y")
        for ts, value in zip(series.timestamps, series.values):
            print(f"{ms_to_iso(ts)},{'' if value is None else repr(value)}")
    return 0


_COMMANDS = {
    "simulate": cmd_simulate,
    "serve": cmd_serve,
    "bill": cmd_bill,
    "ledger": cmd_ledger,
    "forecast": cmd_forecast,
    "export": cmd_export,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except WattError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
