// Integration against a live fixture backend: spawns the Python service
// with an attached simulated fleet and drives the dashboard view-models
// over real HTTP. Covers the dashboard release criteria:
//   1. a newly ingested reading appears in the live view within 2 s;
//   2. a relay toggle drives the displayed current to 0 within one
//      simulator step plus one poll;
//   3. a completed payment's displayed tx id / gas / block hash equal the
//      chain endpoint's record.

import { afterAll, beforeAll, describe, expect, it } from "vitest";
import { spawn, ChildProcess } from "node:child_process";
import { mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { ApiClient } from "../src/api.js";
import { LiveMeterPoller, PaymentFlow } from "../src/state.js";

const PORT = 18_734;
const BASE = `http://127.0.0.1:${PORT}`;
const SIM_INTERVAL_MS = 500;
const METER = "live-a";

let server: ChildProcess | null = null;

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

async function waitFor(
  check: () => Promise<boolean> | boolean,
  timeoutMs: number,
  label: string,
): Promise<number> {
  const started = Date.now();
  while (Date.now() - started < timeoutMs) {
    try {
      if (await check()) return Date.now() - started;
    } catch {
      // keep waiting
    }
    await sleep(50);
  }
  throw new Error(`timed out after ${timeoutMs}ms waiting for ${label}`);
}

beforeAll(async () => {
  const dir = mkdtempSync(join(tmpdir(), "watt-dash-"));
  const scenarioPath = join(dir, "scenario.json");
  writeFileSync(
    scenarioPath,
    JSON.stringify({
      seed: 42,
      interval_ms: SIM_INTERVAL_MS,
      duration_ms: 0,
      meters: [
        {
          meter_id: METER,
          profile: {
            rated_power: 460.0,
            noise_sigma_v: 0.0,
            noise_sigma_frac_i: 0.0,
          },
        },
      ],
    }),
  );
  server = spawn(
    "python3",
    [
      "-m",
      "watt.cli",
      "serve",
      "--data-dir",
      join(dir, "data"),
      "--scenario",
      scenarioPath,
      "--port",
      String(PORT),
      "--opening-balance",
      "100000000",
    ],
    { stdio: "ignore" },
  );
  const api = new ApiClient(BASE);
  await waitFor(
    async () => (await api.chainVerify()).ok,
    15_000,
    "backend to come up",
  );
}, 30_000);

afterAll(() => {
  server?.kill("SIGTERM");
});

describe("live dashboard against the fixture backend", () => {
  it(
    "shows a newly ingested reading within 2 seconds",
    async () => {
      const api = new ApiClient(BASE);
      const poller = new LiveMeterPoller(api, METER, { pollMs: 500 });
      poller.start();
      try {
        await waitFor(
          () => poller.view.reading !== null,
          10_000,
          "first reading in the view",
        );
        const seen = poller.view.reading!.timestamp_ms;
        // The fleet emits every 500 ms; a strictly newer reading must be
        // on screen within the 2 s bound.
        await sleep(2_000);
        expect(poller.view.reading!.timestamp_ms).toBeGreaterThan(seen);
        expect(poller.view.offline).toBe(false);
        expect(poller.view.reading!.i_rms).toBeCloseTo(2.0, 5);
      } finally {
        poller.stop();
      }
    },
    30_000,
  );

  it(
    "relay toggle drives displayed current to zero within a step plus a poll",
    async () => {
      const api = new ApiClient(BASE);
      const poller = new LiveMeterPoller(api, METER, { pollMs: 500 });
      poller.start();
      try {
        await waitFor(
          () => poller.view.reading !== null && poller.view.reading.i_rms > 0,
          10_000,
          "a live reading with current flowing",
        );
        const ackOn = await poller.toggleRelay();
        expect(ackOn).toBe(false);
        expect(poller.view.relayOn).toBe(false);
        // one simulator step (500 ms) + one poll (500 ms), with margin
        const tookMs = await waitFor(
          () => poller.view.reading!.i_rms === 0,
          5_000,
          "displayed current to reach zero",
        );
        expect(tookMs).toBeLessThanOrEqual(3_000);
      } finally {
        await poller.toggleRelay(); // restore for later tests
        poller.stop();
      }
    },
    30_000,
  );

  it(
    "payment receipt matches the chain endpoint's record",
    async () => {
      const api = new ApiClient(BASE);
      // let some consumption accumulate, then bill a just-closed period
      await sleep(1_500);
      const periodEnd = Date.now() - 100;
      const run = await api.runBilling(periodEnd - 3_600_000, periodEnd, "state");
      expect(run.invoices.length).toBe(1);
      const invoice = run.invoices[0];

      const flow = new PaymentFlow(api, invoice);
      await flow.confirm(METER);
      expect(flow.state.stage).toBe("confirmed");
      const receipt = flow.state.receipt!;

      const block = await api.block(receipt.block_index);
      expect(block.hash).toBe(receipt.block_hash);
      const tx = block.transactions.find((t) => t.tx_id === receipt.tx_id);
      expect(tx).toBeDefined();
      expect(tx!.gas).toBe(receipt.gas);
      expect(tx!.amount_paise).toBe(invoice.total_paise);
      expect(tx!.from_account).toBe(METER);

      const verify = await api.chainVerify();
      expect(verify.ok).toBe(true);

      // paying again must surface the conflict
      const again = new PaymentFlow(api, invoice);
      await again.confirm(METER);
      expect(again.state.stage).toBe("error");
      expect(again.state.errorKind).toBe("ConflictError");
    },
    30_000,
  );
});
