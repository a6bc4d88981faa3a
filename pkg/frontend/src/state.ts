// View-model layer: polling loops and UI state machines, kept free of DOM
// so they can be exercised directly in tests (against mocks or a live
// backend). The dashboard never recomputes domain values; it only carries
// API fields to the renderer.

import { ApiClient, ApiError, PaymentReceipt, Invoice, Reading } from "./api.js";

export interface LiveMeterView {
  meterId: string;
  reading: Reading | null;
  readingAgeMs: number | null;
  stale: boolean;
  relayOn: boolean | null;
  offline: boolean;
  history: Reading[]; // last N readings, oldest first
  lastError: string | null;
}

export interface PollerOptions {
  pollMs?: number; // <= 2000 per the live-view contract
  staleMs?: number;
  historySize?: number;
  now?: () => number;
}

export class LiveMeterPoller {
  readonly view: LiveMeterView;
  private pollMs: number;
  private staleMs: number;
  private historySize: number;
  private now: () => number;
  private timer: ReturnType<typeof setInterval> | null = null;
  private listeners: Array<(view: LiveMeterView) => void> = [];
  private inFlight = false;

  constructor(
    private api: ApiClient,
    meterId: string,
    options: PollerOptions = {},
  ) {
    this.pollMs = Math.min(options.pollMs ?? 1000, 2000);
    this.staleMs = options.staleMs ?? 10_000;
    this.historySize = options.historySize ?? 60;
    this.now = options.now ?? (() => Date.now());
    this.view = {
      meterId,
      reading: null,
      readingAgeMs: null,
      stale: false,
      relayOn: null,
      offline: false,
      history: [],
      lastError: null,
    };
  }

  onChange(listener: (view: LiveMeterView) => void): void {
    this.listeners.push(listener);
  }

  private emit(): void {
    for (const listener of this.listeners) listener(this.view);
  }

  start(): void {
    if (this.timer !== null) return;
    void this.pollOnce();
    this.timer = setInterval(() => void this.pollOnce(), this.pollMs);
  }

  stop(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }

  async pollOnce(): Promise<void> {
    if (this.inFlight) return;
    this.inFlight = true;
    try {
      const { reading } = await this.api.latest(this.view.meterId);
      this.view.offline = false;
      if (reading !== null) {
        const head = this.view.history[this.view.history.length - 1];
        if (!head || head.timestamp_ms !== reading.timestamp_ms) {
          this.view.history.push(reading);
          if (this.view.history.length > this.historySize) {
            this.view.history.shift();
          }
        }
        this.view.reading = reading;
        this.view.readingAgeMs = Math.max(0, this.now() - reading.timestamp_ms);
        this.view.stale = this.view.readingAgeMs > this.staleMs;
      }
      try {
        const meters = await this.api.meters();
        const mine = meters.find((m) => m.meter_id === this.view.meterId);
        if (mine && mine.relay_on !== undefined) {
          this.view.relayOn = mine.relay_on;
        }
      } catch {
        // meters listing is best-effort; latest() already proved liveness
      }
    } catch (err) {
      // Keep the last data on screen, flag the connection.
      this.view.offline = true;
      this.view.lastError = err instanceof Error ? err.message : String(err);
    } finally {
      this.inFlight = false;
      this.emit();
    }
  }

  /** Optimistic toggle: flip the UI immediately, revert on failure. */
  async toggleRelay(): Promise<boolean> {
    const previous = this.view.relayOn;
    const wanted = !(previous ?? true);
    this.view.relayOn = wanted;
    this.emit();
    try {
      const ack = await this.api.setRelay(this.view.meterId, wanted);
      this.view.relayOn = ack.on;
      this.view.lastError = null;
      this.emit();
      return ack.on;
    } catch (err) {
      this.view.relayOn = previous;
      this.view.lastError =
        err instanceof Error ? err.message : "relay toggle failed";
      this.emit();
      return previous ?? true;
    }
  }
}

export type PaymentStage = "review" | "submitting" | "confirmed" | "error" | "cancelled";

export interface PaymentFlowState {
  invoice: Invoice;
  stage: PaymentStage;
  receipt: PaymentReceipt | null;
  errorKind: string | null;
  errorDetail: string | null;
}

/** Forward-only payment state machine: review -> submitting -> confirmed. */
export class PaymentFlow {
  readonly state: PaymentFlowState;
  apiCalls = 0;

  constructor(
    private api: ApiClient,
    invoice: Invoice,
  ) {
    this.state = {
      invoice,
      stage: "review",
      receipt: null,
      errorKind: null,
      errorDetail: null,
    };
  }

  /** Leave the review screen without touching the API. */
  cancel(): void {
    if (this.state.stage !== "review") {
      throw new Error(`cannot cancel from stage ${this.state.stage}`);
    }
    this.state.stage = "cancelled";
  }

  async confirm(payerAccount: string): Promise<PaymentFlowState> {
    if (this.state.stage !== "review") {
      throw new Error(`cannot confirm from stage ${this.state.stage}`);
    }
    this.state.stage = "submitting";
    this.apiCalls += 1;
    try {
      const receipt = await this.api.payInvoice(
        this.state.invoice.invoice_id,
        payerAccount,
      );
      this.state.receipt = receipt;
      this.state.stage = "confirmed";
    } catch (err) {
      this.state.stage = "error";
      if (err instanceof ApiError) {
        this.state.errorKind = err.kind;
        this.state.errorDetail = err.message;
      } else {
        this.state.errorKind = "NetworkError";
        this.state.errorDetail = err instanceof Error ? err.message : String(err);
      }
    }
    return this.state;
  }
}

export interface GoalView {
  meterId: string;
  kwhTarget: number | null;
  kwhUsed: number | null;
  fraction: number | null;
  projectedOvershoot: boolean;
  missing: boolean;
}

export async function loadGoalView(
  api: ApiClient,
  meterId: string,
): Promise<GoalView> {
  try {
    const goal = await api.goal(meterId);
    const progress = await api.goalProgress(meterId);
    return {
      meterId,
      kwhTarget: goal.kwh_target,
      kwhUsed: progress.kwh_used,
      fraction: progress.fraction_of_target,
      projectedOvershoot: progress.projected_overshoot,
      missing: false,
    };
  } catch (err) {
    if (err instanceof ApiError && err.status === 404) {
      return {
        meterId,
        kwhTarget: null,
        kwhUsed: null,
        fraction: null,
        projectedOvershoot: false,
        missing: true,
      };
    }
    throw err;
  }
}
