// Typed client for the watt HTTP+JSON API. Every number the dashboard
// displays comes out of these responses verbatim.

export interface Reading {
  meter_id: string;
  timestamp_ms: number;
  v_rms: number;
  i_rms: number;
  apparent_power: number;
  kwh_total: number;
  store_offset?: number;
}

export interface MeterInfo {
  meter_id: string;
  relay_on?: boolean;
}

export interface SeriesResponse {
  timestamps: number[];
  values: (number | null)[];
}

export interface InvoiceLine extends Array<string | number> {
  0: string;
  1: number;
}

export interface Invoice {
  invoice_id: string;
  meter_id: string;
  period_start_ms: number;
  period_end_ms: number;
  kwh_billed: number;
  lines: InvoiceLine[];
  total_paise: number;
  status: "issued" | "paid";
  payment_tx: string | null;
}

export interface PaymentReceipt {
  invoice_id: string;
  tx_id: string;
  gas: number;
  block_index: number;
  block_hash: string;
}

export interface ChainTransaction {
  tx_id: string;
  from_account: string;
  to_account: string;
  amount_paise: number;
  gas: number;
  payload_hash: string;
  timestamp_ms: number;
}

export interface Block {
  index: number;
  timestamp_ms: number;
  prev_hash: string;
  hash: string;
  gas_total: number;
  transactions: ChainTransaction[];
}

export interface Goal {
  meter_id: string;
  period_start_ms: number;
  period_end_ms: number;
  kwh_target: number;
}

export interface GoalProgress {
  meter_id: string;
  kwh_used: number;
  fraction_of_target: number;
  projected_overshoot: boolean;
}

export interface ForecastRow {
  ds: string;
  yhat: number;
  trend: number;
  seasonal: number;
  holiday: number;
  regressor: number;
}

export interface AccountBalance {
  account: string;
  balance_paise: number;
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public kind: string,
    detail: string,
  ) {
    super(detail);
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private base: string = "",
    private fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchImpl(this.base + path, init);
    if (!response.ok) {
      let kind = "HttpError";
      let detail = `${response.status}`;
      try {
        const body = (await response.json()) as { error?: string; detail?: string };
        kind = body.error ?? kind;
        detail = body.detail ?? detail;
      } catch {
        // non-JSON error body; keep defaults
      }
      throw new ApiError(response.status, kind, detail);
    }
    return (await response.json()) as T;
  }

  private post<T>(path: string, body: unknown, method = "POST"): Promise<T> {
    return this.request<T>(path, {
      method,
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  meters(): Promise<MeterInfo[]> {
    return this.request("/api/v1/meters");
  }

  latest(meterId: string): Promise<{ meter_id: string; reading: Reading | null }> {
    return this.request(`/api/v1/meters/${encodeURIComponent(meterId)}/latest`);
  }

  series(
    meterId: string,
    fromMs: number,
    toMs: number,
    stepMs?: number,
    field?: string,
  ): Promise<SeriesResponse> {
    const params = new URLSearchParams({ from: String(fromMs), to: String(toMs) });
    if (stepMs !== undefined) params.set("step", String(stepMs));
    if (field !== undefined) params.set("field", field);
    return this.request(
      `/api/v1/meters/${encodeURIComponent(meterId)}/series?${params}`,
    );
  }

  setRelay(meterId: string, on: boolean): Promise<{ meter_id: string; on: boolean }> {
    return this.post(`/api/v1/meters/${encodeURIComponent(meterId)}/relay`, { on });
  }

  invoices(meterId?: string): Promise<Invoice[]> {
    const query = meterId ? `?meter=${encodeURIComponent(meterId)}` : "";
    return this.request(`/api/v1/invoices${query}`);
  }

  runBilling(periodStartMs: number, periodEndMs: number, tariff: string): Promise<{
    invoices: Invoice[];
    block_index: number | null;
  }> {
    return this.post("/api/v1/billing/run", {
      period_start: periodStartMs,
      period_end: periodEndMs,
      tariff,
    });
  }

  payInvoice(invoiceId: string, payer: string): Promise<PaymentReceipt> {
    return this.post(`/api/v1/invoices/${encodeURIComponent(invoiceId)}/pay`, {
      payer,
    });
  }

  block(index: number): Promise<Block> {
    return this.request(`/api/v1/chain/blocks/${index}`);
  }

  chainVerify(): Promise<{ ok: boolean; first_bad_index: number | null }> {
    return this.request("/api/v1/chain/verify");
  }

  balance(account: string): Promise<AccountBalance> {
    return this.request(`/api/v1/accounts/${encodeURIComponent(account)}`);
  }

  setGoal(meterId: string, kwhTarget: number): Promise<Goal> {
    return this.post(
      `/api/v1/meters/${encodeURIComponent(meterId)}/goal`,
      { kwh_target: kwhTarget },
      "PUT",
    );
  }

  goal(meterId: string): Promise<Goal> {
    return this.request(`/api/v1/meters/${encodeURIComponent(meterId)}/goal`);
  }

  goalProgress(meterId: string): Promise<GoalProgress> {
    return this.request(
      `/api/v1/meters/${encodeURIComponent(meterId)}/goal/progress`,
    );
  }

  forecast(meterId: string, horizonHours: number): Promise<ForecastRow[]> {
    return this.request(
      `/api/v1/forecast/${encodeURIComponent(meterId)}?horizon_hours=${horizonHours}`,
    );
  }
}
