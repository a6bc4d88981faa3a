// DOM wiring: composes the API client, pollers and renderers into the
// single-page dashboard. All domain data flows through api.ts untouched.

import { ApiClient, Invoice } from "./api.js";
import {
  LiveMeterPoller,
  PaymentFlow,
  loadGoalView,
} from "./state.js";
import {
  forecastChartSvg,
  goalBarHtml,
  invoiceRowHtml,
  meterCardHtml,
  paymentPanelHtml,
  HistoryPoint,
} from "./render.js";

const api = new ApiClient("");
const pollers = new Map<string, LiveMeterPoller>();
let activeFlow: PaymentFlow | null = null;
let invoiceCache: Invoice[] = [];

function el(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node;
}

function renderMeters(): void {
  const host = el("meters");
  host.innerHTML = [...pollers.values()]
    .map((p) => meterCardHtml(p.view))
    .join("");
  host.querySelectorAll<HTMLButtonElement>("button.relay").forEach((button) => {
    button.onclick = () => {
      const meterId = button.dataset.meter!;
      void pollers.get(meterId)?.toggleRelay();
    };
  });
}

async function refreshMeterList(): Promise<void> {
  try {
    const meters = await api.meters();
    for (const meter of meters) {
      if (!pollers.has(meter.meter_id)) {
        const poller = new LiveMeterPoller(api, meter.meter_id, { pollMs: 1000 });
        poller.onChange(renderMeters);
        poller.start();
        pollers.set(meter.meter_id, poller);
      }
    }
    const select = el("goal-meter") as HTMLSelectElement;
    const current = select.value;
    select.innerHTML = meters
      .map((m) => `<option value="${m.meter_id}">${m.meter_id}</option>`)
      .join("");
    if (current) select.value = current;
  } catch {
    // meter list refresh is retried on the next tick
  }
}

function renderPayment(): void {
  el("payment").innerHTML = activeFlow ? paymentPanelHtml(activeFlow.state) : "";
  if (!activeFlow) return;
  const host = el("payment");
  const confirmButton = host.querySelector<HTMLButtonElement>("button.confirm");
  if (confirmButton) {
    confirmButton.onclick = () => {
      const payer = (el("payer") as HTMLInputElement).value.trim();
      if (!payer || !activeFlow) return;
      void activeFlow.confirm(payer).then(() => {
        renderPayment();
        void refreshInvoices();
      });
      renderPayment();
    };
  }
  const cancelButton = host.querySelector<HTMLButtonElement>("button.cancel");
  if (cancelButton) {
    cancelButton.onclick = () => {
      activeFlow?.cancel();
      activeFlow = null;
      renderPayment();
    };
  }
}

async function refreshInvoices(): Promise<void> {
  try {
    invoiceCache = await api.invoices();
  } catch {
    return;
  }
  const body = el("invoice-rows");
  body.innerHTML = invoiceCache.map(invoiceRowHtml).join("");
  body.querySelectorAll<HTMLButtonElement>("button.pay").forEach((button) => {
    button.onclick = () => {
      const invoice = invoiceCache.find(
        (i) => i.invoice_id === button.dataset.invoice,
      );
      if (invoice) {
        activeFlow = new PaymentFlow(api, invoice);
        renderPayment();
      }
    };
  });
}

async function refreshGoal(): Promise<void> {
  const select = el("goal-meter") as HTMLSelectElement;
  if (!select.value) return;
  const view = await loadGoalView(api, select.value);
  el("goal-view").innerHTML = goalBarHtml(view);
}

async function refreshForecast(): Promise<void> {
  const select = el("goal-meter") as HTMLSelectElement;
  const meterId = select.value;
  if (!meterId) return;
  try {
    const latest = await api.latest(meterId);
    if (!latest.reading) return;
    const to = latest.reading.timestamp_ms + 1;
    const from = to - 24 * 3_600_000;
    const series = await api.series(meterId, Math.max(0, from), to, 3_600_000);
    const history: HistoryPoint[] = [];
    series.timestamps.forEach((ts, i) => {
      const v = series.values[i];
      if (v !== null) history.push({ timestamp_ms: ts, value: v });
    });
    const rows = await api.forecast(meterId, 24);
    el("forecast").innerHTML = forecastChartSvg(history, rows);
  } catch (err) {
    el("forecast").textContent =
      err instanceof Error ? err.message : "forecast unavailable";
  }
}

function bindControls(): void {
  (el("goal-set") as HTMLButtonElement).onclick = () => {
    const select = el("goal-meter") as HTMLSelectElement;
    const target = parseFloat((el("goal-target") as HTMLInputElement).value);
    if (!select.value || !(target > 0)) return;
    void api.setGoal(select.value, target).then(refreshGoal);
  };
  (el("billing-run") as HTMLButtonElement).onclick = () => {
    const end = Date.now();
    const start = end - 30 * 86_400_000;
    void api
      .runBilling(start, end, (el("tariff") as HTMLSelectElement).value)
      .then(refreshInvoices);
  };
  (el("goal-meter") as HTMLSelectElement).onchange = () => {
    void refreshGoal();
    void refreshForecast();
  };
}

function boot(): void {
  bindControls();
  void refreshMeterList();
  void refreshInvoices();
  setInterval(() => void refreshMeterList(), 5000);
  setInterval(() => void refreshInvoices(), 5000);
  setInterval(() => void refreshGoal(), 5000);
  setInterval(() => void refreshForecast(), 60_000);
}

boot();
