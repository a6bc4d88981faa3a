// Pure state -> markup functions. Everything here is a string builder so
// rendering is testable without a DOM; main.ts only assigns innerHTML.

import { ForecastRow, Invoice } from "./api.js";
import { GoalView, LiveMeterView, PaymentFlowState } from "./state.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function formatRupees(paise: number): string {
  const sign = paise < 0 ? "-" : "";
  const magnitude = Math.abs(paise);
  const rupees = Math.floor(magnitude / 100);
  const rest = String(magnitude % 100).padStart(2, "0");
  return `${sign}Rs ${rupees}.${rest}`;
}

export function sparklineSvg(
  values: number[],
  width = 160,
  height = 36,
): string {
  if (values.length === 0) {
    return `<svg class="sparkline" width="${width}" height="${height}"></svg>`;
  }
  const lo = Math.min(...values);
  const hi = Math.max(...values);
  const span = hi - lo || 1;
  const step = values.length > 1 ? width / (values.length - 1) : 0;
  const points = values
    .map((v, i) => {
      const x = (i * step).toFixed(1);
      const y = (height - ((v - lo) / span) * (height - 4) - 2).toFixed(1);
      return `${x},${y}`;
    })
    .join(" ");
  return (
    `<svg class="sparkline" width="${width}" height="${height}" ` +
    `viewBox="0 0 ${width} ${height}"><polyline fill="none" ` +
    `stroke="currentColor" stroke-width="1.5" points="${points}"/></svg>`
  );
}

export function meterCardHtml(view: LiveMeterView): string {
  const id = escapeHtml(view.meterId);
  const parts: string[] = [`<article class="meter-card" data-meter="${id}">`];
  if (view.offline) {
    parts.push('<div class="banner offline">API unreachable, showing last data</div>');
  }
  parts.push(`<h3>${id}</h3>`);
  const r = view.reading;
  if (r === null) {
    parts.push('<p class="empty">no readings yet</p>');
  } else {
    const age =
      view.readingAgeMs === null ? "" : `${(view.readingAgeMs / 1000).toFixed(1)}s ago`;
    const staleBadge = view.stale ? ' <span class="badge stale">STALE</span>' : "";
    parts.push(
      `<dl class="reading">` +
        `<dt>voltage</dt><dd class="v-rms">${r.v_rms.toFixed(1)} V</dd>` +
        `<dt>current</dt><dd class="i-rms">${r.i_rms.toFixed(3)} A</dd>` +
        `<dt>power</dt><dd class="apparent-power">${r.apparent_power.toFixed(1)} VA</dd>` +
        `<dt>energy</dt><dd class="kwh-total">${r.kwh_total.toFixed(4)} kWh</dd>` +
        `</dl>` +
        `<p class="age">${age}${staleBadge}</p>`,
    );
    parts.push(sparklineSvg(view.history.map((h) => h.apparent_power)));
  }
  if (view.relayOn !== null) {
    const label = view.relayOn ? "ON" : "OFF";
    parts.push(
      `<button class="relay" data-meter="${id}" data-on="${view.relayOn}">` +
        `relay: ${label}</button>`,
    );
  }
  if (view.lastError) {
    parts.push(`<p class="error">${escapeHtml(view.lastError)}</p>`);
  }
  parts.push("</article>");
  return parts.join("");
}

export function invoiceRowHtml(invoice: Invoice): string {
  const id = escapeHtml(invoice.invoice_id);
  const payCell =
    invoice.status === "issued"
      ? `<button class="pay" data-invoice="${id}">pay</button>`
      : `<span class="paid-tx">${escapeHtml(invoice.payment_tx ?? "")}</span>`;
  return (
    `<tr data-invoice="${id}"><td>${id}</td>` +
    `<td>${escapeHtml(invoice.meter_id)}</td>` +
    `<td>${invoice.kwh_billed.toFixed(4)}</td>` +
    `<td>${formatRupees(invoice.total_paise)}</td>` +
    `<td class="status">${invoice.status}</td><td>${payCell}</td></tr>`
  );
}

const BASE_GAS = 21_000; // shown as the lower bound before the receipt arrives

export function paymentPanelHtml(state: PaymentFlowState): string {
  const invoice = state.invoice;
  const lines = invoice.lines
    .map(
      ([head, amount]) =>
        `<li>${escapeHtml(String(head))}: ${formatRupees(Number(amount))}</li>`,
    )
    .join("");
  const header =
    `<h4>Invoice ${escapeHtml(invoice.invoice_id)}</h4>` +
    `<ul class="lines">${lines}</ul>` +
    `<p class="total">total ${formatRupees(invoice.total_paise)}</p>`;
  switch (state.stage) {
    case "review":
      return (
        `<section class="payment review">${header}` +
        `<p class="gas-estimate">gas: at least ${BASE_GAS}</p>` +
        `<button class="confirm">confirm</button>` +
        `<button class="cancel">cancel</button></section>`
      );
    case "submitting":
      return `<section class="payment submitting">${header}<p>transaction in progress…</p></section>`;
    case "confirmed": {
      const r = state.receipt!;
      return (
        `<section class="payment confirmed">${header}` +
        `<dl class="receipt">` +
        `<dt>tx</dt><dd class="tx-id">${escapeHtml(r.tx_id)}</dd>` +
        `<dt>gas</dt><dd class="gas">${r.gas}</dd>` +
        `<dt>block</dt><dd class="block-index">${r.block_index}</dd>` +
        `<dt>block hash</dt><dd class="block-hash">${escapeHtml(r.block_hash)}</dd>` +
        `</dl></section>`
      );
    }
    case "error":
      return (
        `<section class="payment error">${header}` +
        `<p class="reason">${escapeHtml(state.errorKind ?? "")}: ` +
        `${escapeHtml(state.errorDetail ?? "")}</p></section>`
      );
    case "cancelled":
      return `<section class="payment cancelled">${header}<p>cancelled</p></section>`;
  }
}

export function goalBarHtml(goal: GoalView): string {
  if (goal.missing) {
    return (
      `<div class="goal empty" data-meter="${escapeHtml(goal.meterId)}">` +
      `no goal set — enter a monthly kWh target</div>`
    );
  }
  const fraction = goal.fraction ?? 0;
  const percent = Math.min(fraction * 100, 100).toFixed(1);
  const overshoot = goal.projectedOvershoot
    ? '<span class="badge overshoot">projected overshoot</span>'
    : "";
  return (
    `<div class="goal" data-meter="${escapeHtml(goal.meterId)}">` +
    `<div class="bar"><div class="fill" style="width:${percent}%"></div></div>` +
    `<span class="figures">${(goal.kwhUsed ?? 0).toFixed(2)} / ` +
    `${(goal.kwhTarget ?? 0).toFixed(2)} kWh</span>${overshoot}</div>`
  );
}

export interface HistoryPoint {
  timestamp_ms: number;
  value: number;
}

export function forecastChartSvg(
  history: HistoryPoint[],
  forecast: ForecastRow[],
  width = 640,
  height = 160,
): string {
  const historyValues = history.map((p) => p.value);
  const forecastValues = forecast.map((r) => r.yhat);
  const all = historyValues.concat(forecastValues);
  if (all.length === 0) {
    return `<svg class="forecast-chart" width="${width}" height="${height}"></svg>`;
  }
  const lo = Math.min(...all);
  const hi = Math.max(...all);
  const span = hi - lo || 1;
  const n = all.length;
  const sx = (i: number) => ((i / Math.max(n - 1, 1)) * width).toFixed(1);
  const sy = (v: number) =>
    (height - ((v - lo) / span) * (height - 8) - 4).toFixed(1);
  const historyPts = historyValues.map((v, i) => `${sx(i)},${sy(v)}`).join(" ");
  const forecastPts = forecastValues
    .map((v, i) => `${sx(historyValues.length + i)},${sy(v)}`)
    .join(" ");
  return (
    `<svg class="forecast-chart" width="${width}" height="${height}" ` +
    `viewBox="0 0 ${width} ${height}">` +
    `<polyline class="history" fill="none" stroke="#888" points="${historyPts}"/>` +
    `<polyline class="forecast" fill="none" stroke="#0a7" ` +
    `stroke-dasharray="4 3" points="${forecastPts}"/></svg>`
  );
}
