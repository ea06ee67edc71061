/** Recommendation card and history rendering.
 *
 * Every value shown is taken from an API payload by reference; nothing is
 * recomputed or reformatted beyond String() for display.
 */

import type { OptimizePayload } from "./types.js";
import type { HistoryEntry } from "./state.js";

export interface CardValues {
  status: string;
  doses: number[];
  probability: number;
  ci_lower: number | null;
  ci_upper: number | null;
  level: number;
  cost: number;
  grid_size: number;
}

/** Pull the card's fields straight out of the optimize payload. */
export function cardValues(payload: OptimizePayload): CardValues {
  return {
    status: payload.status,
    doses: payload.package.doses,
    probability: payload.predicted.probability,
    ci_lower: payload.predicted.ci_lower,
    ci_upper: payload.predicted.ci_upper,
    level: payload.predicted.level,
    cost: payload.cost,
    grid_size: payload.grid_size,
  };
}

function esc(v: unknown): string {
  return String(v).replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

export function renderCardHTML(payload: OptimizePayload, componentNames: string[]): string {
  const v = cardValues(payload);
  const doseRows = v.doses
    .map((d, i) => `<tr><td>${esc(componentNames[i] ?? `component ${i + 1}`)}</td><td>${esc(d)}</td></tr>`)
    .join("");
  const ci =
    v.ci_lower === null || v.ci_upper === null
      ? "n/a"
      : `[${esc(v.ci_lower)}, ${esc(v.ci_upper)}]`;
  return [
    `<div class="card" data-status="${esc(v.status)}">`,
    `<h2>Recommended package</h2>`,
    `<p class="status">${esc(v.status)}</p>`,
    `<table class="doses">${doseRows}</table>`,
    `<dl>`,
    `<dt>Predicted outcome</dt><dd data-field="probability">${esc(v.probability)}</dd>`,
    `<dt>Interval (level ${esc(v.level)})</dt><dd data-field="ci">${ci}</dd>`,
    `<dt>Cost</dt><dd data-field="cost">${esc(v.cost)}</dd>`,
    `<dt>Grid size</dt><dd data-field="grid_size">${esc(v.grid_size)}</dd>`,
    `</dl>`,
    `</div>`,
  ].join("\n");
}

/** One line per committed recommendation, oldest first. */
export function renderHistoryLines(history: HistoryEntry[]): string[] {
  return history.map((entry) => {
    const rec = entry.recommendation;
    const doses = rec.package.doses.join(", ");
    const suffix = entry.alternative ? ` (${rec.notes.join("; ")})` : "";
    return (
      `stage ${entry.committed_at_stage} -> ${rec.for_stage}: ` +
      `package [${doses}] prob ${rec.predicted.probability} cost ${rec.cost}${suffix}`
    );
  });
}
