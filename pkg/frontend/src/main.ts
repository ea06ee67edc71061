/** Browser entry point: wires the state machine to the page. */

import { ApiClient } from "./api.js";
import { buildHeatmap, buildTable, colorFor } from "./heatmap.js";
import { renderCardHTML, renderHistoryLines } from "./render.js";
import {
  applyError,
  commitRecommendation,
  exportSnapshot,
  importSnapshot,
  initialState,
  refreshView,
  applyView,
  applyDraft,
  selectPackage,
  type ConsoleState,
} from "./state.js";
import type { CriteriaDraft, TrialConfig } from "./types.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) throw new Error(`missing element #${id}`);
  return node as T;
}

let api: ApiClient | null = null;
let state: ConsoleState | null = null;

function renderError(): void {
  const box = el<HTMLDivElement>("error");
  box.textContent = state?.error ?? "";
  box.style.display = state?.error ? "block" : "none";
}

function renderHistory(): void {
  if (state === null) return;
  el<HTMLPreElement>("history").textContent = renderHistoryLines(state.history).join("\n");
  el<HTMLSpanElement>("stage").textContent = String(state.stage);
}

function renderGrid(): void {
  if (state === null || state.view === null) return;
  const { optimize, confset } = state.view;
  el<HTMLDivElement>("card").innerHTML = renderCardHTML(
    optimize,
    state.config.components.map((c) => c.name),
  );
  const host = el<HTMLDivElement>("grid");
  host.innerHTML = "";
  if (state.config.components.length === 2) {
    const map = buildHeatmap(state.config, optimize, confset);
    const probs = confset.members.map((m) => m.probability);
    const lo = Math.min(...probs);
    const hi = Math.max(...probs);
    const table = document.createElement("table");
    table.className = "heatmap";
    for (let j = map.axis2.length - 1; j >= 0; j--) {
      const tr = document.createElement("tr");
      for (const cell of map.cells.filter((c) => c.dose2 === map.axis2[j])) {
        const td = document.createElement("td");
        td.style.background = colorFor(cell, lo, hi);
        td.title =
          `(${cell.dose1}, ${cell.dose2})` +
          (cell.member ? ` prob ${cell.probability} cost ${cell.cost}` : "");
        if (cell.member || cell.optimal) {
          td.onclick = () => {
            if (state === null) return;
            try {
              state = selectPackage(state, [cell.dose1, cell.dose2]);
              el<HTMLSpanElement>("selected").textContent = `[${cell.dose1}, ${cell.dose2}]`;
            } catch (err) {
              state = applyError(state, err instanceof Error ? err.message : String(err));
              renderError();
            }
          };
        }
        tr.appendChild(td);
      }
      table.appendChild(tr);
    }
    host.appendChild(table);
  } else {
    const rows = buildTable(optimize, confset);
    const table = document.createElement("table");
    table.className = "confset";
    const head = document.createElement("tr");
    head.innerHTML =
      state.config.components.map((c) => `<th>${c.name}</th>`).join("") +
      "<th>probability</th><th>cost</th>";
    table.appendChild(head);
    for (const row of rows) {
      const tr = document.createElement("tr");
      tr.innerHTML =
        row.doses.map((d) => `<td>${d}</td>`).join("") +
        `<td>${row.probability}</td><td>${row.cost}</td>`;
      if (row.optimal) tr.className = "optimal";
      table.appendChild(tr);
    }
    host.appendChild(table);
  }
  el<HTMLSpanElement>("selected").textContent = state.selected
    ? `[${state.selected.join(", ")}]`
    : "";
  (el<HTMLButtonElement>("commit") as HTMLButtonElement).disabled = false;
}

function draftFromForm(): Partial<CriteriaDraft> {
  const goalType = el<HTMLSelectElement>("goal-type").value as CriteriaDraft["goal_type"];
  const num = (id: string): number | null => {
    const raw = el<HTMLInputElement>(id).value.trim();
    return raw === "" ? null : Number(raw);
  };
  const changes: Partial<CriteriaDraft> = {
    goal_type: goalType,
    goal_value: num("goal-value") ?? 0,
    level: num("level") ?? 0,
    budget: num("budget"),
    baseline_rate: num("baseline-rate"),
    power_target: num("power-target"),
  };
  const n = num("power-n");
  changes.power_context = n === null ? null : { n_per_arm: n };
  return changes;
}

async function refresh(): Promise<void> {
  if (api === null || state === null) return;
  const next = applyDraft(state, draftFromForm());
  if (next === state && state.view !== null) return;
  state = next;
  try {
    const result = await refreshView(state, api);
    state = applyView(state, result);
  } catch (err) {
    state = applyError(state, err instanceof Error ? err.message : String(err));
  }
  renderError();
  renderGrid();
}

async function boot(): Promise<void> {
  const base = el<HTMLInputElement>("base-url").value;
  api = new ApiClient(base);
  const configText = await el<HTMLInputElement>("config-file").files![0]!.text();
  const config = JSON.parse(configText) as TrialConfig;
  const { session_id } = await api.createSession(config);
  state = initialState(session_id, config);
  const dataFile = el<HTMLInputElement>("data-file").files?.[0];
  if (dataFile) {
    await api.uploadData(session_id, await dataFile.text());
    state = { ...state, fit: await api.fit(session_id) };
  }
  renderHistory();
  await refresh();
}

function wire(): void {
  el<HTMLButtonElement>("connect").onclick = () => {
    void boot().catch((err) => {
      if (state !== null) state = applyError(state, String(err));
      el<HTMLDivElement>("error").textContent = String(err);
      el<HTMLDivElement>("error").style.display = "block";
    });
  };
  el<HTMLButtonElement>("update").onclick = () => void refresh();
  el<HTMLButtonElement>("commit").onclick = () => {
    if (state === null) return;
    try {
      state = commitRecommendation(state);
      renderHistory();
    } catch (err) {
      state = applyError(state, err instanceof Error ? err.message : String(err));
      renderError();
    }
  };
  el<HTMLButtonElement>("export").onclick = () => {
    if (state === null) return;
    const blob = new Blob([exportSnapshot(state)], { type: "application/json" });
    const a = document.createElement("a");
    a.href = URL.createObjectURL(blob);
    a.download = "console-session.json";
    a.click();
    URL.revokeObjectURL(a.href);
  };
  el<HTMLInputElement>("import-file").onchange = async () => {
    const file = el<HTMLInputElement>("import-file").files?.[0];
    if (!file || state === null) return;
    state = importSnapshot(await file.text(), state.config);
    renderHistory();
    renderError();
  };
}

if (typeof document !== "undefined") {
  wire();
}
