/** Dose-grid presentation: a two-component heatmap, or a sortable table
 * when the trial has three or more components.
 *
 * Cell values come straight from the API payloads. Cells outside the
 * confidence set carry no number at all and render in a neutral shade, so
 * membership is the only thing the colouring encodes.
 */

import type { ComponentSpec, ConfsetPayload, OptimizePayload, TrialConfig } from "./types.js";

/** Axis values for one component, matching the engine's grid construction:
 * count = floor((upper - lower) / step + 1e-9) + 1. */
export function axisValues(spec: ComponentSpec): number[] {
  const count = Math.floor((spec.upper - spec.lower) / spec.step + 1e-9) + 1;
  const values: number[] = [];
  for (let i = 0; i < count; i++) values.push(spec.lower + i * spec.step);
  return values;
}

export function doseKey(doses: number[]): string {
  return doses.map((d) => d.toFixed(6)).join(",");
}

export interface HeatmapCell {
  dose1: number;
  dose2: number;
  member: boolean;
  probability: number | null;
  cost: number | null;
  optimal: boolean;
}

export interface Heatmap {
  axis1: number[];
  axis2: number[];
  cells: HeatmapCell[];
}

export function buildHeatmap(
  config: TrialConfig,
  optimize: OptimizePayload,
  confset: ConfsetPayload,
): Heatmap {
  if (config.components.length !== 2) {
    throw new Error("heatmap needs exactly two components");
  }
  const axis1 = axisValues(config.components[0]!);
  const axis2 = axisValues(config.components[1]!);
  const byKey = new Map<string, { probability: number; cost: number }>();
  for (const m of confset.members) {
    byKey.set(doseKey(m.package.doses), { probability: m.probability, cost: m.cost });
  }
  const optimalKey = doseKey(optimize.package.doses);
  const cells: HeatmapCell[] = [];
  for (const d1 of axis1) {
    for (const d2 of axis2) {
      const key = doseKey([d1, d2]);
      const hit = byKey.get(key);
      cells.push({
        dose1: d1,
        dose2: d2,
        member: hit !== undefined,
        probability: hit?.probability ?? null,
        cost: hit?.cost ?? null,
        optimal: key === optimalKey,
      });
    }
  }
  if (cells.length !== optimize.grid_size) {
    throw new Error(
      `grid mismatch: rendered ${cells.length} cells but the engine reports ${optimize.grid_size}`,
    );
  }
  return { axis1, axis2, cells };
}

/** Background colour for a cell. Members shade from light to dark with the
 * payload probability inside the set's own range; everything else is grey. */
export function colorFor(cell: HeatmapCell, probMin: number, probMax: number): string {
  if (cell.optimal) return "#c0392b";
  if (!cell.member || cell.probability === null) return "#e8e8e8";
  const span = probMax - probMin;
  const t = span > 0 ? (cell.probability - probMin) / span : 1;
  const light = 88 - Math.round(48 * t);
  return `hsl(210, 60%, ${light}%)`;
}

export interface TableRow {
  doses: number[];
  probability: number;
  cost: number;
  optimal: boolean;
}

export type SortColumn = "probability" | "cost" | number;

/** Sortable confidence-set table for trials with three or more components.
 * A numeric column index sorts by that component's dose. */
export function buildTable(
  optimize: OptimizePayload,
  confset: ConfsetPayload,
  sortBy: SortColumn = "cost",
  descending = false,
): TableRow[] {
  const optimalKey = doseKey(optimize.package.doses);
  const rows: TableRow[] = confset.members.map((m) => ({
    doses: [...m.package.doses],
    probability: m.probability,
    cost: m.cost,
    optimal: doseKey(m.package.doses) === optimalKey,
  }));
  const value = (r: TableRow): number =>
    sortBy === "probability" ? r.probability : sortBy === "cost" ? r.cost : (r.doses[sortBy] ?? 0);
  rows.sort((a, b) => (descending ? value(b) - value(a) : value(a) - value(b)));
  return rows;
}
