/** Captured payloads from a live engine session (derived scenario). */

import { readFileSync } from "node:fs";
import type {
  ConfsetPayload,
  FitPayload,
  OptimizePayload,
  RecommendationExport,
  TrialConfig,
} from "../src/types.js";

function load<T>(name: string): T {
  const url = new URL(`./fixtures/${name}`, import.meta.url);
  return JSON.parse(readFileSync(url, "utf-8")) as T;
}

export const config = load<TrialConfig>("config.json");
export const fit = load<FitPayload>("fit.json");
export const optimize = load<OptimizePayload>("optimize.json");
export const confset = load<ConfsetPayload>("confset.json");
export const recommendation = load<RecommendationExport>("recommendation.json");

export function clone<T>(value: T): T {
  return JSON.parse(JSON.stringify(value)) as T;
}
