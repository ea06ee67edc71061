/** Console state and the operations that steer a live trial.
 *
 * The console never computes statistics: all numbers in the grid view,
 * the card, and committed history are carried verbatim from API payloads.
 * Drafts are validated locally before any network call, and responses are
 * tagged with the draft version that produced them so a stale reply can
 * never overwrite a newer draft's view.
 */

import { ApiClient } from "./api.js";
import type {
  ConfsetMember,
  ConfsetPayload,
  CriteriaDraft,
  FitPayload,
  OptimizePayload,
  RecommendationExport,
  TrialConfig,
} from "./types.js";

export interface GridView {
  optimize: OptimizePayload;
  confset: ConfsetPayload;
  draftVersion: number;
}

export interface HistoryEntry {
  recommendation: RecommendationExport;
  committed_at_stage: number;
  alternative: boolean;
}

export interface ConsoleState {
  sessionId: string;
  config: TrialConfig;
  stage: number;
  draft: CriteriaDraft;
  draftVersion: number;
  fit: FitPayload | null;
  view: GridView | null;
  selected: number[] | null;
  history: HistoryEntry[];
  error: string | null;
}

export function defaultDraft(): CriteriaDraft {
  return {
    goal_type: "absolute",
    goal_value: 0.8,
    level: 0.95,
    covariate_profile: null,
    baseline_rate: null,
    budget: null,
    power_target: null,
    power_context: null,
    use_robust_vcov: true,
  };
}

export function initialState(sessionId: string, config: TrialConfig): ConsoleState {
  return {
    sessionId,
    config,
    stage: 1,
    draft: defaultDraft(),
    draftVersion: 0,
    fit: null,
    view: null,
    selected: null,
    history: [],
    error: null,
  };
}

/** Mirror of the engine's criteria rules, checked before any API call. */
export function validateDraft(draft: CriteriaDraft, config: TrialConfig): string[] {
  const problems: string[] = [];
  if (draft.goal_type !== "absolute" && draft.goal_type !== "relative_increase") {
    problems.push(`unknown goal_type ${String(draft.goal_type)}`);
  }
  if (draft.goal_type === "absolute") {
    if (!(draft.goal_value > 0 && draft.goal_value < 1)) {
      problems.push("absolute goal must be in (0, 1)");
    }
  } else if (!(draft.goal_value > 0)) {
    problems.push("relative increase must be positive");
  }
  if (!(draft.level > 0 && draft.level < 1)) {
    problems.push("level must be in (0, 1)");
  }
  if (draft.budget !== null && !(draft.budget > 0)) {
    problems.push("budget must be positive");
  }
  if (draft.power_target !== null) {
    if (!(draft.power_target > 0 && draft.power_target < 1)) {
      problems.push("power target must be in (0, 1)");
    }
    if (draft.power_context === null || !(draft.power_context.n_per_arm > 0)) {
      problems.push("power target needs a context with n_per_arm > 0");
    }
  }
  if (draft.covariate_profile !== null) {
    const known = new Set(config.covariates.map((c) => c.name));
    for (const name of Object.keys(draft.covariate_profile)) {
      if (!known.has(name)) problems.push(`unknown covariate '${name}' in profile`);
    }
  }
  return problems;
}

function draftsEqual(a: CriteriaDraft, b: CriteriaDraft): boolean {
  return JSON.stringify(a) === JSON.stringify(b);
}

/** Merge changed fields into the draft. Returns the same state object when
 * nothing actually changed, so callers can skip the API round trip. */
export function applyDraft(state: ConsoleState, changes: Partial<CriteriaDraft>): ConsoleState {
  const merged: CriteriaDraft = { ...state.draft, ...changes };
  if (draftsEqual(merged, state.draft)) return state;
  return { ...state, draft: merged, draftVersion: state.draftVersion + 1 };
}

export interface RefreshResult {
  version: number;
  optimize: OptimizePayload;
  confset: ConfsetPayload;
}

/** Fetch a fresh grid view for the current draft. Throws before any network
 * call if the draft is invalid. */
export async function refreshView(state: ConsoleState, api: ApiClient): Promise<RefreshResult> {
  const problems = validateDraft(state.draft, state.config);
  if (problems.length > 0) {
    throw new Error(`invalid criteria draft: ${problems.join("; ")}`);
  }
  const version = state.draftVersion;
  const optimize = await api.optimize(state.sessionId, state.draft);
  const confset = await api.confidenceSet(state.sessionId, state.draft);
  return { version, optimize, confset };
}

/** Install a fetched view; a result from a superseded draft is discarded. */
export function applyView(state: ConsoleState, result: RefreshResult): ConsoleState {
  if (result.version !== state.draftVersion) return state;
  return {
    ...state,
    view: { optimize: result.optimize, confset: result.confset, draftVersion: result.version },
    selected: [...result.optimize.package.doses],
    error: null,
  };
}

/** Surface an API failure without losing the draft or the previous view. */
export function applyError(state: ConsoleState, message: string): ConsoleState {
  return { ...state, error: message };
}

/** Change criteria and refresh: the what-if loop. No change means no call. */
export async function whatifUpdate(
  state: ConsoleState,
  changes: Partial<CriteriaDraft>,
  api: ApiClient,
): Promise<ConsoleState> {
  const next = applyDraft(state, changes);
  if (next === state && state.view !== null) return state;
  try {
    const result = await refreshView(next, api);
    return applyView(next, result);
  } catch (err) {
    return applyError(next, err instanceof Error ? err.message : String(err));
  }
}

function dosesEqual(a: number[], b: number[]): boolean {
  return a.length === b.length && a.every((v, i) => v === b[i]);
}

export function findMember(confset: ConfsetPayload, doses: number[]): ConfsetMember | null {
  for (const m of confset.members) {
    if (dosesEqual(m.package.doses, doses)) return m;
  }
  return null;
}

/** Select a package for commit: the optimum or any confidence-set member. */
export function selectPackage(state: ConsoleState, doses: number[]): ConsoleState {
  if (state.view === null) throw new Error("nothing displayed yet");
  const isOptimum = dosesEqual(state.view.optimize.package.doses, doses);
  if (!isOptimum && findMember(state.view.confset, doses) === null) {
    throw new Error("selection must be the optimum or a confidence-set member");
  }
  return { ...state, selected: [...doses] };
}

export const ALTERNATIVE_NOTE = "alternative within confidence set";

/** Append the displayed recommendation (or a chosen confidence-set member)
 * to history as an engine-schema recommendation for the next stage. */
export function commitRecommendation(state: ConsoleState): ConsoleState {
  if (state.view === null) throw new Error("nothing displayed yet");
  if (state.fit === null) throw new Error("no fit payload held for this view");
  const { optimize, confset } = state.view;
  const doses = state.selected ?? optimize.package.doses;
  const isOptimum = dosesEqual(optimize.package.doses, doses);

  let recommendation: RecommendationExport;
  if (isOptimum) {
    recommendation = {
      for_stage: state.stage + 1,
      package: { doses: [...optimize.package.doses] },
      basis: state.fit,
      predicted: optimize.predicted,
      cost: optimize.cost,
      status: optimize.status,
      notes: [],
      stabilized: null,
    };
  } else {
    const member = findMember(confset, doses);
    if (member === null) throw new Error("selected package left the confidence set");
    recommendation = {
      for_stage: state.stage + 1,
      package: { doses: [...member.package.doses] },
      basis: state.fit,
      predicted: {
        probability: member.probability,
        linear_predictor: null,
        se_linear: null,
        ci_lower: null,
        ci_upper: null,
        level: confset.level,
      },
      cost: member.cost,
      status: optimize.status,
      notes: [ALTERNATIVE_NOTE],
      stabilized: null,
    };
  }
  const entry: HistoryEntry = {
    recommendation,
    committed_at_stage: state.stage,
    alternative: !isOptimum,
  };
  return { ...state, history: [...state.history, entry], stage: state.stage + 1 };
}

export interface Snapshot {
  session_id: string;
  stage: number;
  draft: CriteriaDraft;
  history: HistoryEntry[];
}

export function exportSnapshot(state: ConsoleState): string {
  const snapshot: Snapshot = {
    session_id: state.sessionId,
    stage: state.stage,
    draft: state.draft,
    history: state.history,
  };
  return JSON.stringify(snapshot, null, 2);
}

/** Rebuild console state in a fresh session from an exported snapshot. The
 * grid view is refetched on demand; history renders identically. */
export function importSnapshot(text: string, config: TrialConfig): ConsoleState {
  const doc = JSON.parse(text) as Snapshot;
  if (typeof doc.session_id !== "string" || !Array.isArray(doc.history)) {
    throw new Error("not a console snapshot");
  }
  return {
    ...initialState(doc.session_id, config),
    stage: doc.stage,
    draft: doc.draft,
    history: doc.history,
  };
}
