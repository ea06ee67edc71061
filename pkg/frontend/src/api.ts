/** Thin typed client for the engine's HTTP API.
 *
 * Every method returns the server payload parsed as-is; nothing is
 * recomputed or reformatted here. Non-2xx responses throw ApiError with the
 * server's violation list or error message.
 */

import type {
  ConfsetPayload,
  CriteriaDraft,
  FitPayload,
  OptimizePayload,
  TrialConfig,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  status: number;
  violations: string[];

  constructor(status: number, message: string, violations: string[] = []) {
    super(message);
    this.status = status;
    this.violations = violations;
  }
}

/** Drop null fields so the server applies its own defaults. */
export function criteriaBody(draft: CriteriaDraft): Record<string, unknown> {
  const body: Record<string, unknown> = {
    goal_type: draft.goal_type,
    goal_value: draft.goal_value,
    level: draft.level,
    use_robust_vcov: draft.use_robust_vcov,
  };
  if (draft.covariate_profile !== null) body.covariate_profile = draft.covariate_profile;
  if (draft.baseline_rate !== null) body.baseline_rate = draft.baseline_rate;
  if (draft.budget !== null) body.budget = draft.budget;
  if (draft.power_target !== null) {
    body.power_target = draft.power_target;
    body.power_context = draft.power_context;
  }
  return body;
}

export class ApiClient {
  private baseUrl: string;
  private fetchFn: FetchLike;

  constructor(baseUrl: string, fetchFn?: FetchLike) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
    this.fetchFn = fetchFn ?? ((url, init) => fetch(url, init));
  }

  private async request(path: string, init?: RequestInit): Promise<Response> {
    const resp = await this.fetchFn(this.baseUrl + path, init);
    if (resp.ok) return resp;
    let message = `HTTP ${resp.status}`;
    let violations: string[] = [];
    try {
      const doc = await resp.json();
      if (Array.isArray(doc.violations)) {
        violations = doc.violations.map(String);
        message = violations.join("; ");
      } else if (typeof doc.error === "string") {
        message = doc.error;
      }
    } catch {
      // keep the HTTP status message
    }
    throw new ApiError(resp.status, message, violations);
  }

  private async json<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.request(path, init);
    return (await resp.json()) as T;
  }

  createSession(config: TrialConfig): Promise<{ session_id: string; created: string }> {
    return this.json("/api/sessions", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(config),
    });
  }

  uploadData(
    sessionId: string,
    csvText: string,
  ): Promise<{ stages_loaded: number[]; rows_total: number }> {
    return this.json(`/api/sessions/${sessionId}/data`, {
      method: "POST",
      headers: { "content-type": "text/csv" },
      body: csvText,
    });
  }

  fit(sessionId: string, scales?: Record<string, number>): Promise<FitPayload> {
    return this.json(`/api/sessions/${sessionId}/fit`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(scales ? { scales } : {}),
    });
  }

  optimize(sessionId: string, draft: CriteriaDraft): Promise<OptimizePayload> {
    return this.json(`/api/sessions/${sessionId}/optimize`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(criteriaBody(draft)),
    });
  }

  confidenceSet(sessionId: string, draft: CriteriaDraft): Promise<ConfsetPayload> {
    return this.json(`/api/sessions/${sessionId}/confidence-set`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(criteriaBody(draft)),
    });
  }

  report(sessionId: string): Promise<Record<string, unknown>> {
    return this.json(`/api/sessions/${sessionId}/report`);
  }

  async costCurve(sessionId: string, component: string): Promise<string> {
    const resp = await this.request(
      `/api/sessions/${sessionId}/cost-curve?component=${encodeURIComponent(component)}`,
    );
    return resp.text();
  }

  project(body: Record<string, unknown>): Promise<Record<string, unknown>> {
    return this.json("/api/project", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  power(body: Record<string, unknown>): Promise<Record<string, unknown>> {
    return this.json("/api/power", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
  }
}
