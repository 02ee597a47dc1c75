// Typed client over the agentsoc HTTP API. All console data comes from
// here; the UI never recomputes scores.

export interface IncidentSummary {
  cycle_id: string;
  status: string;
  incident_id: string | null;
  flags: string[];
  severity: number | null;
  top_action: string | null;
  playbook_status: string | null;
  guardrail_outcome: string | null;
}

export interface IncidentList {
  total: number;
  limit: number;
  offset: number;
  items: IncidentSummary[];
}

export interface HypothesisView {
  hypothesis_id: string;
  description: string;
  technique_chain: string[];
  confidence: number;
  kind: string;
}

export interface VerdictView {
  hypothesis_id: string;
  status: string;
  reason: string;
  dependencies: { note: string }[];
}

export interface RankedActionView {
  rank: number;
  composite: number;
  candidate: {
    action_id: string;
    primitive: string;
    target: string;
    containment: number;
    business_impact: number;
    execution_cost: number;
  };
}

export interface PlaybookStepView {
  primitive: string;
  target: string;
  provenance: string;
}

export interface CycleDetail {
  cycle_id: string;
  status: string;
  incident: {
    incident_id: string;
    flags: string[];
    severity: number;
    historical_baseline: string;
    event_summary: string;
  } | null;
  hypotheses: HypothesisView[];
  verdicts: VerdictView[];
  ranked: RankedActionView[];
  playbook: { playbook_id: string; steps: PlaybookStepView[]; projected_impact: number; status: string } | null;
  guardrail: { outcome: string; triggered_rules: string[]; explanation: string } | null;
  stage_timings: [string, number][];
}

export interface ApprovalItem {
  cycle_id: string;
  playbook_summary: string;
  projected_impact: number;
  triggered_rules: string[];
  requested_at: number;
  decided_by: string | null;
  decision: string | null;
  decided_at: number | null;
}

export interface RescoreRanked {
  rank: number;
  action_id: string;
  primitive: string;
  target: string;
  containment: number;
  business_impact: number;
  execution_cost: number;
  composite: number;
}

export interface RescoreResponse {
  cycle_id: string;
  original: RescoreRanked[];
  what_if: RescoreRanked[];
  weights: { alpha: number; beta: number; gamma: number };
}

export type DecisionResult =
  | { kind: "decided"; playbook_status: string; cycle_status: string }
  | { kind: "already_decided"; detail: string; current: ApprovalItem | null };

export class ApiError extends Error {
  constructor(public status: number, public detail: string) {
    super(`API ${status}: ${detail}`);
  }
}

export class ApiClient {
  constructor(private baseUrl: string, private token: string | null = null) {}

  private headers(json = false): Record<string, string> {
    const headers: Record<string, string> = {};
    if (json) headers["Content-Type"] = "application/json";
    if (this.token) headers["Authorization"] = `Bearer ${this.token}`;
    return headers;
  }

  private async get<T>(path: string): Promise<T> {
    const response = await fetch(`${this.baseUrl}${path}`, { headers: this.headers() });
    if (!response.ok) {
      const body = await response.json().catch(() => ({ detail: response.statusText }));
      throw new ApiError(response.status, String(body.detail ?? body.error ?? "request failed"));
    }
    return (await response.json()) as T;
  }

  async health(): Promise<boolean> {
    try {
      const response = await fetch(`${this.baseUrl}/healthz`);
      return response.ok;
    } catch {
      return false;
    }
  }

  listIncidents(status?: string): Promise<IncidentList> {
    const query = status ? `?status=${encodeURIComponent(status)}` : "";
    return this.get<IncidentList>(`/incidents${query}`);
  }

  incidentDetail(cycleId: string): Promise<CycleDetail> {
    return this.get<CycleDetail>(`/incidents/${encodeURIComponent(cycleId)}`);
  }

  approvals(): Promise<{ items: ApprovalItem[] }> {
    return this.get<{ items: ApprovalItem[] }>("/approvals");
  }

  // 200 -> decided; 409 -> the decision already made elsewhere is fetched
  // fresh. Network failures propagate: the caller must not mark the
  // decision as sent.
  async submitDecision(cycleId: string, decision: "Approved" | "Rejected", analyst: string): Promise<DecisionResult> {
    const response = await fetch(`${this.baseUrl}/approvals/${encodeURIComponent(cycleId)}`, {
      method: "POST",
      headers: this.headers(true),
      body: JSON.stringify({ decision, analyst }),
    });
    if (response.status === 200) {
      const body = await response.json();
      return { kind: "decided", playbook_status: body.playbook_status, cycle_status: body.cycle_status };
    }
    if (response.status === 409) {
      const body = await response.json().catch(() => ({ detail: "already decided" }));
      const fresh = await this.approvals().catch(() => ({ items: [] as ApprovalItem[] }));
      const current = fresh.items.find((item) => item.cycle_id === cycleId) ?? null;
      return { kind: "already_decided", detail: String(body.detail ?? ""), current };
    }
    const body = await response.json().catch(() => ({ detail: response.statusText }));
    throw new ApiError(response.status, String(body.detail ?? "decision failed"));
  }

  async rescore(cycleId: string, weights: { alpha: number; beta: number; gamma: number }): Promise<RescoreResponse> {
    const response = await fetch(`${this.baseUrl}/incidents/${encodeURIComponent(cycleId)}/rescore`, {
      method: "POST",
      headers: this.headers(true),
      body: JSON.stringify(weights),
    });
    const body = await response.json().catch(() => ({ detail: response.statusText }));
    if (!response.ok) {
      throw new ApiError(response.status, String(body.detail ?? "rescore failed"));
    }
    return body as RescoreResponse;
  }
}
