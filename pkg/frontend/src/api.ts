// Thin typed client over the control-plane HTTP API. The console performs no
// governance logic: every decision round-trips through these endpoints and
// the UI renders only what the server returns.

import type {
  CaseView,
  LedgerVerifyView,
  Operator,
  WorkflowLedgerView,
  WorkflowView,
} from "./types.js";

export class ApiError extends Error {
  constructor(public status: number, public detail: string) {
    // Server-side refusals (NotAuthorised, DuplicateReviewer, ...) are
    // rendered verbatim, so keep the detail intact.
    super(detail);
  }
}

export class ApiClient {
  constructor(private baseUrl: string, private fetchImpl: typeof fetch = fetch) {}

  operatorId: string | null = null;

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const headers: Record<string, string> = {
      "Content-Type": "application/json",
      ...((init?.headers as Record<string, string>) ?? {}),
    };
    if (this.operatorId) headers["X-Operator-ID"] = this.operatorId;
    const response = await this.fetchImpl(this.baseUrl + path, { ...init, headers });
    const text = await response.text();
    const body = text ? JSON.parse(text) : null;
    if (!response.ok) {
      throw new ApiError(response.status, body?.detail ?? response.statusText);
    }
    return body as T;
  }

  health(): Promise<{ ok: boolean; now: string; ledgerEntries: number }> {
    return this.request("/api/health");
  }

  operators(): Promise<Operator[]> {
    return this.request("/api/operators");
  }

  openCases(): Promise<CaseView[]> {
    return this.request("/api/cases?state=open");
  }

  allCases(): Promise<CaseView[]> {
    return this.request("/api/cases?state=all");
  }

  getCase(caseId: string): Promise<CaseView> {
    return this.request(`/api/cases/${caseId}`);
  }

  submitReview(
    caseId: string,
    decision: "approve" | "reject" | "modify",
    options: { payload?: Record<string, unknown>; justification?: string } = {},
  ): Promise<CaseView> {
    return this.request(`/api/cases/${caseId}/review`, {
      method: "POST",
      body: JSON.stringify({
        decision,
        payload: options.payload ?? null,
        justification: options.justification ?? "",
        viewedRationale: true,
      }),
    });
  }

  submitOverride(
    caseId: string,
    direction: "force-proceed" | "force-halt",
    justification: string,
  ): Promise<CaseView> {
    return this.request(`/api/cases/${caseId}/override`, {
      method: "POST",
      body: JSON.stringify({ direction, justification }),
    });
  }

  workflow(workflowId: string): Promise<WorkflowView> {
    return this.request(`/api/workflows/${workflowId}`);
  }

  workflowLedger(workflowId: string): Promise<WorkflowLedgerView> {
    return this.request(`/api/workflows/${workflowId}/ledger`);
  }

  verifyLedger(): Promise<LedgerVerifyView> {
    return this.request("/api/ledger/verify");
  }

  metrics(): Promise<Record<string, unknown>> {
    return this.request("/api/metrics");
  }
}
