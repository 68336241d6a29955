// Derived display state. Pure functions over server responses: the console
// holds no authority of its own, so everything here is presentation math.

import type { CaseView } from "./types.js";

export function distinctApprovers(view: CaseView): string[] {
  const seen = new Set<string>();
  for (const review of view.reviews) {
    if (review.decision === "approve") seen.add(review.operatorID);
  }
  return [...seen];
}

export function approvalsRemaining(view: CaseView): number {
  return Math.max(0, view.requiredApprovals - distinctApprovers(view).length);
}

export function timeOpenSeconds(view: CaseView): number {
  // serverNow comes with every case payload so staleness is the server's
  // clock, never the browser's.
  const opened = Date.parse(view.openedAt);
  const now = Date.parse(view.serverNow);
  return Math.max(0, Math.round((now - opened) / 1000));
}

export function formatDuration(seconds: number): string {
  if (seconds < 60) return `${seconds}s`;
  if (seconds < 3600) return `${Math.floor(seconds / 60)}m ${seconds % 60}s`;
  return `${Math.floor(seconds / 3600)}h ${Math.floor((seconds % 3600) / 60)}m`;
}

export interface ActionPermission {
  allowed: boolean;
  reason: string;
}

const OPEN_STATES = new Set(["open", "partially-approved"]);

export function canDecide(view: CaseView, operatorId: string | null): ActionPermission {
  if (!operatorId) {
    return { allowed: false, reason: "select an operator profile first" };
  }
  if (!OPEN_STATES.has(view.state)) {
    return { allowed: false, reason: `case is ${view.state}` };
  }
  if (view.reviews.some((r) => r.operatorID === operatorId)) {
    return {
      allowed: false,
      reason: "you already decided this case; a second distinct reviewer must co-sign",
    };
  }
  return { allowed: true, reason: "" };
}

// Deadline first (earliest due at the top), then age. The server sends the
// queue in this order already; sorting again keeps rendering stable even if
// entries arrive from different fetches.
export function sortQueue(cases: CaseView[]): CaseView[] {
  return [...cases].sort((a, b) => {
    if (a.deadline !== null && b.deadline === null) return -1;
    if (a.deadline === null && b.deadline !== null) return 1;
    if (a.deadline !== null && b.deadline !== null && a.deadline !== b.deadline) {
      return a.deadline < b.deadline ? -1 : 1;
    }
    return a.openedAt < b.openedAt ? -1 : a.openedAt > b.openedAt ? 1 : 0;
  });
}

// The operator's courses of action, shown next to the recommendation.
export function alternativeOptions(view: CaseView): string[] {
  const options: string[] = [];
  if (approvalsRemaining(view) > 1) {
    options.push("approve (first of two required co-signatures)");
  } else if (OPEN_STATES.has(view.state)) {
    options.push("approve the recommendation");
  }
  options.push("reject the recommendation");
  options.push("modify the payload (re-enters validation and policy checks)");
  options.push("override: force-proceed or force-halt (requires justification)");
  return options;
}

export function isDualControl(view: CaseView): boolean {
  return view.requiredApprovals === 2;
}
