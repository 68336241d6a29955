import type { CaseView, Rationale, WorkflowLedgerView, WorkflowView } from "../src/types.js";

export function sepsisRationale(): Rationale {
  return {
    rationaleID: "rat-000001",
    claim: "Patient at elevated sepsis risk",
    evidence: [
      { kind: "payload-field", field: "lactateValue", value: 2.8, unit: "mmol/L",
        detail: "lactateValue = 2.8 mmol/L" },
      { kind: "payload-field", field: "respiratoryRate", value: 24, unit: "breaths/min",
        detail: "respiratoryRate = 24 breaths/min" },
      { kind: "rule", ruleID: "sep-001-lactate", detail: "lactate > 2 mmol/L" },
      { kind: "rule", ruleID: "sep-002-respiratory", detail: "sustained respiratory rate > 22" },
      { kind: "kg-node", entity: "sepsis-pathway", nodeID: "sepsis-pathway",
        detail: "grounded to sepsis-pathway" },
      { kind: "ledger", sequence: 41, detail: "anchored step at sequence 41" },
    ],
    confidence: 0.87,
    uncertainty: ["Two supportive signs present; immune markers conflicting"],
    policyContext: {
      policyVersions: { "clinical-governance": 1 },
      verdict: "escalate",
      violations: [{ ruleID: "sepsis-review", observed: "sepsis-alert", class: "escalate" }],
      firedRules: ["sep-001-lactate", "sep-002-respiratory"],
    },
    guidelineRefs: [
      { assetID: "sepsis-protocol", label: "sepsis protocol", version: "2.3",
        activeSince: "2024-11-01T00:00:00+00:00" },
    ],
  };
}

export function dualCase(overrides: Partial<CaseView> = {}): CaseView {
  return {
    caseID: "case-000002",
    workflowRef: "wf-000002",
    rationaleID: "rat-000002",
    rationale: sepsisRationale(),
    requiredApprovals: 2,
    requiredRole: "clinician",
    openedAt: "2024-11-24T15:00:00+00:00",
    state: "open",
    reviews: [],
    deadline: null,
    overrideDirection: null,
    serverNow: "2024-11-24T15:12:30+00:00",
    workflowState: "blocked-on-review",
    ...overrides,
  };
}

export function singleCase(overrides: Partial<CaseView> = {}): CaseView {
  return dualCase({
    caseID: "case-000001",
    workflowRef: "wf-000001",
    requiredApprovals: 1,
    deadline: "2024-11-24T16:00:00+00:00",
    ...overrides,
  });
}

export function approvedByAlice(): CaseView {
  return dualCase({
    state: "partially-approved",
    reviews: [
      {
        caseID: "case-000002",
        operatorID: "alice",
        decision: "approve",
        decidedAt: "2024-11-24T15:05:00+00:00",
        viewedRationale: true,
        payload: null,
        direction: null,
        justification: "",
      },
    ],
  });
}

export function workflowView(): WorkflowView {
  return {
    workflowID: "wf-000002",
    messageID: "msg-anticoag-001",
    state: "completed",
    pipelineTrace: [
      { step: "validation", outcome: "accepted", at: "2024-11-24T15:00:00.050000+00:00" },
      { step: "mediation", outcome: "pass", at: "2024-11-24T15:00:00.100000+00:00" },
      { step: "policy", outcome: "escalate", at: "2024-11-24T15:00:00.150000+00:00" },
      { step: "epistemic", outcome: "proceed", at: "2024-11-24T15:00:00.200000+00:00" },
      { step: "hitl", outcome: "case-opened", at: "2024-11-24T15:00:00.250000+00:00" },
      { step: "hitl", outcome: "approved", at: "2024-11-24T15:10:00+00:00" },
      { step: "anchoring", outcome: "anchored", at: "2024-11-24T15:10:00.050000+00:00" },
      { step: "routing", outcome: "delivered-to-pharmacy", at: "2024-11-24T15:10:00.100000+00:00" },
    ],
    pinnedVersions: { assets: { "sepsis-protocol": "2.3" }, policies: { "clinical-governance": 1 } },
    caseID: "case-000002",
    routedTo: "pharmacy",
    usedFallback: false,
    terminalReason: "",
    rationale: sepsisRationale(),
    stepRefs: [40, 41, 42, 43],
  };
}

export function cleanLedgerView(): WorkflowLedgerView {
  return {
    tampered: false,
    entries: [
      {
        sequence: 40,
        prevHash: "a".repeat(64),
        payloadHash: "b".repeat(64),
        entryHash: "c".repeat(64),
        signature: "d".repeat(64),
        eventType: "message-validated",
        actor: "clinical-support",
        timestamp: "2024-11-24T15:00:00.050000+00:00",
        payload: { workflowID: "wf-000002", outcome: "accepted" },
      },
      {
        sequence: 44,
        prevHash: "c".repeat(64),
        payloadHash: "e".repeat(64),
        entryHash: "f".repeat(64),
        signature: "0".repeat(64),
        eventType: "routing",
        actor: "control-plane",
        timestamp: "2024-11-24T15:10:00.100000+00:00",
        payload: { workflowID: "wf-000002", target: "pharmacy", fallback: false },
      },
    ],
    edges: [[40, 44]],
  };
}

export function tamperedLedgerView(): WorkflowLedgerView {
  return {
    tampered: true,
    detail: "entry 17: payload-hash-mismatch",
    entries: [],
    edges: [],
  };
}
