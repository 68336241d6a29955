// Wire types mirroring the control-plane HTTP API, field for field.

export interface Operator {
  operatorID: string;
  displayName: string;
  roles: string[];
  credentialRef: string;
}

export interface ReviewDecision {
  caseID: string;
  operatorID: string;
  decision: "approve" | "reject" | "modify" | "override";
  decidedAt: string;
  viewedRationale: boolean;
  payload: Record<string, unknown> | null;
  direction: "force-proceed" | "force-halt" | null;
  justification: string;
}

export interface EvidenceRef {
  kind: string;
  detail?: string;
  field?: string;
  value?: unknown;
  unit?: string;
  ruleID?: string;
  entity?: string;
  nodeID?: string;
  sequence?: number;
}

export interface Rationale {
  rationaleID: string;
  claim: string;
  evidence: EvidenceRef[];
  confidence: number;
  uncertainty: string[];
  policyContext: Record<string, unknown>;
  guidelineRefs: GuidelineRef[];
}

export interface GuidelineRef {
  assetID: string;
  label: string;
  version: string;
  activeSince: string;
}

export interface CaseView {
  caseID: string;
  workflowRef: string;
  rationaleID: string;
  rationale: Rationale;
  requiredApprovals: 1 | 2;
  requiredRole: string;
  openedAt: string;
  state: "open" | "partially-approved" | "approved" | "rejected" | "overridden" | "expired";
  reviews: ReviewDecision[];
  deadline: string | null;
  overrideDirection: "force-proceed" | "force-halt" | null;
  serverNow: string;
  workflowState: string | null;
}

export interface TraceStep {
  step: string;
  outcome: string;
  at: string;
}

export interface WorkflowView {
  workflowID: string;
  messageID: string;
  state: string;
  pipelineTrace: TraceStep[];
  pinnedVersions: Record<string, Record<string, unknown>>;
  caseID: string | null;
  routedTo: string | null;
  usedFallback: boolean;
  terminalReason: string;
  rationale: Rationale | null;
  stepRefs: number[];
}

export interface LedgerEntryView {
  sequence: number;
  prevHash: string;
  payloadHash: string;
  entryHash: string;
  signature: string;
  eventType: string;
  actor: string;
  timestamp: string;
  payload: Record<string, unknown>;
}

export interface WorkflowLedgerView {
  tampered: boolean;
  detail?: string;
  entries: LedgerEntryView[];
  edges: [number, number][];
}

export interface LedgerVerifyView {
  ok: boolean;
  entries: number;
  firstBadSequence?: number;
  reason?: string;
  scans: Record<string, string[]>;
}
