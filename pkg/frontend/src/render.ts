// Pure renderers: state in, HTML string out. All of the console's screens
// are built from these, which keeps them snapshot-testable without a DOM.

import type {
  CaseView,
  LedgerEntryView,
  Operator,
  Rationale,
  WorkflowLedgerView,
  WorkflowView,
} from "./types.js";
import {
  alternativeOptions,
  approvalsRemaining,
  canDecide,
  formatDuration,
  isDualControl,
  sortQueue,
  timeOpenSeconds,
} from "./state.js";

export function esc(value: unknown): string {
  return String(value)
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function connectivityBanner(error: string): string {
  return `<div class="banner banner-error" data-testid="connectivity-banner">
    API unreachable: ${esc(error)} — displayed data may be stale.</div>`;
}

export function serverErrorBanner(detail: string): string {
  return `<div class="banner banner-error" data-testid="server-error">${esc(detail)}</div>`;
}

export function tamperBanner(detail: string): string {
  return `<div class="banner banner-tamper" data-testid="tamper-banner">
    LEDGER TAMPER DETECTED: ${esc(detail)}</div>`;
}

export function operatorPicker(operators: Operator[], selected: string | null): string {
  const options = operators
    .map(
      (op) =>
        `<option value="${esc(op.operatorID)}"${op.operatorID === selected ? " selected" : ""}>
          ${esc(op.displayName)} (${esc(op.roles.join(", "))})</option>`,
    )
    .join("");
  return `<label class="operator-picker">Operator profile
    <select data-action="select-operator">
      <option value="">— choose —</option>${options}
    </select></label>`;
}

export function queueScreen(cases: CaseView[]): string {
  if (cases.length === 0) {
    return `<section class="queue" data-testid="queue">
      <h2>Review queue</h2>
      <p class="empty-state" data-testid="empty-queue">No open cases. New escalations
      appear here automatically.</p></section>`;
  }
  const rows = sortQueue(cases).map(queueRow).join("");
  return `<section class="queue" data-testid="queue">
    <h2>Review queue (${cases.length})</h2>
    <table><thead><tr>
      <th>case</th><th>workflow</th><th>claim</th><th>state</th>
      <th>approvals</th><th>role</th><th>open for</th><th>deadline</th>
    </tr></thead><tbody>${rows}</tbody></table></section>`;
}

function queueRow(view: CaseView): string {
  const dual = isDualControl(view)
    ? `<span class="badge badge-dual" data-testid="dual-badge">dual control</span>`
    : "";
  const approvals = `${view.requiredApprovals - approvalsRemaining(view)}/${view.requiredApprovals}`;
  return `<tr data-case="${esc(view.caseID)}" data-action="open-case">
    <td>${esc(view.caseID)} ${dual}</td>
    <td>${esc(view.workflowRef)}</td>
    <td>${esc(view.rationale.claim)}</td>
    <td><span class="chip chip-${esc(view.state)}">${esc(view.state)}</span></td>
    <td><span class="badge badge-approvals">${approvals}</span></td>
    <td>${esc(view.requiredRole)}</td>
    <td>${esc(formatDuration(timeOpenSeconds(view)))}</td>
    <td>${view.deadline ? esc(view.deadline) : "—"}</td></tr>`;
}

// All six rationale groups render for every escalated case; none may be
// hidden: claim, evidence, confidence, uncertainty, policy context,
// guideline references.
export function rationalePanel(rationale: Rationale): string {
  const evidence = rationale.evidence.length
    ? rationale.evidence
        .map((e) => `<li class="evidence-${esc(e.kind)}">${esc(e.detail ?? JSON.stringify(e))}</li>`)
        .join("")
    : "<li>none recorded</li>";
  const uncertainty = rationale.uncertainty.length
    ? rationale.uncertainty.map((u) => `<li>${esc(u)}</li>`).join("")
    : "<li>no uncertainty signals</li>";
  const guidelines = rationale.guidelineRefs.length
    ? rationale.guidelineRefs
        .map(
          (g) =>
            `<li>${esc(g.label)} version ${esc(g.version)}
             (active since ${esc(g.activeSince || "seed")})</li>`,
        )
        .join("")
    : "<li>none</li>";
  return `<div class="rationale" data-testid="rationale">
    <section data-group="claim"><h4>Claim</h4>
      <p>${esc(rationale.claim)}</p></section>
    <section data-group="evidence"><h4>Evidence</h4>
      <ul>${evidence}</ul></section>
    <section data-group="confidence"><h4>Confidence</h4>
      <p><meter min="0" max="1" value="${rationale.confidence}"></meter>
      ${rationale.confidence.toFixed(2)}</p></section>
    <section data-group="uncertainty"><h4>Uncertainty</h4>
      <ul>${uncertainty}</ul></section>
    <section data-group="policy-context"><h4>Policy context</h4>
      <pre>${esc(JSON.stringify(rationale.policyContext, null, 2))}</pre></section>
    <section data-group="guidelines"><h4>Guideline references</h4>
      <ul>${guidelines}</ul></section>
  </div>`;
}

export function caseScreen(view: CaseView, operatorId: string | null): string {
  const permission = canDecide(view, operatorId);
  const disabled = permission.allowed ? "" : " disabled";
  const reason = permission.allowed
    ? ""
    : `<p class="decide-reason" data-testid="decide-disabled-reason">${esc(permission.reason)}</p>`;
  const reviews = view.reviews.length
    ? view.reviews
        .map(
          (r) =>
            `<li>${esc(r.operatorID)} — ${esc(r.decision)}${
              r.direction ? ` (${esc(r.direction)})` : ""
            } at ${esc(r.decidedAt)}</li>`,
        )
        .join("")
    : "<li>no decisions yet</li>";
  const alternatives = alternativeOptions(view)
    .map((o) => `<li>${esc(o)}</li>`)
    .join("");
  return `<section class="case" data-testid="case-screen" data-case="${esc(view.caseID)}">
    <h2>${esc(view.caseID)}
      <span class="chip chip-${esc(view.state)}" data-testid="state-chip">${esc(view.state)}</span>
      ${isDualControl(view) ? '<span class="badge badge-dual">dual control</span>' : ""}
    </h2>
    <p>workflow <a href="#/trace/${esc(view.workflowRef)}">${esc(view.workflowRef)}</a>
      · requires ${view.requiredApprovals} approval(s) from ${esc(view.requiredRole)}
      · ${approvalsRemaining(view)} remaining
      · open for ${esc(formatDuration(timeOpenSeconds(view)))}</p>
    ${rationalePanel(view.rationale)}
    <section data-group="alternatives"><h4>Alternative options</h4>
      <ul>${alternatives}</ul></section>
    <section class="reviews"><h4>Decisions so far</h4><ul>${reviews}</ul></section>
    <section class="actions" data-testid="actions">
      ${reason}
      <button data-action="approve"${disabled}>Approve</button>
      <button data-action="reject"${disabled}>Reject</button>
      <details><summary>Modify payload</summary>
        <textarea data-field="modify-payload" rows="6"></textarea>
        <button data-action="modify"${disabled}>Submit modification</button>
      </details>
      <details><summary>Override</summary>
        <label>Justification (required)
          <textarea data-field="override-justification" rows="2"></textarea></label>
        <button data-action="override-proceed">Force proceed</button>
        <button data-action="override-halt">Force halt</button>
      </details>
    </section>
  </section>`;
}

export function traceScreen(workflow: WorkflowView, ledger: WorkflowLedgerView): string {
  const banner = ledger.tampered ? tamperBanner(ledger.detail ?? "verification failed") : "";
  const steps = workflow.pipelineTrace
    .map(
      (s) =>
        `<li class="trace-step"><span class="step-name">${esc(s.step)}</span>
         → ${esc(s.outcome)} <time>${esc(s.at)}</time></li>`,
    )
    .join("");
  const entries = ledger.entries.map(ledgerRow).join("");
  return `<section class="trace" data-testid="trace-browser">
    ${banner}
    <h2>Workflow ${esc(workflow.workflowID)}
      <span class="chip chip-${esc(workflow.state)}">${esc(workflow.state)}</span></h2>
    <p>message ${esc(workflow.messageID)}
      ${workflow.routedTo ? `· routed to ${esc(workflow.routedTo)}${workflow.usedFallback ? " (fallback)" : ""}` : ""}
      ${workflow.terminalReason ? `· ${esc(workflow.terminalReason)}` : ""}</p>
    <h3>Pipeline trace</h3><ol class="pipeline">${steps}</ol>
    ${workflow.rationale ? rationalePanel(workflow.rationale) : ""}
    <h3>Ledger entries</h3>
    <table><thead><tr><th>#</th><th>at</th><th>event</th><th>actor</th><th>hash</th></tr></thead>
    <tbody>${entries}</tbody></table></section>`;
}

function ledgerRow(entry: LedgerEntryView): string {
  return `<tr><td>${entry.sequence}</td><td>${esc(entry.timestamp)}</td>
    <td>${esc(entry.eventType)}</td><td>${esc(entry.actor)}</td>
    <td><code>${esc(entry.entryHash.slice(0, 16))}…</code></td></tr>`;
}

export function notFoundScreen(what: string): string {
  return `<section class="not-found" data-testid="not-found">
    <h2>Not found</h2><p>${esc(what)}</p></section>`;
}
