import { describe, expect, it } from "vitest";

import {
  caseScreen,
  connectivityBanner,
  notFoundScreen,
  queueScreen,
  rationalePanel,
  tamperBanner,
  traceScreen,
} from "../src/render.js";
import {
  approvedByAlice,
  cleanLedgerView,
  dualCase,
  sepsisRationale,
  singleCase,
  tamperedLedgerView,
  workflowView,
} from "./fixtures.js";

const SIX_GROUPS = ["claim", "evidence", "confidence", "uncertainty",
                    "policy-context", "guidelines"];

describe("rationale completeness", () => {
  it("renders every rationale group for an escalated case", () => {
    const html = rationalePanel(sepsisRationale());
    for (const group of SIX_GROUPS) {
      expect(html).toContain(`data-group="${group}"`);
    }
    expect(html).toContain("Patient at elevated sepsis risk");
    expect(html).toContain("lactate &gt; 2 mmol/L");
    expect(html).toContain("0.87");
    expect(html).toContain("immune markers conflicting");
    expect(html).toContain("sepsis protocol");
  });

  it("matches the rationale snapshot", () => {
    expect(rationalePanel(sepsisRationale())).toMatchSnapshot();
  });

  it("renders all six groups on the case screen for every escalated fixture", () => {
    for (const fixture of [dualCase(), singleCase(), approvedByAlice()]) {
      const html = caseScreen(fixture, "bob");
      for (const group of SIX_GROUPS) {
        expect(html, `${fixture.caseID} missing ${group}`).toContain(`data-group="${group}"`);
      }
    }
  });
});

describe("queue screen", () => {
  it("shows one row per case with approval badges", () => {
    const html = queueScreen([singleCase(), dualCase(), approvedByAlice()]);
    expect(html.match(/data-action="open-case"/g)).toHaveLength(3);
    expect(html).toContain('data-testid="dual-badge"');
    expect(html).toContain("0/1");
    expect(html).toContain("1/2");
  });

  it("renders an explicit empty state", () => {
    const html = queueScreen([]);
    expect(html).toContain('data-testid="empty-queue"');
    expect(html).toContain("No open cases");
  });

  it("matches the queue snapshot", () => {
    expect(queueScreen([singleCase(), approvedByAlice()])).toMatchSnapshot();
  });
});

describe("case screen", () => {
  it("disables approval with a reason when the operator already decided", () => {
    const html = caseScreen(approvedByAlice(), "alice");
    expect(html).toContain('data-testid="decide-disabled-reason"');
    expect(html).toContain("second distinct reviewer");
    expect(html).toContain('data-action="approve" disabled');
  });

  it("enables approval for a second distinct clinician", () => {
    const html = caseScreen(approvedByAlice(), "bob");
    expect(html).not.toContain('data-action="approve" disabled');
  });

  it("shows the state chip from the server state", () => {
    const html = caseScreen(dualCase({ state: "partially-approved" }), "bob");
    expect(html).toContain('data-testid="state-chip"');
    expect(html).toContain("partially-approved");
  });

  it("matches the case screen snapshot", () => {
    expect(caseScreen(dualCase(), "bob")).toMatchSnapshot();
  });
});

describe("trace browser", () => {
  it("renders the pipeline steps in order with ledger entries", () => {
    const html = traceScreen(workflowView(), cleanLedgerView());
    const order = ["validation", "mediation", "policy", "epistemic", "hitl",
                   "anchoring", "routing"];
    let last = -1;
    for (const step of order) {
      const index = html.indexOf(`<span class="step-name">${step}</span>`);
      expect(index, `step ${step} missing`).toBeGreaterThan(last);
      last = index;
    }
    expect(html).toContain("message-validated");
    expect(html).not.toContain('data-testid="tamper-banner"');
  });

  it("shows the tamper banner with the first bad sequence", () => {
    const html = traceScreen(workflowView(), tamperedLedgerView());
    expect(html).toContain('data-testid="tamper-banner"');
    expect(html).toContain("entry 17: payload-hash-mismatch");
  });

  it("matches the trace snapshot", () => {
    expect(traceScreen(workflowView(), cleanLedgerView())).toMatchSnapshot();
  });
});

describe("banners and fallbacks", () => {
  it("connectivity banner names the failure", () => {
    const html = connectivityBanner("fetch failed");
    expect(html).toContain('data-testid="connectivity-banner"');
    expect(html).toContain("fetch failed");
  });

  it("not-found state", () => {
    expect(notFoundScreen("no workflow wf-404")).toContain("no workflow wf-404");
  });

  it("escapes hostile content", () => {
    const hostile = dualCase();
    hostile.rationale.claim = '<script>alert("x")</script>';
    const html = caseScreen(hostile, "bob");
    expect(html).not.toContain("<script>alert");
    expect(html).toContain("&lt;script&gt;");
  });

  it("tamper banner escapes detail", () => {
    expect(tamperBanner("<b>bad</b>")).toContain("&lt;b&gt;bad&lt;/b&gt;");
  });
});
