// Browser bootstrap: hash routing, polling, and event delegation. State is
// whatever the server last returned; the UI never renders optimistically.

import { ApiClient, ApiError } from "./api.js";
import {
  caseScreen,
  connectivityBanner,
  notFoundScreen,
  operatorPicker,
  queueScreen,
  serverErrorBanner,
  traceScreen,
} from "./render.js";
import type { CaseView, Operator } from "./types.js";

const POLL_INTERVAL_MS = Number(
  new URLSearchParams(window.location.search).get("poll") ?? "2000",
);

const api = new ApiClient("");

let operators: Operator[] = [];
let lastError: string | null = null;
let currentCase: CaseView | null = null;

function root(): HTMLElement {
  return document.getElementById("app")!;
}

function headerHtml(): string {
  return `<header>
    <h1>Review console</h1>
    ${operatorPicker(operators, api.operatorId)}
    <nav><a href="#/">queue</a> · <a href="#/verify">ledger check</a></nav>
  </header>
  ${lastError ? connectivityBanner(lastError) : ""}`;
}

async function renderRoute(): Promise<void> {
  const hash = window.location.hash || "#/";
  try {
    if (hash.startsWith("#/case/")) {
      const caseId = hash.slice("#/case/".length);
      try {
        currentCase = await api.getCase(caseId);
        root().innerHTML = headerHtml() + caseScreen(currentCase, api.operatorId);
      } catch (err) {
        if (err instanceof ApiError && err.status === 404) {
          root().innerHTML = headerHtml() + notFoundScreen(`no case ${caseId}`);
        } else throw err;
      }
    } else if (hash.startsWith("#/trace/")) {
      const workflowId = hash.slice("#/trace/".length);
      try {
        const [workflow, ledger] = await Promise.all([
          api.workflow(workflowId),
          api.workflowLedger(workflowId),
        ]);
        root().innerHTML = headerHtml() + traceScreen(workflow, ledger);
      } catch (err) {
        if (err instanceof ApiError && err.status === 404) {
          root().innerHTML = headerHtml() + notFoundScreen(`no workflow ${workflowId}`);
        } else throw err;
      }
    } else if (hash === "#/verify") {
      const result = await api.verifyLedger();
      root().innerHTML =
        headerHtml() +
        `<pre data-testid="verify-result">${JSON.stringify(result, null, 2)}</pre>`;
    } else {
      const cases = await api.openCases();
      root().innerHTML = headerHtml() + queueScreen(cases);
    }
    lastError = null;
  } catch (err) {
    lastError = err instanceof Error ? err.message : String(err);
    root().innerHTML = headerHtml();
  }
}

async function handleAction(target: HTMLElement): Promise<void> {
  const action = target.dataset.action;
  if (!action) return;
  if (action === "open-case") {
    const row = target.closest("[data-case]") as HTMLElement | null;
    if (row?.dataset.case) window.location.hash = `#/case/${row.dataset.case}`;
    return;
  }
  const caseId = (target.closest("[data-case]") as HTMLElement | null)?.dataset.case;
  if (!caseId) return;
  const field = (name: string): string =>
    (root().querySelector(`[data-field="${name}"]`) as HTMLTextAreaElement | null)?.value ?? "";
  try {
    if (action === "approve") {
      currentCase = await api.submitReview(caseId, "approve");
    } else if (action === "reject") {
      currentCase = await api.submitReview(caseId, "reject");
    } else if (action === "modify") {
      currentCase = await api.submitReview(caseId, "modify", {
        payload: JSON.parse(field("modify-payload") || "{}"),
      });
    } else if (action === "override-proceed" || action === "override-halt") {
      const justification = field("override-justification");
      if (!justification.trim()) {
        // Blocked client-side; the server enforces the same rule.
        root()
          .querySelector('[data-testid="actions"]')!
          .insertAdjacentHTML("afterbegin", serverErrorBanner("justification is required"));
        return;
      }
      const direction = action === "override-proceed" ? "force-proceed" : "force-halt";
      currentCase = await api.submitOverride(caseId, direction, justification);
    } else {
      return;
    }
    root().innerHTML = headerHtml() + caseScreen(currentCase, api.operatorId);
  } catch (err) {
    const detail = err instanceof ApiError ? err.detail : String(err);
    root()
      .querySelector('[data-testid="actions"]')
      ?.insertAdjacentHTML("afterbegin", serverErrorBanner(detail));
  }
}

export async function start(): Promise<void> {
  operators = await api.operators().catch(() => []);
  document.addEventListener("click", (event) => {
    const target = event.target as HTMLElement;
    void handleAction(target);
  });
  document.addEventListener("change", (event) => {
    const target = event.target as HTMLSelectElement;
    if (target.dataset.action === "select-operator") {
      api.operatorId = target.value || null;
      void renderRoute();
    }
  });
  window.addEventListener("hashchange", () => void renderRoute());
  await renderRoute();
  setInterval(() => {
    // Only the queue auto-refreshes; decision screens re-render on action.
    if ((window.location.hash || "#/") === "#/") void renderRoute();
  }, POLL_INTERVAL_MS);
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  void start();
}
