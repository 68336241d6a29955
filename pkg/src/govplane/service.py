"""HTTP/JSON service surface.

Exposes the review queue, case actions (approve / reject / modify /
override), workflow traces, ledger access, metrics, and the governance
write operations used by the CLI. The review console is a stateless client
of exactly these endpoints; all governance logic stays server-side.
"""

from __future__ import annotations

from pathlib import Path
from typing import Any, Optional

from fastapi import FastAPI, Header, HTTPException
from fastapi.responses import RedirectResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .authz import NotAuthorised, UnknownOperator
from .epistemic import EpistemicError
from .evolution import EvolutionError
from .harness import GovernedSystem, run_all_scans
from .hitl import CaseClosed, DuplicateReviewer, EmptyJustification, HitlError, UnknownCaseID
from .ledger import TamperedRange
from .policy import PolicyError, UnknownVersion
from .registry import RegistryError
from .semantic import MessageEnvelope, SemanticError


class ReviewBody(BaseModel):
    decision: str
    payload: Optional[dict[str, Any]] = None
    justification: str = ""
    viewedRationale: bool = True


class OverrideBody(BaseModel):
    direction: str
    justification: str


class EnvelopeBody(BaseModel):
    envelope: dict[str, Any]


class ActivateBody(BaseModel):
    version: int


class ProposalBody(BaseModel):
    targetAssetID: str
    changeSet: list[dict[str, Any]]
    evidence: str
    sourceGapID: Optional[str] = None


class AdvanceBody(BaseModel):
    stage: str
    artifact: dict[str, Any] = {}


class RollbackBody(BaseModel):
    toVersion: str
    reason: str


def case_view(system: GovernedSystem, case) -> dict[str, Any]:
    view = case.to_json()
    now = system.clock.now_iso()
    view["serverNow"] = now
    wf = system.control.workflows.get(case.workflow_ref)
    view["workflowState"] = wf.state if wf else None
    return view


def create_app(system: GovernedSystem, console_dist: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="orchestration control plane", version="0.1.0")

    def operator_from(header_value: Optional[str]) -> str:
        if not header_value:
            raise HTTPException(status_code=401, detail="X-Operator-ID header required")
        try:
            system.role_table.operator(header_value)
        except UnknownOperator:
            raise HTTPException(status_code=401, detail=f"unknown operator {header_value!r}")
        return header_value

    def translate(exc: Exception) -> HTTPException:
        if isinstance(exc, (UnknownCaseID, UnknownVersion)):
            return HTTPException(status_code=404, detail=str(exc))
        if isinstance(exc, NotAuthorised):
            return HTTPException(status_code=403, detail=f"NotAuthorised: {exc}")
        if isinstance(exc, DuplicateReviewer):
            return HTTPException(status_code=409, detail=f"DuplicateReviewer: {exc}")
        if isinstance(exc, CaseClosed):
            return HTTPException(status_code=409, detail=f"CaseClosed: {exc}")
        if isinstance(exc, EmptyJustification):
            return HTTPException(status_code=422, detail=f"EmptyJustification: {exc}")
        if isinstance(exc, (HitlError, PolicyError, SemanticError, EvolutionError,
                            RegistryError, EpistemicError, ValueError)):
            return HTTPException(status_code=422, detail=str(exc))
        return HTTPException(status_code=500, detail=str(exc))

    @app.get("/api/health")
    def health() -> dict[str, Any]:
        return {"ok": True, "now": system.clock.now_iso(), "ledgerEntries": len(system.ledger)}

    @app.get("/api/operators")
    def operators() -> list[dict[str, Any]]:
        return [op.to_json() for op in system.role_table.operators()]

    @app.get("/api/cases")
    def cases(state: str = "open") -> list[dict[str, Any]]:
        if state == "open":
            selected = system.gateway.queue()
        else:
            selected = [c for c in system.gateway.cases() if state in ("all", c.state)]
        return [case_view(system, c) for c in selected]

    @app.get("/api/cases/{case_id}")
    def get_case(case_id: str) -> dict[str, Any]:
        try:
            return case_view(system, system.gateway.case(case_id))
        except UnknownCaseID as exc:
            raise translate(exc)

    @app.post("/api/cases/{case_id}/review")
    def review(case_id: str, body: ReviewBody,
               x_operator_id: Optional[str] = Header(default=None)) -> dict[str, Any]:
        operator = operator_from(x_operator_id)
        try:
            case = system.gateway.submit_review(
                case_id, operator, body.decision, payload=body.payload,
                justification=body.justification, viewed_rationale=body.viewedRationale)
        except Exception as exc:
            raise translate(exc)
        system.control.pump()
        return case_view(system, case)

    @app.post("/api/cases/{case_id}/override")
    def override(case_id: str, body: OverrideBody,
                 x_operator_id: Optional[str] = Header(default=None)) -> dict[str, Any]:
        operator = operator_from(x_operator_id)
        try:
            case = system.gateway.override(case_id, operator, body.direction,
                                           body.justification)
        except Exception as exc:
            raise translate(exc)
        system.control.pump()
        return case_view(system, case)

    @app.post("/api/envelopes")
    def submit_envelope(body: EnvelopeBody) -> dict[str, Any]:
        try:
            envelope = MessageEnvelope.from_json(body.envelope)
            wf = system.control.dispatch(envelope)
        except Exception as exc:
            raise translate(exc)
        system.control.pump()
        return wf.to_json()

    @app.get("/api/workflows")
    def workflows() -> list[dict[str, Any]]:
        return [wf.to_json() for wf in system.control.workflows.values()]

    @app.get("/api/workflows/{workflow_id}")
    def workflow(workflow_id: str) -> dict[str, Any]:
        wf = system.control.workflows.get(workflow_id)
        if wf is None:
            raise HTTPException(status_code=404, detail=f"no workflow {workflow_id!r}")
        return wf.to_json()

    @app.get("/api/workflows/{workflow_id}/ledger")
    def workflow_ledger(workflow_id: str) -> dict[str, Any]:
        try:
            lineage = system.ledger.lineage(workflow_id)
        except TamperedRange as exc:
            return {"tampered": True, "detail": str(exc), "entries": []}
        return {"tampered": False,
                "entries": [e.to_record() for e in lineage.entries],
                "edges": lineage.edges}

    @app.get("/api/ledger/verify")
    def ledger_verify() -> dict[str, Any]:
        result = system.ledger.verify()
        out: dict[str, Any] = {"ok": result.ok, "entries": len(system.ledger)}
        if not result.ok:
            out["firstBadSequence"] = result.first_bad_sequence
            out["reason"] = result.reason
        out["scans"] = run_all_scans(system.ledger.entries()) if result.ok else {}
        return out

    @app.get("/api/metrics")
    def metrics() -> dict[str, Any]:
        return system.control.telemetry.snapshot()

    @app.post("/api/policies/{policy_id}/activate")
    def activate_policy(policy_id: str, body: ActivateBody,
                        x_operator_id: Optional[str] = Header(default=None)) -> dict[str, Any]:
        operator = operator_from(x_operator_id)
        try:
            record = system.policy_engine.activate_policy(policy_id, body.version, operator)
        except Exception as exc:
            raise translate(exc)
        return {"policyID": record.policy_id, "version": record.version,
                "retiredVersion": record.retired_version}

    @app.get("/api/registry/assets/{asset_id}")
    def asset_history(asset_id: str) -> dict[str, Any]:
        records = system.registry.versions(asset_id)
        if not records:
            raise HTTPException(status_code=404, detail=f"no asset {asset_id!r}")
        return {"assetID": asset_id,
                "versions": [r.to_json() for r in records],
                "deployed": system.registry.deployed_version(asset_id)}

    @app.post("/api/registry/assets/{asset_id}/rollback")
    def rollback(asset_id: str, body: RollbackBody,
                 x_operator_id: Optional[str] = Header(default=None)) -> dict[str, Any]:
        operator = operator_from(x_operator_id)
        try:
            entry = system.registry.rollback(asset_id, body.toVersion, operator, body.reason)
        except Exception as exc:
            raise translate(exc)
        return {"assetID": asset_id, "deployed": body.toVersion, "sequence": entry.sequence}

    @app.get("/api/registry/snapshot")
    def snapshot(at: Optional[str] = None) -> dict[str, Any]:
        try:
            instant = at or system.clock.now_iso()
            return system.registry.snapshot_at(instant).to_json()
        except Exception as exc:
            raise translate(exc)

    @app.post("/api/proposals")
    def propose(body: ProposalBody,
                x_operator_id: Optional[str] = Header(default=None)) -> dict[str, Any]:
        operator = operator_from(x_operator_id)
        try:
            proposal = system.evolution.propose(body.targetAssetID, body.changeSet,
                                                body.evidence, actor=operator,
                                                source_gap_id=body.sourceGapID)
        except Exception as exc:
            raise translate(exc)
        return proposal.to_json()

    @app.get("/api/proposals")
    def proposals() -> list[dict[str, Any]]:
        return [p.to_json() for p in system.evolution.proposals()]

    @app.get("/api/proposals/{proposal_id}")
    def proposal(proposal_id: str) -> dict[str, Any]:
        try:
            return system.evolution.proposal(proposal_id).to_json()
        except Exception as exc:
            raise translate(exc)

    @app.post("/api/proposals/{proposal_id}/advance")
    def advance(proposal_id: str, body: AdvanceBody,
                x_operator_id: Optional[str] = Header(default=None)) -> dict[str, Any]:
        operator = operator_from(x_operator_id)
        try:
            proposal = system.evolution.advance(proposal_id, body.stage, operator,
                                                body.artifact)
        except Exception as exc:
            raise translate(exc)
        return proposal.to_json()

    if console_dist is not None and Path(console_dist).exists():
        dist = Path(console_dist)

        @app.get("/")
        def index() -> RedirectResponse:
            return RedirectResponse(url="/console/")

        app.mount("/console", StaticFiles(directory=dist, html=True), name="console")

    return app
