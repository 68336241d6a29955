"""Built-in scenario corpus.

Four end-to-end narratives exercise the whole pipeline: a clinical run with
escalated review gates and a dual-control anticoagulation adjustment, a
financial transfer policy run, a classifier-drift investigation, and a
module-failure containment run. Each is a plain data script, exportable to
JSON and replayable with `orchestrate run`.
"""

from __future__ import annotations

import random
from typing import Any

from .harness import GovernedSystem, ScenarioScript, SimulatedModule

CLINICIANS = ["alice", "bob", "erin", "frank"]


def standard_role_table() -> dict[str, Any]:
    return {
        "roles": {
            "clinician": ["review"],
            "senior-clinician": ["review", "override"],
            "treasury-approver": ["review", "policy-activate", "exception-grant"],
            "platform-admin": ["deploy", "rollback", "evolution-approve", "policy-activate",
                               "exception-grant"],
            "automation": ["deploy", "rollback"],
        },
        "operators": [
            {"operatorID": "alice", "displayName": "Dr. Alice Ray", "roles": ["clinician"]},
            {"operatorID": "bob", "displayName": "Dr. Bob Chen", "roles": ["clinician"]},
            {"operatorID": "carol", "displayName": "Dr. Carol Diaz",
             "roles": ["senior-clinician"]},
            {"operatorID": "erin", "displayName": "Dr. Erin Wu", "roles": ["clinician"]},
            {"operatorID": "frank", "displayName": "Dr. Frank Osei", "roles": ["clinician"]},
            {"operatorID": "dana", "displayName": "Dana Wolfe", "roles": ["treasury-approver"]},
            {"operatorID": "admin", "displayName": "Platform Admin", "roles": ["platform-admin"]},
            {"operatorID": "system-automation", "displayName": "Automation",
             "roles": ["automation"]},
        ],
    }


def clinical_ontology() -> list[list[Any]]:
    return [
        ["action-codes", "sepsis-alert", "sepsis risk alert", 0],
        ["action-codes", "anticoagulation-adjustment", "anticoagulation adjustment", 0],
        ["action-codes", "medication-request", "medication request", 0],
        ["action-codes", "lab-result", "laboratory result", 0],
        ["medication-codes", "6809", "Metformin", 0],
        ["medication-codes", "11289", "Warfarin", 0],
        ["lab-codes", "2345-4", "glucose", 0],
        ["lab-codes", "2524-7", "lactate", 0],
        ["unit-codes", "breaths/min", "breaths per minute", 0],
        ["unit-codes", "bpm", "beats per minute", 0],
    ]


def sepsis_alert_schema() -> dict[str, Any]:
    return {
        "schemaID": "sepsis-alert",
        "version": "1.0.0",
        "fields": [
            {"name": "patientID", "ftype": "string", "required": True},
            {"name": "claim", "ftype": "string", "required": True},
            {"name": "lactateValue", "ftype": "number", "required": True,
             "unitField": "lactateUnit", "allowedUnits": ["mmol/L"]},
            {"name": "lactateUnit", "ftype": "code", "required": True,
             "vocabulary": "unit-codes"},
            {"name": "respiratoryRate", "ftype": "number", "required": True,
             "unitField": "respiratoryRateUnit", "allowedUnits": ["breaths/min"]},
            {"name": "respiratoryRateUnit", "ftype": "code", "required": True,
             "vocabulary": "unit-codes"},
            {"name": "heartRateTrend", "ftype": "string"},
            {"name": "clinicalNotes", "ftype": "string"},
            {"name": "entityRefs", "ftype": "list"},
            {"name": "uncertaintyNotes", "ftype": "list"},
        ],
        "compatibleWith": [],
    }


def anticoagulation_schema() -> dict[str, Any]:
    return {
        "schemaID": "anticoagulation-adjustment",
        "version": "1.0.0",
        "fields": [
            {"name": "patientID", "ftype": "string", "required": True},
            {"name": "claim", "ftype": "string"},
            {"name": "rxnormCode", "ftype": "code", "required": True,
             "vocabulary": "medication-codes"},
            {"name": "dosageValue", "ftype": "number", "required": True,
             "unitField": "dosageUnit", "allowedUnits": ["mg", "mcg"]},
            {"name": "dosageUnit", "ftype": "code", "required": True,
             "vocabulary": "unit-codes"},
            {"name": "indication", "ftype": "string"},
            {"name": "entityRefs", "ftype": "list"},
        ],
        "compatibleWith": [],
    }


def clinical_policy() -> dict[str, Any]:
    return {
        "policyID": "clinical-governance",
        "version": 1,
        "status": "draft",
        "rules": [
            {"ruleID": "sepsis-review", "kind": "escalation-trigger", "subject": "actionType",
             "params": {"triggers": ["sepsis-alert"], "requiredApprovals": 1,
                        "requiredRole": "clinician"},
             "onViolation": "escalate"},
            {"ruleID": "anticoagulation-dual-review", "kind": "escalation-trigger",
             "subject": "actionType",
             "params": {"triggers": ["anticoagulation-adjustment"], "requiredApprovals": 2,
                        "requiredRole": "clinician"},
             "onViolation": "escalate"},
        ],
    }


def sepsis_protocol_rules() -> dict[str, Any]:
    return {
        "version": "2.3",
        "rules": [
            {"ruleID": "sep-001-lactate",
             "guard": {"op": "gt", "subject": "output.lactateValue", "value": 2},
             "effect": {"kind": "adjust-confidence", "direction": "down", "multiplier": 1.0},
             "rationale": "lactate > 2 mmol/L"},
            {"ruleID": "sep-002-respiratory",
             "guard": {"op": "gt", "subject": "output.respiratoryRate", "value": 22},
             "effect": {"kind": "adjust-confidence", "direction": "down", "multiplier": 1.0},
             "rationale": "sustained respiratory rate > 22"},
        ],
    }


def clinical_kg() -> dict[str, Any]:
    return {
        "version": "1",
        "nodes": [
            {"nodeID": "sepsis-pathway", "kind": "care-pathway"},
            {"nodeID": "warfarin", "kind": "medication"},
            {"nodeID": "metformin", "kind": "medication"},
            {"nodeID": "atrial-fibrillation", "kind": "condition"},
        ],
        "edges": [
            {"from": "warfarin", "relation": "treats", "to": "atrial-fibrillation"},
        ],
    }


def clinical_modules() -> list[dict[str, Any]]:
    return [
        {"moduleID": "clinical-support", "accepts": ["sepsis-alert"], "timeout": 5},
        {"moduleID": "care-team", "accepts": ["sepsis-alert"], "timeout": 5},
        {"moduleID": "pharmacy", "accepts": ["anticoagulation-adjustment"],
         "timeout": 5, "fallback": "manual-notification"},
        {"moduleID": "manual-notification",
         "accepts": ["anticoagulation-adjustment", "sepsis-alert"], "timeout": 5},
        {"moduleID": "laboratory", "accepts": ["lab-result"], "timeout": 5},
    ]


def sepsis_envelope(message_id: str = "msg-sepsis-001") -> dict[str, Any]:
    return {
        "messageID": message_id,
        "timestamp": "2024-11-24T14:30:00Z",
        "sourceModule": "clinical-support",
        "targetModule": "care-team",
        "actionType": {"vocabulary": "action-codes", "code": "sepsis-alert"},
        "schemaRef": {"schemaID": "sepsis-alert", "version": "1.0.0"},
        "payload": {
            "patientID": "patient-0042",
            "claim": "Patient at elevated sepsis risk",
            "lactateValue": 2.8,
            "lactateUnit": "mmol/L",
            "respiratoryRate": 24,
            "respiratoryRateUnit": "breaths/min",
            "heartRateTrend": "elevated",
            "clinicalNotes": "recent notes mention concern for infection",
            "entityRefs": ["sepsis-pathway"],
            "uncertaintyNotes": ["Two supportive signs present; immune markers conflicting"],
        },
        "confidence": 0.87,
        "provenanceRefs": [],
    }


def anticoagulation_envelope(message_id: str = "msg-anticoag-001") -> dict[str, Any]:
    return {
        "messageID": message_id,
        "timestamp": "2024-11-24T15:00:00Z",
        "sourceModule": "clinical-support",
        "targetModule": "pharmacy",
        "actionType": {"vocabulary": "action-codes", "code": "anticoagulation-adjustment"},
        "schemaRef": {"schemaID": "anticoagulation-adjustment", "version": "1.0.0"},
        "payload": {
            "patientID": "patient-0042",
            "claim": "Reduce warfarin dose following INR trend",
            "rxnormCode": "11289",
            "dosageValue": 5,
            "dosageUnit": "mg",
            "indication": "narrow therapeutic window",
            "entityRefs": ["warfarin"],
        },
        "confidence": 0.91,
        "provenanceRefs": [],
    }


def clinical_seed_assets() -> dict[str, Any]:
    return {
        "roleTable": standard_role_table(),
        "ontology": clinical_ontology(),
        "schemas": [sepsis_alert_schema(), anticoagulation_schema()],
        "policies": [{"policy": clinical_policy(), "activatedBy": "admin"}],
        "ruleSets": [{"assetID": "sepsis-protocol", "version": "2.3",
                      "label": "sepsis protocol", "owner": "clinical-governance",
                      "approver": "admin", "deployAt": "2024-11-01T00:00:00+00:00",
                      "content": sepsis_protocol_rules()}],
        "knowledgeGraphs": [{"assetID": "clinical-kg", "version": "1",
                             "label": "clinical knowledge graph",
                             "owner": "clinical-governance", "approver": "admin",
                             "content": clinical_kg()}],
        "thresholds": [{"assetID": "clinical-thresholds", "version": "1",
                        "label": "clinical escalation thresholds",
                        "owner": "clinical-governance", "approver": "admin",
                        "content": {"version": "1", "escalateBelow": 0.6, "warnBelow": 0.8}}],
        "modules": clinical_modules(),
    }


def clinical_config() -> dict[str, Any]:
    return {
        "mediationRuleSetAsset": "sepsis-protocol",
        "mediationKGAsset": "clinical-kg",
        "thresholdsAsset": "clinical-thresholds",
        "defaultRequiredRole": "clinician",
    }


def sepsis_scenario() -> ScenarioScript:
    return ScenarioScript(
        scenario_id="sepsis",
        start="2024-11-01T00:00:00+00:00",
        config=clinical_config(),
        seed_assets=clinical_seed_assets(),
        events=[
            {"at": "2024-11-24T14:30:00+00:00", "kind": "envelope",
             "envelope": sepsis_envelope()},
            {"at": "2024-11-24T14:40:00+00:00", "kind": "review",
             "case": "msg-sepsis-001", "operator": "alice", "decision": "approve"},
            {"at": "2024-11-24T15:00:00+00:00", "kind": "envelope",
             "envelope": anticoagulation_envelope()},
            {"at": "2024-11-24T15:05:00+00:00", "kind": "review",
             "case": "msg-anticoag-001", "operator": "alice", "decision": "approve"},
            {"at": "2024-11-24T15:10:00+00:00", "kind": "review",
             "case": "msg-anticoag-001", "operator": "bob", "decision": "approve"},
        ],
        expectations=[
            {"kind": "workflow-state", "message": "msg-sepsis-001", "equals": "completed"},
            {"kind": "rationale-field", "message": "msg-sepsis-001",
             "path": "claim", "equals": "Patient at elevated sepsis risk"},
            {"kind": "rationale-field", "message": "msg-sepsis-001",
             "path": "confidence", "equals": 0.87},
            {"kind": "rationale-contains", "message": "msg-sepsis-001",
             "group": "evidence", "substring": "lactate > 2 mmol/L"},
            {"kind": "rationale-contains", "message": "msg-sepsis-001",
             "group": "evidence", "substring": "sustained respiratory rate > 22"},
            {"kind": "guideline-ref", "message": "msg-sepsis-001",
             "label": "sepsis protocol", "version": "2.3",
             "activeSincePrefix": "2024-11-01"},
            {"kind": "routing-target", "message": "msg-sepsis-001", "equals": "care-team",
             "fallback": False},
            {"kind": "workflow-state", "message": "msg-anticoag-001", "equals": "completed"},
            {"kind": "routing-target", "message": "msg-anticoag-001", "equals": "pharmacy",
             "fallback": False},
            {"kind": "event-sequence", "message": "msg-anticoag-001",
             "sequence": ["message-validated", "mediation", "policy-decision",
                          "case-opened", "review", "review", "anchor", "routing"]},
            {"kind": "ledger-valid"},
            {"kind": "scan-clean"},
        ],
    )


def finance_scenario() -> ScenarioScript:
    schema = {
        "schemaID": "wire-transfer",
        "version": "1.0.0",
        "fields": [
            {"name": "amountUSD", "ftype": "number", "required": True,
             "unitField": "amountCurrency", "allowedUnits": ["USD"]},
            {"name": "amountCurrency", "ftype": "code", "required": True,
             "vocabulary": "unit-codes"},
            {"name": "destinationJurisdiction", "ftype": "string", "required": True},
            {"name": "vendorID", "ftype": "string", "required": True},
            {"name": "dailyTotalRatio", "ftype": "number", "required": True},
            {"name": "riskTier", "ftype": "string", "required": True},
            {"name": "claim", "ftype": "string"},
        ],
        "compatibleWith": [],
    }
    policy = {
        "policyID": "transfer-controls",
        "version": 1,
        "status": "draft",
        "rules": [
            {"ruleID": "amount-limit", "kind": "numeric-bound", "subject": "amountUSD",
             "params": {"max": 500000, "inclusive": True}, "onViolation": "deny"},
            {"ruleID": "approved-jurisdictions", "kind": "set-membership",
             "subject": "destinationJurisdiction",
             "params": {"allowed": ["US", "CA", "GB", "AU"]}, "onViolation": "deny"},
            {"ruleID": "transfer-authority", "kind": "actor-permission", "subject": "",
             "params": {"allowed": ["treasury"]}, "onViolation": "deny"},
            {"ruleID": "transfer-window", "kind": "temporal-window", "subject": "",
             "params": {"start": "09:00", "end": "17:00", "zone": "America/New_York"},
             "onViolation": "deny"},
            {"ruleID": "approved-vendors", "kind": "set-membership", "subject": "vendorID",
             "params": {"allowed": ["vendor-001", "vendor-002"]}, "onViolation": "deny"},
            {"ruleID": "daily-quota", "kind": "resource-quota", "subject": "dailyTotalRatio",
             "params": {"max": 1.5, "inclusive": True}, "onViolation": "deny"},
            {"ruleID": "high-risk-review", "kind": "escalation-trigger", "subject": "riskTier",
             "params": {"triggers": ["high"], "requiredApprovals": 2,
                        "requiredRole": "treasury-approver"},
             "onViolation": "escalate"},
        ],
    }

    def transfer(message_id: str, source: str, amount: float, destination: str) -> dict[str, Any]:
        return {
            "messageID": message_id,
            "timestamp": "2024-11-25T15:00:00Z",
            "sourceModule": source,
            "targetModule": "settlement-network",
            "actionType": {"vocabulary": "action-codes", "code": "wire-transfer"},
            "schemaRef": {"schemaID": "wire-transfer", "version": "1.0.0"},
            "payload": {
                "amountUSD": amount,
                "amountCurrency": "USD",
                "destinationJurisdiction": destination,
                "vendorID": "vendor-001",
                "dailyTotalRatio": 0.9,
                "riskTier": "standard",
                "claim": f"wire transfer of {amount:,.0f} USD",
            },
            "provenanceRefs": [],
        }

    return ScenarioScript(
        scenario_id="finance",
        start="2024-11-25T00:00:00+00:00",
        config={"defaultRequiredRole": "treasury-approver"},
        seed_assets={
            "roleTable": standard_role_table(),
            "ontology": [["action-codes", "wire-transfer", "wire transfer", 0],
                         ["unit-codes", "USD", "US dollars", 0]],
            "schemas": [schema],
            "policies": [{"policy": policy, "activatedBy": "admin"}],
            "modules": [
                {"moduleID": "accounts-payable", "accepts": ["wire-transfer"]},
                {"moduleID": "treasury", "accepts": ["wire-transfer"]},
                {"moduleID": "operations", "accepts": ["wire-transfer"]},
                {"moduleID": "settlement-network", "accepts": ["wire-transfer"]},
            ],
        },
        # 15:00Z on 2024-11-25 is 10:00 in New York: inside the transfer window.
        events=[
            {"at": "2024-11-25T15:00:00+00:00", "kind": "envelope",
             "envelope": transfer("msg-transfer-001", "accounts-payable", 2_300_000, "XX")},
            {"at": "2024-11-25T15:05:00+00:00", "kind": "envelope",
             "envelope": transfer("msg-transfer-002", "treasury", 500_000, "US")},
        ],
        expectations=[
            {"kind": "decision-verdict", "message": "msg-transfer-001", "equals": "deny"},
            {"kind": "violation-count", "message": "msg-transfer-001", "equals": 3,
             "ruleIDs": ["amount-limit", "approved-jurisdictions", "transfer-authority"]},
            {"kind": "event-present", "eventType": "escalation-logged",
             "message": "msg-transfer-001"},
            {"kind": "no-routing", "message": "msg-transfer-001"},
            {"kind": "workflow-state", "message": "msg-transfer-001", "equals": "cancelled"},
            {"kind": "decision-verdict", "message": "msg-transfer-002", "equals": "allow"},
            {"kind": "workflow-state", "message": "msg-transfer-002", "equals": "completed"},
            {"kind": "routing-target", "message": "msg-transfer-002",
             "equals": "settlement-network", "fallback": False},
            {"kind": "ledger-valid"},
            {"kind": "scan-clean"},
        ],
    )


def stroke_drift_scenario() -> ScenarioScript:
    schema = {
        "schemaID": "stroke-triage",
        "version": "1.0.0",
        "fields": [
            {"name": "patientID", "ftype": "string", "required": True},
            {"name": "prediction", "ftype": "string", "required": True},
            {"name": "groundTruth", "ftype": "string", "required": True},
            {"name": "claim", "ftype": "string"},
            {"name": "entityRefs", "ftype": "list"},
        ],
        "compatibleWith": [],
    }
    policy = {"policyID": "stroke-ops", "version": 1, "status": "draft", "rules": []}

    def triage(n: int, at: str, prediction: str, truth: str) -> dict[str, Any]:
        return {
            "at": at, "kind": "envelope",
            "envelope": {
                "messageID": f"msg-stroke-{n:03d}",
                "timestamp": at.replace("+00:00", "Z"),
                "sourceModule": "imaging",
                "targetModule": "care-team",
                "actionType": {"vocabulary": "action-codes", "code": "stroke-triage"},
                "schemaRef": {"schemaID": "stroke-triage", "version": "1.0.0"},
                "payload": {
                    "patientID": f"patient-{n:03d}",
                    "prediction": prediction,
                    "groundTruth": truth,
                    "claim": f"triage classification: {prediction}",
                    "entityRefs": [],
                },
                "confidence": 0.9,
                "provenanceRefs": [],
            },
        }

    events: list[dict[str, Any]] = []
    # Version 1 behaves: predictions match ground truth.
    v1_cases = [("stroke", "stroke"), ("clear", "clear"), ("stroke", "stroke"),
                ("clear", "clear"), ("clear", "clear"), ("stroke", "stroke")]
    for i, (prediction, truth) in enumerate(v1_cases):
        events.append(triage(i + 1, f"2024-11-0{i + 2}T10:00:00+00:00", prediction, truth))
    # Version 2 deployed on the 10th drifts toward false positives.
    events.append({"at": "2024-11-10T00:00:00+00:00", "kind": "deploy-asset",
                   "asset": {"assetID": "stroke-classifier", "assetKind": "model",
                             "version": "2", "label": "stroke imaging classifier",
                             "owner": "imaging-ml", "approver": "admin"}})
    v2_cases = [("stroke", "stroke"), ("stroke", "clear"), ("clear", "clear"),
                ("stroke", "clear"), ("stroke", "clear"), ("stroke", "stroke"),
                ("stroke", "clear"), ("clear", "clear")]
    for i, (prediction, truth) in enumerate(v2_cases):
        events.append(triage(i + 10, f"2024-11-1{i + 1}T10:00:00+00:00", prediction, truth))

    return ScenarioScript(
        scenario_id="stroke-drift",
        start="2024-11-01T00:00:00+00:00",
        config={
            "defaultRequiredRole": "clinician",
            "driftAsset": "stroke-classifier",
            "anomalyRules": [{"metric": "false-positive-alerts", "max": 2}],
        },
        seed_assets={
            "roleTable": standard_role_table(),
            "ontology": [["action-codes", "stroke-triage", "stroke triage", 0]],
            "schemas": [schema],
            "policies": [{"policy": policy, "activatedBy": "admin"}],
            "models": [{"assetID": "stroke-classifier", "version": "1",
                        "label": "stroke imaging classifier", "owner": "imaging-ml",
                        "approver": "admin"}],
            "modules": [
                {"moduleID": "imaging", "accepts": ["stroke-triage"]},
                {"moduleID": "care-team", "accepts": ["stroke-triage"]},
            ],
        },
        events=events,
        expectations=[
            {"kind": "drift-stats", "version": "1", "falsePositives": 0},
            {"kind": "drift-stats", "version": "2", "falsePositives": 4},
            {"kind": "drift-onset", "version": "2"},
            {"kind": "anomaly-flagged", "metric": "false-positive-alerts"},
            {"kind": "event-present", "eventType": "anomaly"},
            {"kind": "deployed-version", "asset": "stroke-classifier", "equals": "2"},
            {"kind": "ledger-valid"},
            {"kind": "scan-clean"},
        ],
    )


def pharmacy_timeout_scenario() -> ScenarioScript:
    script = ScenarioScript(
        scenario_id="pharmacy-timeout",
        start="2024-11-01T00:00:00+00:00",
        config=clinical_config(),
        seed_assets=clinical_seed_assets(),
        events=[
            {"at": "2024-11-24T15:00:00+00:00", "kind": "module-behavior",
             "module": "pharmacy", "schedule": ["timeout"]},
            {"at": "2024-11-24T15:01:00+00:00", "kind": "envelope",
             "envelope": anticoagulation_envelope("msg-anticoag-777")},
            {"at": "2024-11-24T15:05:00+00:00", "kind": "review",
             "case": "msg-anticoag-777", "operator": "alice", "decision": "approve"},
            {"at": "2024-11-24T15:10:00+00:00", "kind": "review",
             "case": "msg-anticoag-777", "operator": "bob", "decision": "approve"},
        ],
        expectations=[
            {"kind": "workflow-state", "message": "msg-anticoag-777", "equals": "completed"},
            {"kind": "routing-target", "message": "msg-anticoag-777",
             "equals": "manual-notification", "fallback": True},
            {"kind": "breaker-state", "module": "pharmacy", "equals": "open"},
            {"kind": "breakers-closed-except", "except": ["pharmacy"]},
            {"kind": "event-present", "eventType": "incident", "message": "msg-anticoag-777"},
            {"kind": "ledger-valid"},
            {"kind": "scan-clean"},
        ],
    )
    return script


BUILTIN_SCENARIOS = {
    "sepsis": sepsis_scenario,
    "finance": finance_scenario,
    "stroke-drift": stroke_drift_scenario,
    "pharmacy-timeout": pharmacy_timeout_scenario,
}


def build_random_review_system(rng: random.Random) -> GovernedSystem:
    """Minimal clinical system used by the randomized review-gate sweeps."""
    script = ScenarioScript(
        scenario_id="random-hitl",
        start="2024-11-01T00:00:00+00:00",
        config=clinical_config(),
        seed_assets=clinical_seed_assets(),
    )
    from .harness import build_system
    return build_system(script)


def random_review_round(seed: int) -> GovernedSystem:
    """One randomized run: a few escalated workflows with random review orders,
    duplicate-approval attempts, overrides, rejections, and expiries."""
    rng = random.Random(seed)
    system = build_random_review_system(rng)
    system.clock.advance_to("2024-11-24T12:00:00+00:00")
    n_workflows = rng.randint(1, 3)
    for i in range(n_workflows):
        dual = rng.random() < 0.5
        envelope_obj = (anticoagulation_envelope(f"msg-r{seed}-{i}") if dual
                        else sepsis_envelope(f"msg-r{seed}-{i}"))
        from .semantic import MessageEnvelope
        wf = system.control.dispatch(MessageEnvelope.from_json(envelope_obj))
        assert wf.case_id is not None
        case_id = wf.case_id
        system.clock.tick(rng.uniform(1, 300))

        plan = rng.choice(["approve", "reject", "override-proceed", "override-halt",
                           "abandon", "race-approve-then-halt"])
        reviewers = rng.sample(CLINICIANS, 3)
        try:
            if plan == "approve":
                system.gateway.submit_review(case_id, reviewers[0], "approve")
                if dual:
                    if rng.random() < 0.5:
                        # A duplicate second approval must be refused.
                        try:
                            system.gateway.submit_review(case_id, reviewers[0], "approve")
                        except Exception:
                            pass
                    system.gateway.submit_review(case_id, reviewers[1], "approve")
            elif plan == "reject":
                if dual and rng.random() < 0.5:
                    system.gateway.submit_review(case_id, reviewers[0], "approve")
                system.gateway.submit_review(case_id, reviewers[1], "reject")
            elif plan == "override-proceed":
                system.gateway.override(case_id, "carol", "force-proceed",
                                        "time-critical pathway")
            elif plan == "override-halt":
                if rng.random() < 0.5:
                    system.gateway.submit_review(case_id, reviewers[0], "approve")
                system.gateway.override(case_id, "carol", "force-halt", "hold for labs")
            elif plan == "race-approve-then-halt":
                system.gateway.submit_review(case_id, reviewers[0], "approve")
                if dual:
                    system.gateway.submit_review(case_id, reviewers[1], "approve")
                # Halt lands before the control plane pumps the approval.
                system.gateway.override(case_id, "carol", "force-halt",
                                        "halt before dispatch")
        except Exception:
            pass
        if rng.random() < 0.8:
            system.control.pump()
        system.clock.tick(rng.uniform(1, 60))
    system.control.pump()
    return system
