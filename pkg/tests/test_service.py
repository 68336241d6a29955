from __future__ import annotations

import pytest
from fastapi.testclient import TestClient

from govplane.harness import ScenarioRunner
from govplane.scenarios import sepsis_scenario
from govplane.service import create_app


@pytest.fixture
def client():
    script = sepsis_scenario()
    # Seed and dispatch the envelopes, but leave the scripted reviews to the API.
    script.events = [e for e in script.events if e["kind"] == "envelope"]
    runner = ScenarioRunner(script)
    for event in script.events:
        runner.system.clock.advance_to(event["at"])
        runner._apply_event(event)
        runner.system.control.pump()
    app = create_app(runner.system)
    return TestClient(app), runner.system


class TestQueue:
    def test_open_cases_listed_with_rationale(self, client):
        http, system = client
        cases = http.get("/api/cases").json()
        assert len(cases) == 2
        assert all(c["state"] == "open" for c in cases)
        assert all(c["rationale"]["claim"] for c in cases)
        dual = [c for c in cases if c["requiredApprovals"] == 2]
        assert len(dual) == 1

    def test_unknown_case_is_404(self, client):
        http, _ = client
        assert http.get("/api/cases/case-999999").status_code == 404

    def test_operators_listing(self, client):
        http, _ = client
        operators = http.get("/api/operators").json()
        ids = [op["operatorID"] for op in operators]
        assert "alice" in ids and "carol" in ids


class TestReviewActions:
    def test_dual_control_approval_round_trip(self, client):
        http, system = client
        dual = next(c for c in http.get("/api/cases").json()
                    if c["requiredApprovals"] == 2)
        first = http.post(f"/api/cases/{dual['caseID']}/review",
                          json={"decision": "approve"},
                          headers={"X-Operator-ID": "alice"})
        assert first.status_code == 200
        assert first.json()["state"] == "partially-approved"
        duplicate = http.post(f"/api/cases/{dual['caseID']}/review",
                              json={"decision": "approve"},
                              headers={"X-Operator-ID": "alice"})
        assert duplicate.status_code == 409
        assert "DuplicateReviewer" in duplicate.json()["detail"]
        second = http.post(f"/api/cases/{dual['caseID']}/review",
                           json={"decision": "approve"},
                           headers={"X-Operator-ID": "bob"})
        assert second.json()["state"] == "approved"
        assert second.json()["workflowState"] == "completed"

    def test_review_requires_operator_header(self, client):
        http, _ = client
        case = http.get("/api/cases").json()[0]
        response = http.post(f"/api/cases/{case['caseID']}/review",
                             json={"decision": "approve"})
        assert response.status_code == 401

    def test_unauthorised_role_is_403(self, client):
        http, _ = client
        case = http.get("/api/cases").json()[0]
        response = http.post(f"/api/cases/{case['caseID']}/review",
                             json={"decision": "approve"},
                             headers={"X-Operator-ID": "dana"})
        assert response.status_code == 403

    def test_override_requires_justification(self, client):
        http, _ = client
        case = http.get("/api/cases").json()[0]
        response = http.post(f"/api/cases/{case['caseID']}/override",
                             json={"direction": "force-halt", "justification": " "},
                             headers={"X-Operator-ID": "carol"})
        assert response.status_code == 422
        ok = http.post(f"/api/cases/{case['caseID']}/override",
                       json={"direction": "force-halt",
                             "justification": "halting for senior review"},
                       headers={"X-Operator-ID": "carol"})
        assert ok.status_code == 200
        assert ok.json()["state"] == "overridden"


class TestWorkflowAndLedger:
    def test_workflow_trace_and_lineage(self, client):
        http, system = client
        workflows = http.get("/api/workflows").json()
        wf = workflows[0]
        trace = http.get(f"/api/workflows/{wf['workflowID']}").json()
        assert trace["pipelineTrace"][0]["step"] == "validation"
        lineage = http.get(f"/api/workflows/{wf['workflowID']}/ledger").json()
        assert not lineage["tampered"]
        assert lineage["entries"][0]["eventType"] == "message-validated"

    def test_ledger_verify_endpoint(self, client):
        http, _ = client
        result = http.get("/api/ledger/verify").json()
        assert result["ok"]
        assert all(not v for v in result["scans"].values())

    def test_metrics_endpoint(self, client):
        http, _ = client
        metrics = http.get("/api/metrics").json()
        assert metrics["gauges"]["escalation-queue-depth"] == 2
        assert "latency.validation" in metrics["histograms"]

    def test_envelope_submission(self, client):
        http, _ = client
        from govplane.scenarios import sepsis_envelope
        envelope = sepsis_envelope("msg-http-001")
        response = http.post("/api/envelopes", json={"envelope": envelope})
        assert response.status_code == 200
        assert response.json()["state"] == "blocked-on-review"


class TestGovernanceEndpoints:
    def test_registry_history_and_snapshot(self, client):
        http, system = client
        history = http.get("/api/registry/assets/sepsis-protocol").json()
        assert history["deployed"] == "2.3"
        snapshot = http.get("/api/registry/snapshot").json()
        assert snapshot["deployedVersions"]["sepsis-protocol"] == "2.3"

    def test_proposal_lifecycle_over_http(self, client):
        http, _ = client
        body = {
            "targetAssetID": "sepsis-protocol",
            "changeSet": [{"op": "add-rule", "rule": {
                "ruleID": "sep-003-hr",
                "guard": {"op": "gt", "subject": "output.heartRate", "value": 110},
                "effect": {"kind": "adjust-confidence", "direction": "down",
                           "multiplier": 1.0},
                "rationale": "sustained tachycardia"}}],
            "evidence": "registry study",
        }
        created = http.post("/api/proposals", json=body,
                            headers={"X-Operator-ID": "admin"})
        assert created.status_code == 200
        pid = created.json()["proposalID"]
        advanced = http.post(f"/api/proposals/{pid}/advance",
                             json={"stage": "Validated",
                                   "artifact": {"validation": {"panel": "clinical"}}},
                             headers={"X-Operator-ID": "admin"})
        assert advanced.json()["state"] == "Validated"
        out_of_order = http.post(f"/api/proposals/{pid}/advance",
                                 json={"stage": "Approved", "artifact": {}},
                                 headers={"X-Operator-ID": "admin"})
        assert out_of_order.status_code == 422
