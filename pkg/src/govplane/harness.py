"""Scenario harness: simulated worker modules and end-to-end runs.

A scenario script seeds every governed asset (ontology, schemas, policies,
rule sets, graphs, thresholds, role table), registers simulated modules with
canned behaviours, and replays timed envelopes, reviews, and failure
injections on a virtual clock. Runs are reproducible: the same script and
seed produce byte-identical ledgers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .authz import RoleTable
from .canonical import canonical_bytes
from .clock import VirtualClock, parse_instant
from .control import (
    BreakerConfig,
    CircuitBreaker,
    ControlPlane,
    ControlPlaneConfig,
    IdGenerator,
    ModuleEndpoint,
    RoutingTable,
    WorkflowInstance,
)
from .epistemic import EpistemicMonitor, KnowledgeGap, Thresholds
from .evolution import KnowledgeEvolution
from .hitl import HitlGateway
from .ledger import EventType, Ledger, LedgerEntry, verify_lines
from .mediation import KnowledgeGraph, RuleSet
from .policy import Policy, PolicyEngine
from .registry import ContentStore, LifecycleRegistry
from .semantic import MessageEnvelope, MessageSchema, OntologyStore, OntologyTerm, SchemaRegistry


class MalformedScript(ValueError):
    pass


class SimulatedModule:
    """Canned worker module: responses keyed by action type, plus an optional
    consume-once schedule for failure injection."""

    def __init__(self, module_id: str, default: str = "ack",
                 by_action: Optional[dict[str, str]] = None,
                 schedule: Optional[list[str]] = None) -> None:
        self.module_id = module_id
        self.default = default
        self.by_action = dict(by_action or {})
        self.schedule = list(schedule or [])
        self.deliveries: list[str] = []

    def receive(self, envelope: MessageEnvelope, now) -> str:
        self.deliveries.append(envelope.message_id)
        if self.schedule:
            return self.schedule.pop(0)
        return self.by_action.get(envelope.action_type.code, self.default)


class GovernedSystem:
    """One fully wired control-plane instance with simulated workers."""

    def __init__(self, start: str = "2024-11-01T00:00:00+00:00",
                 ledger_path: str | Path | None = None,
                 role_table: Optional[RoleTable] = None,
                 config: Optional[ControlPlaneConfig] = None,
                 breaker_config: Optional[BreakerConfig] = None) -> None:
        self.clock = VirtualClock(start)
        self.ledger = Ledger(self.clock, ledger_path)
        self.role_table = role_table or RoleTable()
        self.ontology = OntologyStore()
        self.schemas = SchemaRegistry(self.ontology)
        self.registry = LifecycleRegistry(self.ledger, self.role_table)
        self.store = ContentStore()
        self.policy_engine = PolicyEngine(self.role_table, self.ledger)
        self.evolution = KnowledgeEvolution(self.ledger, self.registry, self.store,
                                            self.role_table)
        self.monitor = EpistemicMonitor(self.ledger, self._draft_from_gap)
        self.gateway = HitlGateway(self.ledger, self.role_table)
        self.routing = RoutingTable()
        self.idgen = IdGenerator()
        self.config = config or ControlPlaneConfig()
        self.breaker_config = breaker_config or BreakerConfig()
        self.modules: dict[str, SimulatedModule] = {}
        self.control = ControlPlane(
            self.clock, self.ledger, self.schemas, self.policy_engine, self.monitor,
            self.gateway, self.registry, self.store, self.routing,
            config=self.config, idgen=self.idgen)

    # Gap drafts target the deployed asset matching the gap kind; a backlog
    # asset catches gaps with no configured target.
    def _draft_from_gap(self, gap: KnowledgeGap) -> str:
        targets = {
            "missing-edge": self.config.mediation_kg_asset,
            "missing-rule": self.config.mediation_rule_set_asset,
            "missing-term": "ontology",
        }
        target = targets.get(gap.kind)
        if target is None or not self.registry.versions(target):
            target = "knowledge-backlog"
            if not self.registry.versions(target):
                self.store.put(target, "1", RuleSet((), "1"))
                self.registry.register(target, "rule-set", "1", owner="epistemic-monitor",
                                       metadata={"label": "knowledge backlog"})
        proposal = self.evolution.propose(
            target, [{"op": "draft", "kind": gap.kind, "description": gap.description}],
            evidence=f"knowledge gap {gap.gap_id} from case {gap.source_case_id}",
            actor="epistemic-monitor", source_gap_id=gap.gap_id)
        return proposal.proposal_id

    # -- seeding ----------------------------------------------------------------

    def seed_ontology_terms(self, terms: list[OntologyTerm], version: str = "1.0.0") -> None:
        for term in terms:
            self.ontology.register(term)
        if not self.registry.versions("ontology"):
            self.store.put("ontology", version, [t for t in self.ontology.terms()])
            self.registry.register("ontology", "ontology", version, owner="semantic-layer",
                                   metadata={"label": "shared ontology"})
            self.registry.mark_validated("ontology", version, {"terms": len(terms)})

    def seed_schema(self, schema: MessageSchema) -> None:
        receipt = self.schemas.register(schema, registered_at=self.clock.now_iso())
        self.ledger.append(EventType.SCHEMA_REGISTERED, "semantic-layer", {
            "schemaID": receipt.schema_id, "version": receipt.version,
        })

    def seed_role_table_asset(self) -> None:
        if not self.registry.versions("role-table"):
            self.store.put("role-table", "1", self.role_table.to_json())
            self.registry.register("role-table", "role-table", "1", owner="governance",
                                   metadata={"label": "operator role table"})
            self.registry.mark_validated("role-table", "1", {"loaded": "startup"})

    def seed_policy(self, policy: Policy, activated_by: str) -> None:
        self.policy_engine.register_policy(policy)
        self.policy_engine.activate_policy(policy.policy_id, policy.version, activated_by)
        version = str(policy.version)
        self.store.put(policy.policy_id, version, policy)
        self.registry.register(policy.policy_id, "policy", version, owner=activated_by,
                               metadata={"label": policy.policy_id})
        self.registry.mark_validated(policy.policy_id, version, {"activatedBy": activated_by})
        self.registry.deploy(policy.policy_id, version, activated_by)

    def seed_asset(self, asset_id: str, kind: str, version: str, content: Any,
                   label: str, owner: str, approver: str, deploy: bool = True,
                   extra_metadata: Optional[dict[str, Any]] = None) -> None:
        self.store.put(asset_id, version, content)
        metadata = {"label": label, **(extra_metadata or {})}
        self.registry.register(asset_id, kind, version, owner=owner, metadata=metadata)
        self.registry.mark_validated(asset_id, version, {"seeded": True})
        if deploy:
            self.registry.deploy(asset_id, version, approver)

    def add_module(self, module: SimulatedModule, accepts: list[str],
                   timeout_budget: float = 5.0, fallback: Optional[str] = None) -> None:
        self.modules[module.module_id] = module
        self.routing.register(ModuleEndpoint(
            module_id=module.module_id,
            accepts_schemas=frozenset(accepts),
            handler=module.receive,
            timeout_budget=timeout_budget,
            fallback_route=fallback,
            breaker=CircuitBreaker(self.breaker_config),
        ))


# -- system-wide ledger scans ------------------------------------------------------

_STEP_EVENT_TO_STAGE = {
    EventType.MESSAGE_VALIDATED.value: "validation",
    EventType.MEDIATION.value: "mediation",
    EventType.POLICY_DECISION.value: "policy",
    EventType.ASSESSMENT.value: "epistemic",
    EventType.CASE_OPENED.value: "hitl",
    EventType.REVIEW.value: "hitl",
    EventType.OVERRIDE.value: "hitl",
    EventType.CASE_EXPIRED.value: "hitl",
    EventType.ANCHOR.value: "anchoring",
    EventType.ROUTING.value: "routing",
}

_STAGE_INDEX = {stage: i for i, stage in enumerate(
    ("validation", "mediation", "policy", "epistemic", "hitl", "anchoring", "routing"))}


def _workflow_ref(entry: LedgerEntry) -> Optional[str]:
    payload = entry.payload
    for key in ("workflowID", "workflowRef"):
        if key in payload:
            return payload[key]
    if entry.event_type == EventType.ASSESSMENT.value:
        return payload.get("caseID")
    return None


def scan_hitl_blocking(entries: list[LedgerEntry]) -> list[str]:
    """No routing event may exist for a workflow between case opening and an
    approving terminal state; unapproved cases permit no routing at all."""
    violations: list[str] = []
    case_workflow: dict[str, str] = {}
    opened_at: dict[str, int] = {}
    approved_at: dict[str, int] = {}
    closed_non_approving: dict[str, int] = {}
    routing: dict[str, list[int]] = {}
    for entry in entries:
        if entry.event_type == EventType.CASE_OPENED.value:
            case_id = entry.payload["caseID"]
            case_workflow[case_id] = entry.payload["workflowRef"]
            opened_at[case_id] = entry.sequence
        elif entry.event_type == EventType.REVIEW.value:
            if entry.payload.get("resultingState") == "approved":
                approved_at[entry.payload["caseID"]] = entry.sequence
            elif entry.payload.get("resultingState") == "rejected":
                closed_non_approving[entry.payload["caseID"]] = entry.sequence
        elif entry.event_type == EventType.OVERRIDE.value:
            case_id = entry.payload["caseID"]
            if entry.payload.get("direction") == "force-proceed":
                approved_at[case_id] = entry.sequence
            else:
                closed_non_approving[case_id] = entry.sequence
                approved_at.pop(case_id, None)
        elif entry.event_type == EventType.CASE_EXPIRED.value:
            closed_non_approving[entry.payload["caseID"]] = entry.sequence
        elif entry.event_type == EventType.ROUTING.value:
            wf = entry.payload.get("workflowID")
            if wf:
                routing.setdefault(wf, []).append(entry.sequence)
    for case_id, wf in case_workflow.items():
        for seq in routing.get(wf, []):
            if seq <= opened_at[case_id]:
                continue
            permit = approved_at.get(case_id)
            halted = closed_non_approving.get(case_id)
            if permit is None or seq < permit:
                violations.append(
                    f"routing at {seq} for workflow {wf} while case {case_id} "
                    f"had no approving terminal state")
            elif halted is not None and halted < seq and (permit is None or halted > permit):
                violations.append(
                    f"routing at {seq} for workflow {wf} after case {case_id} was halted")
    return violations


def scan_dual_control_distinct(entries: list[LedgerEntry]) -> list[str]:
    violations = []
    required: dict[str, int] = {}
    approvers: dict[str, list[str]] = {}
    for entry in entries:
        if entry.event_type == EventType.CASE_OPENED.value:
            required[entry.payload["caseID"]] = entry.payload["requiredApprovals"]
        elif entry.event_type == EventType.REVIEW.value and entry.payload["decision"] == "approve":
            approvers.setdefault(entry.payload["caseID"], []).append(entry.payload["operatorID"])
        if entry.event_type == EventType.REVIEW.value and \
                entry.payload.get("resultingState") == "approved":
            case_id = entry.payload["caseID"]
            ops = approvers.get(case_id, [])
            if required.get(case_id) == 2 and len(set(ops)) < 2:
                violations.append(f"case {case_id} approved without two distinct operators: {ops}")
    return violations


def scan_pipeline_order(entries: list[LedgerEntry]) -> list[str]:
    """Step events of each workflow must respect the canonical stage order."""
    violations = []
    stages: dict[str, list[str]] = {}
    for entry in entries:
        if entry.payload.get("modified"):
            continue
        stage = _STEP_EVENT_TO_STAGE.get(entry.event_type)
        if stage is None:
            continue
        if entry.event_type == EventType.ANCHOR.value and "workflowID" not in entry.payload:
            continue
        wf = _workflow_ref(entry)
        if wf is None or not wf.startswith("wf-"):
            continue
        stages.setdefault(wf, []).append(stage)
    for wf, seen in stages.items():
        indices = [_STAGE_INDEX[s] for s in seen]
        if indices != sorted(indices):
            violations.append(f"workflow {wf} steps out of order: {seen}")
        if "routing" in seen:
            if "anchoring" not in seen or seen.index("anchoring") > seen.index("routing"):
                violations.append(f"workflow {wf} routed before anchoring")
    return violations


def scan_version_consistency(entries: list[LedgerEntry]) -> list[str]:
    violations = []
    versions: dict[str, dict] = {}
    for entry in entries:
        pinned = entry.payload.get("versions")
        wf = entry.payload.get("workflowID")
        if pinned is None or wf is None:
            continue
        if wf in versions and versions[wf] != pinned:
            violations.append(f"workflow {wf} recorded diverging pinned versions")
        versions.setdefault(wf, pinned)
    return violations


def scan_single_deployment(entries: list[LedgerEntry]) -> list[str]:
    violations = []
    deployed: dict[str, str] = {}
    for entry in entries:
        if entry.event_type == EventType.DEPLOYMENT.value:
            asset = entry.payload["assetID"]
            superseded = entry.payload.get("supersededVersion")
            if deployed.get(asset) != superseded:
                violations.append(
                    f"deployment of {asset} v{entry.payload['version']} at {entry.sequence} "
                    f"supersedes {superseded!r} but {deployed.get(asset)!r} was deployed")
            deployed[asset] = entry.payload["version"]
        elif entry.event_type == EventType.ROLLBACK.value:
            asset = entry.payload["assetID"]
            if entry.payload.get("fromVersion") != deployed.get(asset):
                violations.append(f"rollback of {asset} at {entry.sequence} from a version "
                                  f"that was not deployed")
            deployed[asset] = entry.payload["toVersion"]
    return violations


def run_all_scans(entries: list[LedgerEntry]) -> dict[str, list[str]]:
    return {
        "hitl-blocking": scan_hitl_blocking(entries),
        "dual-control-distinct": scan_dual_control_distinct(entries),
        "pipeline-order": scan_pipeline_order(entries),
        "version-consistency": scan_version_consistency(entries),
        "single-deployment": scan_single_deployment(entries),
    }


# -- scenario scripts ---------------------------------------------------------------


@dataclass
class ScenarioScript:
    scenario_id: str
    start: str
    config: dict[str, Any] = field(default_factory=dict)
    seed_assets: dict[str, Any] = field(default_factory=dict)
    events: list[dict[str, Any]] = field(default_factory=list)
    expectations: list[dict[str, Any]] = field(default_factory=list)

    def to_json(self) -> dict[str, Any]:
        return {
            "scenarioID": self.scenario_id,
            "start": self.start,
            "config": self.config,
            "seedAssets": self.seed_assets,
            "events": self.events,
            "expectations": self.expectations,
        }

    @staticmethod
    def from_json(obj: dict[str, Any]) -> "ScenarioScript":
        try:
            return ScenarioScript(
                scenario_id=obj["scenarioID"],
                start=obj["start"],
                config=dict(obj.get("config", {})),
                seed_assets=dict(obj.get("seedAssets", {})),
                events=list(obj.get("events", [])),
                expectations=list(obj.get("expectations", [])),
            )
        except (KeyError, TypeError) as exc:
            raise MalformedScript(f"scenario script is malformed: {exc}") from exc

    @staticmethod
    def load_file(path: str | Path) -> "ScenarioScript":
        return ScenarioScript.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def build_system(script: ScenarioScript, ledger_path: str | Path | None = None) -> GovernedSystem:
    seeds = script.seed_assets
    role_table = RoleTable.from_json(seeds.get("roleTable", {"roles": {}, "operators": []}))
    cfg = script.config
    config = ControlPlaneConfig(
        step_seconds=cfg.get("stepSeconds", 0.05),
        default_required_role=cfg.get("defaultRequiredRole", "reviewer"),
        default_required_approvals=cfg.get("defaultRequiredApprovals", 1),
        mediation_rule_set_asset=cfg.get("mediationRuleSetAsset"),
        mediation_kg_asset=cfg.get("mediationKGAsset"),
        thresholds_asset=cfg.get("thresholdsAsset"),
    )
    breaker = BreakerConfig(
        failure_threshold=cfg.get("breakerFailureThreshold", 3),
        cooldown_seconds=cfg.get("breakerCooldownSeconds", 300.0),
    )
    system = GovernedSystem(script.start, ledger_path, role_table, config, breaker)
    system.seed_role_table_asset()
    terms = [OntologyTerm(*row[:3], bool(row[3])) for row in seeds.get("ontology", [])]
    if terms:
        system.seed_ontology_terms(terms)
    for schema_obj in seeds.get("schemas", []):
        system.seed_schema(MessageSchema.from_json(schema_obj))
    for spec in seeds.get("models", []):
        if spec.get("deployAt"):
            system.clock.advance_to(spec["deployAt"])
        system.seed_asset(spec["assetID"], "model", spec["version"],
                          {"description": spec.get("label", spec["assetID"])},
                          spec.get("label", spec["assetID"]), spec.get("owner", "ml-team"),
                          spec.get("approver", _default_approver(role_table)))
    for spec in seeds.get("ruleSets", []):
        if spec.get("deployAt"):
            system.clock.advance_to(spec["deployAt"])
        system.seed_asset(spec["assetID"], "rule-set", spec["version"],
                          RuleSet.from_json(spec["content"]),
                          spec.get("label", spec["assetID"]), spec.get("owner", "governance"),
                          spec.get("approver", _default_approver(role_table)))
    for spec in seeds.get("knowledgeGraphs", []):
        system.seed_asset(spec["assetID"], "knowledge-graph", spec["version"],
                          KnowledgeGraph.from_json(spec["content"]),
                          spec.get("label", spec["assetID"]), spec.get("owner", "governance"),
                          spec.get("approver", _default_approver(role_table)))
    for spec in seeds.get("thresholds", []):
        system.seed_asset(spec["assetID"], "threshold-config", spec["version"],
                          Thresholds.from_json(spec["content"]),
                          spec.get("label", spec["assetID"]), spec.get("owner", "governance"),
                          spec.get("approver", _default_approver(role_table)))
    for policy_obj in seeds.get("policies", []):
        system.seed_policy(Policy.from_json(policy_obj["policy"]),
                           policy_obj.get("activatedBy", _default_approver(role_table)))
    for spec in seeds.get("modules", []):
        behaviour = spec.get("behavior", {})
        module = SimulatedModule(spec["moduleID"], behaviour.get("default", "ack"),
                                 behaviour.get("byAction"), behaviour.get("schedule"))
        system.add_module(module, spec.get("accepts", []),
                          spec.get("timeout", 5.0), spec.get("fallback"))
    for rule in cfg.get("anomalyRules", []):
        system.control.telemetry.add_anomaly_rule(rule["metric"], rule["max"])
    return system


def _default_approver(role_table: RoleTable) -> str:
    for operator in role_table.operators():
        if role_table.is_authorised(operator.operator_id, "deploy"):
            return operator.operator_id
    return "governance"


@dataclass
class RunReport:
    scenario_id: str
    passed: bool
    expectations: list[dict[str, Any]]
    ledger_path: Optional[str]
    head_receipt_path: Optional[str]
    workflows: dict[str, dict[str, Any]]
    metrics: dict[str, Any]
    scans: dict[str, list[str]]
    drift_analysis: Optional[dict[str, Any]] = None

    def to_json(self) -> dict[str, Any]:
        return {
            "scenarioID": self.scenario_id,
            "passed": self.passed,
            "expectations": self.expectations,
            "ledgerPath": self.ledger_path,
            "headReceiptPath": self.head_receipt_path,
            "workflows": self.workflows,
            "metrics": self.metrics,
            "scans": self.scans,
            "driftAnalysis": self.drift_analysis,
        }


class ScenarioRunner:
    """Replays a script's timed events against a fresh system."""

    def __init__(self, script: ScenarioScript, out_dir: str | Path | None = None) -> None:
        self.script = script
        self.out_dir = Path(out_dir) if out_dir else None
        ledger_path = None
        if self.out_dir is not None:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            ledger_path = self.out_dir / f"{script.scenario_id}.ledger.ndjson"
            if ledger_path.exists():
                ledger_path.unlink()
        self.system = build_system(script, ledger_path)

    def run(self) -> RunReport:
        system = self.system
        for event in self.script.events:
            if event.get("at"):
                system.clock.advance_to(event["at"])
            self._apply_event(event)
            system.gateway.expire_due_cases()
            system.control.pump()
            system.control.flag_anomalies()
        head_path = None
        if self.out_dir is not None and system.ledger.head() is not None:
            head_path = self.out_dir / f"{self.script.scenario_id}.head.json"
            head_path.write_bytes(canonical_bytes(system.ledger.head().to_record()))
        drift = None
        if any(e.get("kind") == "envelope" and "groundTruth" in e.get("envelope", {}).get("payload", {})
               for e in self.script.events):
            drift = drift_analysis(system.ledger.entries(),
                                   self.script.config.get("driftAsset", ""))
        scans = run_all_scans(system.ledger.entries())
        results = [self._check(expect, drift) for expect in self.script.expectations]
        return RunReport(
            scenario_id=self.script.scenario_id,
            passed=all(r["ok"] for r in results),
            expectations=results,
            ledger_path=str(system.ledger.path) if system.ledger.path else None,
            head_receipt_path=str(head_path) if head_path else None,
            workflows={wf.workflow_id: wf.to_json() for wf in system.control.workflows.values()},
            metrics=system.control.telemetry.snapshot(),
            scans=scans,
            drift_analysis=drift,
        )

    def _apply_event(self, event: dict[str, Any]) -> None:
        system = self.system
        kind = event.get("kind")
        if kind == "envelope":
            envelope = MessageEnvelope.from_json(event["envelope"])
            wf = system.control.dispatch(envelope)
            payload = envelope.payload
            if "groundTruth" in payload and "prediction" in payload:
                self._score_outcome(wf, payload)
        elif kind == "review":
            case_id = self._resolve_case(event)
            system.gateway.submit_review(case_id, event["operator"], event["decision"],
                                         payload=event.get("payload"),
                                         justification=event.get("justification", ""))
        elif kind == "override":
            case_id = self._resolve_case(event)
            system.gateway.override(case_id, event["operator"], event["direction"],
                                    event["justification"])
        elif kind == "module-behavior":
            module = system.modules[event["module"]]
            module.schedule = list(event.get("schedule", []))
            if event.get("default"):
                module.default = event["default"]
        elif kind == "deploy-asset":
            spec = event["asset"]
            content = _content_from_spec(spec)
            system.seed_asset(spec["assetID"], spec["assetKind"], spec["version"], content,
                              spec.get("label", spec["assetID"]), spec.get("owner", "governance"),
                              spec.get("approver", _default_approver(system.role_table)))
        elif kind == "monitor-tick":
            system.evolution.monitor_tick(event["proposal"], event["metrics"])
        else:
            raise MalformedScript(f"unknown event kind {kind!r}")

    def _score_outcome(self, wf: WorkflowInstance, payload: dict[str, Any]) -> None:
        telemetry = self.system.control.telemetry
        telemetry.increment("alerts-total")
        if payload["prediction"] != "clear" and payload["groundTruth"] == "clear":
            telemetry.increment("false-positive-alerts")

    def _resolve_case(self, event: dict[str, Any]) -> str:
        selector = event.get("case", "latest")
        if selector == "latest":
            queue = self.system.gateway.queue()
            if not queue:
                raise MalformedScript("no open case for scripted review")
            return queue[0].case_id
        if selector.startswith("case-"):
            return selector
        # Selector is a messageID: find its workflow's case.
        wf = self.system.control.workflow_by_message(selector)
        if wf is None or wf.case_id is None:
            raise MalformedScript(f"no case for message {selector!r}")
        return wf.case_id

    # -- expectations ------------------------------------------------------------

    def _check(self, expect: dict[str, Any], drift: Optional[dict[str, Any]]) -> dict[str, Any]:
        kind = expect["kind"]
        try:
            ok, detail = self._check_inner(expect, drift)
        except Exception as exc:  # an expectation error is a failure, not a crash
            ok, detail = False, f"error: {exc}"
        return {"kind": kind, "ok": ok, "detail": detail, "params": expect}

    def _check_inner(self, expect: dict[str, Any],
                     drift: Optional[dict[str, Any]]) -> tuple[bool, str]:
        system = self.system
        kind = expect["kind"]
        if kind == "workflow-state":
            wf = self._wf(expect["message"])
            return wf.state == expect["equals"], f"state={wf.state}"
        if kind == "decision-verdict":
            wf = self._wf(expect["message"])
            verdict = wf.policy_decision.verdict if wf.policy_decision else None
            return verdict == expect["equals"], f"verdict={verdict}"
        if kind == "violation-count":
            wf = self._wf(expect["message"])
            violations = wf.policy_decision.violations if wf.policy_decision else ()
            rule_ids = [v.rule_id for v in violations]
            ok = len(violations) == expect["equals"]
            if expect.get("ruleIDs") is not None:
                ok = ok and rule_ids == expect["ruleIDs"]
            return ok, f"violations={rule_ids}"
        if kind == "no-routing":
            wf = self._wf(expect["message"])
            routed = [e for e in system.ledger.entries()
                      if e.event_type == EventType.ROUTING.value
                      and e.payload.get("workflowID") == wf.workflow_id]
            return not routed, f"routing-events={len(routed)}"
        if kind == "event-present":
            refs = [e for e in system.ledger.entries() if e.event_type == expect["eventType"]]
            if expect.get("message"):
                wf = self._wf(expect["message"])
                refs = [e for e in refs if e.payload.get("workflowID") == wf.workflow_id]
            return bool(refs), f"count={len(refs)}"
        if kind == "event-sequence":
            wf = self._wf(expect["message"])
            lineage = system.ledger.lineage(wf.workflow_id)
            wanted = list(expect["sequence"])
            got = [t for t in lineage.event_types if t in set(wanted)]
            return got == wanted, f"sequence={got}"
        if kind == "rationale-field":
            wf = self._wf(expect["message"])
            value: Any = wf.rationale.to_json() if wf.rationale else {}
            for part in expect["path"].split("."):
                value = value.get(part) if isinstance(value, dict) else None
            return value == expect["equals"], f"{expect['path']}={value!r}"
        if kind == "rationale-contains":
            wf = self._wf(expect["message"])
            group = (wf.rationale.to_json() if wf.rationale else {}).get(expect["group"], [])
            blob = json.dumps(group)
            return expect["substring"] in blob, f"group={expect['group']}"
        if kind == "guideline-ref":
            wf = self._wf(expect["message"])
            refs = wf.rationale.guideline_refs if wf.rationale else []
            matches = [r for r in refs
                       if r.get("label") == expect["label"] and r.get("version") == expect["version"]]
            ok = bool(matches)
            if ok and expect.get("activeSincePrefix"):
                ok = matches[0].get("activeSince", "").startswith(expect["activeSincePrefix"])
            return ok, f"guidelineRefs={refs}"
        if kind == "drift-stats":
            if not drift:
                return False, "no drift analysis"
            stats = drift["perVersion"].get(expect["version"], {})
            ok = stats.get("falsePositives") == expect["falsePositives"]
            return ok, f"stats={stats}"
        if kind == "routing-target":
            wf = self._wf(expect["message"])
            ok = wf.routed_to == expect["equals"]
            if expect.get("fallback") is not None:
                ok = ok and wf.used_fallback == expect["fallback"]
            return ok, f"routedTo={wf.routed_to} fallback={wf.used_fallback}"
        if kind == "breaker-state":
            state = system.routing.get(expect["module"]).breaker.state
            return state == expect["equals"], f"state={state}"
        if kind == "breakers-closed-except":
            exceptions = set(expect.get("except", []))
            bad = {m: s for m, s in system.routing.breaker_states().items()
                   if m not in exceptions and s != "closed"}
            return not bad, f"unexpected={bad}"
        if kind == "ledger-valid":
            result = system.ledger.verify()
            return result.ok, f"checked={getattr(result, 'checked', None)}"
        if kind == "scan-clean":
            scans = run_all_scans(system.ledger.entries())
            name = expect.get("scan")
            bad = scans[name] if name else [v for vs in scans.values() for v in vs]
            return not bad, f"violations={bad}"
        if kind == "anomaly-flagged":
            flagged = expect["metric"] in system.control.telemetry.flagged_metrics
            return flagged, f"flagged={sorted(system.control.telemetry.flagged_metrics)}"
        if kind == "queue-depth":
            depth = system.control.telemetry.gauges.get("escalation-queue-depth")
            return depth == expect["equals"], f"depth={depth}"
        if kind == "deployed-version":
            version = system.registry.deployed_version(expect["asset"])
            return version == expect["equals"], f"version={version}"
        if kind == "drift-onset":
            if not drift:
                return False, "no drift analysis"
            onset = drift.get("onset") or {}
            ok = onset.get("classifierVersion") == expect["version"]
            return ok, f"onset={onset}"
        raise MalformedScript(f"unknown expectation kind {kind!r}")

    def _wf(self, message_id: str) -> WorkflowInstance:
        wf = self.system.control.workflow_by_message(message_id)
        if wf is None:
            raise MalformedScript(f"no workflow for message {message_id!r}")
        return wf


def drift_analysis(entries: list[LedgerEntry], classifier_asset: str) -> dict[str, Any]:
    """Group anchored decisions by the classifier version pinned at dispatch and
    locate the onset of false positives."""
    per_version: dict[str, dict[str, int]] = {}
    onset: Optional[dict[str, Any]] = None
    for entry in entries:
        if entry.event_type != EventType.MESSAGE_VALIDATED.value:
            continue
        snapshot = entry.payload.get("payloadSnapshot", {})
        if "prediction" not in snapshot or "groundTruth" not in snapshot:
            continue
        version = entry.payload.get("versions", {}).get("assets", {}).get(classifier_asset, "?")
        stats = per_version.setdefault(version, {"decisions": 0, "falsePositives": 0})
        stats["decisions"] += 1
        if snapshot["prediction"] != "clear" and snapshot["groundTruth"] == "clear":
            stats["falsePositives"] += 1
            if onset is None:
                onset = {"sequence": entry.sequence, "timestamp": entry.timestamp,
                         "classifierVersion": version}
    return {"classifier": classifier_asset, "perVersion": per_version, "onset": onset}


def _content_from_spec(spec: dict[str, Any]) -> Any:
    kind = spec["assetKind"]
    if kind == "rule-set":
        return RuleSet.from_json(spec["content"])
    if kind == "knowledge-graph":
        return KnowledgeGraph.from_json(spec["content"])
    if kind == "threshold-config":
        return Thresholds.from_json(spec["content"])
    return spec.get("content", {})


def run_scenario(script: ScenarioScript, out_dir: str | Path | None = None) -> RunReport:
    return ScenarioRunner(script, out_dir).run()


def verify_run(ledger_path: str | Path, head_receipt_path: str | Path | None = None,
               signing_key: Optional[bytes] = None) -> dict[str, Any]:
    """Offline verification of a stored run: hash chain, head receipt, and the
    system-wide scans (review-gate blocking, pipeline order, deployments)."""
    from .ledger import DEFAULT_SIGNING_KEY, AnchorReceipt

    raw = Path(ledger_path).read_bytes()
    lines = [line for line in raw.splitlines() if line]
    chain = verify_lines(lines, signing_key or DEFAULT_SIGNING_KEY)
    report: dict[str, Any] = {
        "ledger": str(ledger_path),
        "entries": len(lines),
        "chain": {"ok": chain.ok,
                  **({} if chain.ok else {"firstBadSequence": chain.first_bad_sequence,
                                          "reason": chain.reason})},
    }
    truncation_ok = True
    if head_receipt_path is not None:
        receipt = AnchorReceipt.from_record(
            json.loads(Path(head_receipt_path).read_text(encoding="utf-8")))
        if receipt.sequence >= len(lines):
            truncation_ok = False
            report["headReceipt"] = {"ok": False, "reason": "truncated-ledger",
                                     "expectedSequence": receipt.sequence,
                                     "entries": len(lines)}
        else:
            stored = json.loads(lines[receipt.sequence].decode("utf-8"))
            matches = stored["entryHash"] == receipt.entry_hash
            truncation_ok = matches
            report["headReceipt"] = {"ok": matches}
    if chain.ok:
        entries = [LedgerEntry.from_record(json.loads(line.decode("utf-8"))) for line in lines]
        report["scans"] = run_all_scans(entries)
        scans_ok = not any(report["scans"].values())
    else:
        report["scans"] = {}
        scans_ok = False
    report["ok"] = chain.ok and truncation_ok and scans_ok
    return report
