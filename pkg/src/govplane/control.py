"""Central dispatch pipeline.

Every envelope passes through the same strict sequence: semantic
validation, symbolic mediation (for model-originated messages), policy
evaluation, epistemic assessment, an optional human review gate, rationale
assembly, provenance anchoring, and only then routing. A workflow pins the
deployment snapshot it started with, so every step of one workflow records
the same asset and policy versions even if deployments change mid-flight.

Module failures are contained per endpoint with a circuit breaker and an
optional fallback route; the failure of one module never touches another
module's breaker or traces.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import Any, Callable, Optional

from .clock import VirtualClock, isoformat_utc
from .epistemic import EpistemicMonitor, Thresholds, UncertaintyAssessment
from .hitl import EscalationCase, HitlGateway
from .ledger import EventType, Ledger
from .mediation import KnowledgeGraph, MediationVerdict, RuleSet, mediate
from .policy import ActionRequest, PolicyDecision, PolicyEngine, PolicySnapshot
from .registry import ContentStore, LifecycleRegistry
from .semantic import MessageEnvelope, SchemaRegistry, UnknownSchema

PIPELINE_ORDER = ("validation", "mediation", "policy", "epistemic", "hitl", "anchoring", "routing")

# Payload fields that carry harness bookkeeping rather than domain evidence.
_NON_EVIDENCE_FIELDS = {
    "claim", "entityRefs", "uncertaintyNotes", "missingRules", "missingEvidence",
    "distributionShift", "fallbackContent",
}


class ControlPlaneError(Exception):
    pass


class UnknownModule(ControlPlaneError):
    pass


class IncompleteContext(ControlPlaneError):
    pass


class IdGenerator:
    """Deterministic per-prefix counters; no wall-clock or random IDs."""

    def __init__(self) -> None:
        self._counters: dict[str, int] = {}
        self._lock = threading.Lock()

    def next(self, prefix: str) -> str:
        with self._lock:
            n = self._counters.get(prefix, 0) + 1
            self._counters[prefix] = n
        return f"{prefix}-{n:06d}"


class Telemetry:
    """Counters, gauges, and latency histograms with an anomaly hook."""

    def __init__(self) -> None:
        self.counters: dict[str, float] = {}
        self.gauges: dict[str, float] = {}
        self.histograms: dict[str, list[float]] = {}
        self._anomaly_rules: dict[str, float] = {}
        self._flagged: set[str] = set()

    def increment(self, name: str, value: float = 1.0) -> float:
        self.counters[name] = self.counters.get(name, 0.0) + value
        return self.counters[name]

    def set_gauge(self, name: str, value: float) -> None:
        self.gauges[name] = value

    def observe(self, name: str, value: float) -> None:
        self.histograms.setdefault(name, []).append(value)

    def add_anomaly_rule(self, metric: str, ceiling: float) -> None:
        self._anomaly_rules[metric] = ceiling

    def check_anomalies(self) -> list[dict[str, Any]]:
        """Newly breached anomaly rules since the last check."""
        breaches = []
        for metric, ceiling in sorted(self._anomaly_rules.items()):
            value = self.counters.get(metric, self.gauges.get(metric, 0.0))
            if value > ceiling and metric not in self._flagged:
                self._flagged.add(metric)
                breaches.append({"metric": metric, "value": value, "ceiling": ceiling})
        return breaches

    @property
    def flagged_metrics(self) -> set[str]:
        return set(self._flagged)

    def snapshot(self) -> dict[str, Any]:
        return {
            "counters": dict(sorted(self.counters.items())),
            "gauges": dict(sorted(self.gauges.items())),
            "histograms": {k: {"count": len(v), "sum": sum(v)}
                           for k, v in sorted(self.histograms.items())},
            "anomalies": sorted(self._flagged),
        }


@dataclass
class BreakerConfig:
    failure_threshold: int = 3
    cooldown_seconds: float = 300.0


class CircuitBreaker:
    """closed -> open after N consecutive failures or any timeout; open ->
    half-open after the cool-down; half-open closes on one success and
    reopens on one failure."""

    def __init__(self, config: BreakerConfig) -> None:
        self._config = config
        self.state = "closed"
        self.consecutive_failures = 0
        self.opened_at: Optional[datetime] = None

    def allow(self, now: datetime) -> tuple[bool, Optional[str]]:
        """Whether a delivery may proceed; second item is a transition, if any."""
        if self.state == "open":
            assert self.opened_at is not None
            if (now - self.opened_at).total_seconds() >= self._config.cooldown_seconds:
                self.state = "half-open"
                return True, "half-open"
            return False, None
        return True, None

    def record_success(self) -> Optional[str]:
        self.consecutive_failures = 0
        if self.state == "half-open":
            self.state = "closed"
            self.opened_at = None
            return "closed"
        return None

    def record_failure(self, kind: str, now: datetime) -> Optional[str]:
        if self.state == "half-open":
            self.state = "open"
            self.opened_at = now
            return "open"
        self.consecutive_failures += 1
        beyond_budget = kind == "timeout"
        if self.state == "closed" and (
                beyond_budget or self.consecutive_failures >= self._config.failure_threshold):
            self.state = "open"
            self.opened_at = now
            return "open"
        return None


# A module handler receives (envelope, now) and answers "ack", "nack", or "timeout".
ModuleHandler = Callable[[MessageEnvelope, datetime], str]


@dataclass
class ModuleEndpoint:
    module_id: str
    accepts_schemas: frozenset[str]
    handler: Optional[ModuleHandler] = None
    emits_schemas: frozenset[str] = frozenset()
    timeout_budget: float = 5.0
    fallback_route: Optional[str] = None
    breaker: CircuitBreaker = field(default_factory=lambda: CircuitBreaker(BreakerConfig()))

    def deliver(self, envelope: MessageEnvelope, now: datetime) -> str:
        if self.handler is None:
            return "ack"
        return self.handler(envelope, now)


class RoutingTable:
    def __init__(self) -> None:
        self._modules: dict[str, ModuleEndpoint] = {}

    def register(self, endpoint: ModuleEndpoint) -> None:
        if endpoint.module_id in self._modules:
            raise ControlPlaneError(f"module {endpoint.module_id!r} already registered")
        self._modules[endpoint.module_id] = endpoint

    def get(self, module_id: str) -> ModuleEndpoint:
        if module_id not in self._modules:
            raise UnknownModule(module_id)
        return self._modules[module_id]

    def has(self, module_id: str) -> bool:
        return module_id in self._modules

    def all(self) -> list[ModuleEndpoint]:
        return [self._modules[k] for k in sorted(self._modules)]

    def breaker_states(self) -> dict[str, str]:
        return {m.module_id: m.breaker.state for m in self.all()}


@dataclass
class RationaleObject:
    rationale_id: str
    claim: str
    evidence: list[dict[str, Any]]
    confidence: float
    uncertainty: list[str]
    policy_context: dict[str, Any]
    guideline_refs: list[dict[str, Any]]

    def to_json(self) -> dict[str, Any]:
        return {
            "rationaleID": self.rationale_id,
            "claim": self.claim,
            "evidence": self.evidence,
            "confidence": self.confidence,
            "uncertainty": self.uncertainty,
            "policyContext": self.policy_context,
            "guidelineRefs": self.guideline_refs,
        }


@dataclass
class WorkflowInstance:
    workflow_id: str
    envelope: MessageEnvelope
    state: str = "in-flight"
    pipeline_trace: list[dict[str, Any]] = field(default_factory=list)
    pinned_versions: dict[str, Any] = field(default_factory=dict)
    policy_snapshot: Optional[PolicySnapshot] = None
    mediation_verdict: Optional[MediationVerdict] = None
    policy_decision: Optional[PolicyDecision] = None
    assessment: Optional[UncertaintyAssessment] = None
    rationale: Optional[RationaleObject] = None
    case_id: Optional[str] = None
    routed_to: Optional[str] = None
    used_fallback: bool = False
    terminal_reason: str = ""
    step_refs: list[int] = field(default_factory=list)
    dispatched_at: Optional[datetime] = None

    def trace_steps(self) -> list[str]:
        return [t["step"] for t in self.pipeline_trace]

    def to_json(self) -> dict[str, Any]:
        return {
            "workflowID": self.workflow_id,
            "messageID": self.envelope.message_id,
            "state": self.state,
            "pipelineTrace": self.pipeline_trace,
            "pinnedVersions": self.pinned_versions,
            "caseID": self.case_id,
            "routedTo": self.routed_to,
            "usedFallback": self.used_fallback,
            "terminalReason": self.terminal_reason,
            "rationale": self.rationale.to_json() if self.rationale else None,
            "stepRefs": self.step_refs,
        }


@dataclass
class ControlPlaneConfig:
    step_seconds: float = 0.05
    default_required_role: str = "reviewer"
    default_required_approvals: int = 1
    mediation_rule_set_asset: Optional[str] = None
    mediation_kg_asset: Optional[str] = None
    thresholds_asset: Optional[str] = None


class ControlPlane:
    """Dispatcher: governs, coordinates, and audits every module interaction."""

    def __init__(self, clock: VirtualClock, ledger: Ledger, schema_registry: SchemaRegistry,
                 policy_engine: PolicyEngine, monitor: EpistemicMonitor, gateway: HitlGateway,
                 registry: LifecycleRegistry, store: ContentStore, routing: RoutingTable,
                 config: Optional[ControlPlaneConfig] = None,
                 idgen: Optional[IdGenerator] = None) -> None:
        self._clock = clock
        self._ledger = ledger
        self._schemas = schema_registry
        self._policy = policy_engine
        self._monitor = monitor
        self._gateway = gateway
        self._registry = registry
        self._store = store
        self.routing = routing
        self.config = config or ControlPlaneConfig()
        self._idgen = idgen or IdGenerator()
        self.telemetry = Telemetry()
        self.workflows: dict[str, WorkflowInstance] = {}
        self._by_message: dict[str, str] = {}
        self._resume_queue: list[str] = []
        self._lock = threading.Lock()
        gateway.on_resolution(self._on_case_resolution)
        gateway.set_revalidator(self._revalidate_modified_payload)

    # -- dispatch pipeline ---------------------------------------------------

    def dispatch(self, envelope: MessageEnvelope) -> WorkflowInstance:
        if not self.routing.has(envelope.source_module):
            raise UnknownModule(f"source module {envelope.source_module!r} is not registered")
        wf = WorkflowInstance(
            workflow_id=self._idgen.next("wf"),
            envelope=envelope,
            dispatched_at=self._clock.now(),
        )
        wf.pinned_versions = {
            "assets": self._registry.deployed_versions(),
            "policies": self._policy.active_versions(),
        }
        wf.policy_snapshot = self._policy.snapshot()
        with self._lock:
            self.workflows[wf.workflow_id] = wf
            self._by_message[envelope.message_id] = wf.workflow_id

        if not self._step_validation(wf):
            return wf
        self._step_mediation(wf)
        if not self._step_policy(wf):
            return wf
        if not self._step_epistemic(wf):
            return wf
        self._build_and_anchor_rationale(wf)
        if self._needs_escalation(wf):
            self._open_review_gate(wf)
            return wf
        self._complete(wf)
        return wf

    def _tick(self) -> float:
        self._clock.tick(self.config.step_seconds)
        return self.config.step_seconds

    def _trace(self, wf: WorkflowInstance, step: str, outcome: str) -> None:
        wf.pipeline_trace.append({"step": step, "outcome": outcome, "at": self._clock.now_iso()})

    def _anchor_step(self, wf: WorkflowInstance, event_type: EventType, actor: str,
                     payload: dict[str, Any]) -> int:
        payload = {"workflowID": wf.workflow_id, "messageID": wf.envelope.message_id,
                   "versions": wf.pinned_versions, **payload}
        receipt = self._ledger.append(event_type, actor, payload)
        wf.step_refs.append(receipt.sequence)
        self.telemetry.increment("anchoring-confirmations")
        return receipt.sequence

    def _step_validation(self, wf: WorkflowInstance) -> bool:
        elapsed = self._tick()
        try:
            result = self._schemas.validate_message(wf.envelope)
            outcome = "accepted" if result.accepted else "rejected"
            reasons = list(result.reasons)
        except UnknownSchema as exc:
            outcome, reasons = "unknown-schema", [str(exc)]
        self._anchor_step(wf, EventType.MESSAGE_VALIDATED, wf.envelope.source_module,
                          {"outcome": outcome, "reasons": reasons,
                           "payloadSnapshot": dict(wf.envelope.payload)})
        self._trace(wf, "validation", outcome)
        self.telemetry.observe("latency.validation", elapsed)
        if outcome != "accepted":
            self._terminate(wf, "cancelled", f"validation {outcome}: {'; '.join(reasons)}")
            return False
        return True

    def _resolve_mediation_assets(self, wf: WorkflowInstance) -> tuple[RuleSet, KnowledgeGraph]:
        assets = wf.pinned_versions["assets"]
        rules = RuleSet((), "0")
        kg = KnowledgeGraph([], [], "0")
        rs_asset = self.config.mediation_rule_set_asset
        if rs_asset and rs_asset in assets:
            rules = self._store.get(rs_asset, assets[rs_asset])
        kg_asset = self.config.mediation_kg_asset
        if kg_asset and kg_asset in assets:
            kg = self._store.get(kg_asset, assets[kg_asset])
        return rules, kg

    def _step_mediation(self, wf: WorkflowInstance) -> None:
        # Mediation applies only to model-originated envelopes (confidence present).
        if wf.envelope.confidence is None:
            return
        elapsed = self._tick()
        rules, kg = self._resolve_mediation_assets(wf)
        verdict = mediate(wf.envelope.payload, wf.envelope.confidence, {}, kg, rules)
        wf.mediation_verdict = verdict
        self._anchor_step(wf, EventType.MEDIATION, "symbolic-mediator", verdict.to_json())
        self._trace(wf, "mediation", verdict.disposition)
        self.telemetry.observe("latency.mediation", elapsed)

    def _step_policy(self, wf: WorkflowInstance) -> bool:
        elapsed = self._tick()
        envelope = wf.envelope
        attributes: dict[str, Any] = dict(envelope.payload)
        attributes["requestingModule"] = envelope.source_module
        attributes["actionType"] = envelope.action_type.code
        if envelope.confidence is not None:
            attributes["confidence"] = envelope.confidence
        request = ActionRequest(
            request_id=f"{wf.workflow_id}-req",
            requesting_module=envelope.source_module,
            action_type=envelope.action_type.code,
            attributes=attributes,
            envelope_ref=envelope.message_id,
        )
        decision = self._policy.evaluate(request, self._clock.now(), wf.policy_snapshot)
        wf.policy_decision = decision
        self._anchor_step(wf, EventType.POLICY_DECISION, "policy-engine", {
            "requestID": request.request_id,
            "requestingModule": request.requesting_module,
            "actionType": request.action_type,
            "decision": decision.to_json(),
        })
        self._trace(wf, "policy", decision.verdict)
        self.telemetry.observe("latency.policy", elapsed)
        if decision.verdict == "deny":
            self._build_and_anchor_rationale(wf, informational=True)
            self._anchor_step(wf, EventType.ESCALATION_LOGGED, "policy-engine", {
                "verdict": "deny",
                "violations": [v.to_json() for v in decision.violations],
            })
            self._terminate(wf, "cancelled", "policy-deny")
            return False
        return True

    def _thresholds(self, wf: WorkflowInstance) -> Thresholds:
        assets = wf.pinned_versions["assets"]
        asset_id = self.config.thresholds_asset
        if asset_id and asset_id in assets:
            content = self._store.get(asset_id, assets[asset_id])
            if isinstance(content, Thresholds):
                return content
            return Thresholds.from_json(content)
        return Thresholds()

    def _context_signals(self, envelope: MessageEnvelope) -> list[tuple[str, str]]:
        signals: list[tuple[str, str]] = []
        for text in envelope.payload.get("missingRules", []):
            signals.append(("missing-rule", text))
        for text in envelope.payload.get("missingEvidence", []):
            signals.append(("missing-evidence", text))
        if envelope.payload.get("distributionShift"):
            signals.append(("distribution-shift-flag", "distribution shift flagged upstream"))
        return signals

    def _step_epistemic(self, wf: WorkflowInstance) -> bool:
        elapsed = self._tick()
        assessment = self._monitor.assess_case(
            wf.workflow_id, wf.mediation_verdict, self._thresholds(wf),
            self._context_signals(wf.envelope))
        wf.assessment = assessment
        self._trace(wf, "epistemic", assessment.severity)
        self.telemetry.observe("latency.epistemic", elapsed)
        if assessment.severity in ("escalate", "degrade"):
            for signal in assessment.signals:
                if signal.kind == "missing-rule":
                    self._monitor.log_gap("missing-rule", signal.detail, wf.workflow_id)
                elif signal.kind == "unresolved-grounding":
                    self._monitor.log_gap("missing-edge", signal.detail, wf.workflow_id)
        if assessment.severity == "degrade":
            self._build_and_anchor_rationale(wf, informational=True)
            self._terminate(wf, "failed-safe", "epistemic-degrade")
            return False
        return True

    def _needs_escalation(self, wf: WorkflowInstance) -> bool:
        policy_escalates = wf.policy_decision is not None and wf.policy_decision.verdict == "escalate"
        epistemic_escalates = wf.assessment is not None and wf.assessment.severity == "escalate"
        return policy_escalates or epistemic_escalates

    def _open_review_gate(self, wf: WorkflowInstance) -> None:
        assert wf.rationale is not None
        approvals = self.config.default_required_approvals
        role = self.config.default_required_role
        deadline: Optional[str] = None
        if wf.policy_decision is not None:
            for violation in wf.policy_decision.escalation_rules():
                params = self._escalation_params(wf, violation.rule_id)
                approvals = max(approvals, int(params.get("requiredApprovals", 1)))
                if params.get("requiredRole"):
                    role = params["requiredRole"]
                if params.get("reviewDeadlineMinutes") and deadline is None:
                    due = self._clock.now() + timedelta(minutes=params["reviewDeadlineMinutes"])
                    deadline = isoformat_utc(due)
        case = self._gateway.open_case(
            wf.workflow_id, wf.rationale.rationale_id, wf.rationale.to_json(),
            approvals, role, deadline)
        wf.case_id = case.case_id
        wf.state = "blocked-on-review"
        self._trace(wf, "hitl", "case-opened")
        self.telemetry.set_gauge("escalation-queue-depth", len(self._gateway.queue()))

    def _escalation_params(self, wf: WorkflowInstance, rule_id: str) -> dict[str, Any]:
        if wf.policy_snapshot is None:
            return {}
        for policy in wf.policy_snapshot.policies:
            for rule in policy.rules:
                if rule.rule_id == rule_id:
                    return rule.params
        return {}

    # -- rationale -------------------------------------------------------------

    def build_rationale(self, wf: WorkflowInstance, informational: bool = False) -> RationaleObject:
        """Assemble the structured rationale for one workflow.

        Requires the policy step (and mediation, for model messages) to have
        completed so every field group can be populated.
        """
        if wf.policy_decision is None and not informational:
            raise IncompleteContext("policy step has not completed")
        if wf.envelope.confidence is not None and wf.mediation_verdict is None and not informational:
            raise IncompleteContext("mediation step has not completed for a model-originated message")
        envelope = wf.envelope
        payload = envelope.payload
        claim = payload.get("claim") or f"{envelope.action_type.code} requested by {envelope.source_module}"
        if informational:
            claim = f"action suppressed (fail-safe): {claim}"

        evidence: list[dict[str, Any]] = []
        schema = self._schemas.get(*envelope.schema_ref)
        field_specs = schema.field_map()
        for name, value in payload.items():
            if name in _NON_EVIDENCE_FIELDS:
                continue
            spec = field_specs.get(name)
            if spec is not None and spec.unit_field and spec.unit_field in payload:
                evidence.append({
                    "kind": "payload-field", "field": name, "value": value,
                    "unit": payload[spec.unit_field],
                    "detail": f"{name} = {value} {payload[spec.unit_field]}",
                })
            elif spec is not None and spec.name in schema.unit_companions():
                continue
            else:
                evidence.append({"kind": "payload-field", "field": name, "value": value,
                                 "detail": f"{name} = {value}"})
        if wf.mediation_verdict is not None:
            for entry in wf.mediation_verdict.grounding_report:
                if entry.resolved:
                    evidence.append({"kind": "kg-node", "entity": entry.entity,
                                     "nodeID": entry.node_id,
                                     "detail": f"grounded to {entry.node_id}"})
            for fired in wf.mediation_verdict.fired_rules:
                if fired.get("rationale"):
                    evidence.append({"kind": "rule", "ruleID": fired["ruleID"],
                                     "detail": fired["rationale"]})
        for sequence in wf.step_refs:
            evidence.append({"kind": "ledger", "sequence": sequence,
                             "detail": f"anchored step at sequence {sequence}"})
        if informational and payload.get("fallbackContent"):
            for item in payload["fallbackContent"]:
                evidence.append({"kind": "fallback", "detail": item})

        if wf.mediation_verdict is not None:
            confidence = wf.mediation_verdict.hybrid_confidence
        elif envelope.confidence is not None:
            confidence = envelope.confidence
        else:
            confidence = 1.0

        uncertainty = list(payload.get("uncertaintyNotes", []))
        if wf.assessment is not None:
            uncertainty.extend(wf.assessment.factors)

        policy_context: dict[str, Any] = {"policyVersions": wf.pinned_versions["policies"]}
        if wf.policy_decision is not None:
            policy_context["verdict"] = wf.policy_decision.verdict
            policy_context["violations"] = [v.to_json() for v in wf.policy_decision.violations]
        if wf.mediation_verdict is not None:
            policy_context["firedRules"] = [f["ruleID"] for f in wf.mediation_verdict.fired_rules]

        guideline_refs = []
        for asset_id, version in sorted(wf.pinned_versions["assets"].items()):
            record = self._registry.record(asset_id, version)
            if record.asset_kind not in ("rule-set", "knowledge-graph", "threshold-config"):
                continue
            guideline_refs.append({
                "assetID": asset_id,
                "label": record.metadata.get("label", asset_id),
                "version": version,
                "activeSince": self._deployed_since(asset_id, version),
            })

        return RationaleObject(
            rationale_id=self._idgen.next("rat"),
            claim=claim,
            evidence=evidence,
            confidence=confidence,
            uncertainty=uncertainty,
            policy_context=policy_context,
            guideline_refs=guideline_refs,
        )

    def _deployed_since(self, asset_id: str, version: str) -> str:
        since = ""
        for entry in self._registry.history(asset_id):
            if entry.event_type == EventType.DEPLOYMENT.value and entry.payload["version"] == version:
                since = entry.timestamp
            elif entry.event_type == EventType.ROLLBACK.value and entry.payload["toVersion"] == version:
                since = entry.timestamp
        return since

    def _build_and_anchor_rationale(self, wf: WorkflowInstance, informational: bool = False) -> None:
        wf.rationale = self.build_rationale(wf, informational=informational)
        self._anchor_step(wf, EventType.RATIONALE, "control-plane", wf.rationale.to_json())

    # -- review-gate resumption -------------------------------------------------

    def _revalidate_modified_payload(self, case: EscalationCase,
                                     payload: dict[str, Any]) -> tuple[bool, str]:
        """Modified payloads re-enter semantic validation and policy evaluation."""
        wf = self.workflows.get(case.workflow_ref)
        if wf is None:
            return False, f"unknown workflow {case.workflow_ref}"
        envelope = wf.envelope
        modified = MessageEnvelope(
            message_id=envelope.message_id,
            timestamp=envelope.timestamp,
            source_module=envelope.source_module,
            target_module=envelope.target_module,
            action_type=envelope.action_type,
            schema_ref=envelope.schema_ref,
            payload=dict(payload),
            confidence=envelope.confidence,
            provenance_refs=envelope.provenance_refs,
        )
        result = self._schemas.validate_message(modified)
        self._anchor_step(wf, EventType.MESSAGE_VALIDATED, case.workflow_ref, {
            "outcome": "accepted" if result.accepted else "rejected",
            "reasons": list(result.reasons),
            "caseID": case.case_id,
            "modified": True,
        })
        if not result.accepted:
            return False, f"modified payload rejected: {'; '.join(result.reasons)}"
        attributes = dict(payload)
        attributes["requestingModule"] = envelope.source_module
        attributes["actionType"] = envelope.action_type.code
        request = ActionRequest(
            request_id=f"{wf.workflow_id}-modified-req",
            requesting_module=envelope.source_module,
            action_type=envelope.action_type.code,
            attributes=attributes,
            envelope_ref=envelope.message_id,
        )
        decision = self._policy.evaluate(request, self._clock.now(), wf.policy_snapshot)
        self._anchor_step(wf, EventType.POLICY_DECISION, "policy-engine", {
            "requestID": request.request_id,
            "decision": decision.to_json(),
            "caseID": case.case_id,
            "modified": True,
        })
        if decision.verdict == "deny":
            return False, "modified payload denied by policy"
        return True, "modified payload accepted"

    def _on_case_resolution(self, case: EscalationCase) -> None:
        with self._lock:
            self._resume_queue.append(case.case_id)

    def pump(self) -> list[str]:
        """Process queued case resolutions; workflows resume here, never inline."""
        processed = []
        while True:
            with self._lock:
                if not self._resume_queue:
                    break
                case_id = self._resume_queue.pop(0)
            case = self._gateway.case(case_id)
            wf = self.workflows.get(case.workflow_ref)
            if wf is None or wf.state != "blocked-on-review":
                continue
            processed.append(case_id)
            self.telemetry.set_gauge("escalation-queue-depth", len(self._gateway.queue()))
            if case.permits_execution:
                outcome = "approved" if case.state == "approved" else "overridden-proceed"
                self._trace(wf, "hitl", outcome)
                if case.pending_payload is not None:
                    wf.envelope = MessageEnvelope(
                        message_id=wf.envelope.message_id,
                        timestamp=wf.envelope.timestamp,
                        source_module=wf.envelope.source_module,
                        target_module=wf.envelope.target_module,
                        action_type=wf.envelope.action_type,
                        schema_ref=wf.envelope.schema_ref,
                        payload=case.pending_payload,
                        confidence=wf.envelope.confidence,
                        provenance_refs=wf.envelope.provenance_refs,
                    )
                self._complete(wf)
            elif case.state == "expired":
                self._trace(wf, "hitl", "expired")
                self._terminate(wf, "failed-safe", "review-deadline-expired")
            else:
                outcome = "rejected" if case.state == "rejected" else "overridden-halt"
                self._trace(wf, "hitl", outcome)
                self._terminate(wf, "cancelled", f"review-{outcome}")
        return processed

    # -- completion: anchoring then routing --------------------------------------

    def _complete(self, wf: WorkflowInstance) -> None:
        elapsed = self._tick()
        assert wf.rationale is not None
        self._anchor_step(wf, EventType.ANCHOR, "control-plane", {
            "rationaleID": wf.rationale.rationale_id,
            "caseID": wf.case_id,
            "decisionSummary": {
                "policyVerdict": wf.policy_decision.verdict if wf.policy_decision else None,
                "mediation": wf.mediation_verdict.disposition if wf.mediation_verdict else None,
                "severity": wf.assessment.severity if wf.assessment else None,
            },
            "stepRefs": list(wf.step_refs),
        })
        self._trace(wf, "anchoring", "anchored")
        self.telemetry.observe("latency.anchoring", elapsed)
        self._route(wf)

    def _route(self, wf: WorkflowInstance) -> None:
        elapsed = self._tick()
        envelope = wf.envelope
        target = envelope.target_module
        if not self.routing.has(target):
            self._anchor_incident(wf, target, "no-route", "target module is not registered")
            self._terminate(wf, "failed-safe", f"no route to {target}")
            return
        endpoint = self.routing.get(target)
        if envelope.schema_ref[0] not in endpoint.accepts_schemas:
            self._anchor_incident(wf, target, "schema-mismatch",
                                  f"{target} does not accept schema {envelope.schema_ref[0]}")
            self._terminate(wf, "failed-safe", f"{target} does not accept the message schema")
            return
        now = self._clock.now()
        allowed, transition = endpoint.breaker.allow(now)
        if transition:
            self._anchor_breaker(target, transition)
        if allowed:
            outcome = endpoint.deliver(envelope, now)
            if outcome == "ack":
                change = endpoint.breaker.record_success()
                if change:
                    self._anchor_breaker(target, change)
                self._finish_routing(wf, target, fallback=False, elapsed=elapsed)
                return
            self.handle_module_failure(target, outcome, wf)
        else:
            self._anchor_incident(wf, target, "breaker-open", "delivery skipped; breaker open")
        self._route_fallback(wf, endpoint, elapsed)

    def _route_fallback(self, wf: WorkflowInstance, endpoint: ModuleEndpoint,
                        elapsed: float) -> None:
        fallback_id = endpoint.fallback_route
        if fallback_id and self.routing.has(fallback_id):
            fallback = self.routing.get(fallback_id)
            if wf.envelope.schema_ref[0] in fallback.accepts_schemas:
                allowed, transition = fallback.breaker.allow(self._clock.now())
                if transition:
                    self._anchor_breaker(fallback_id, transition)
                if allowed:
                    outcome = fallback.deliver(wf.envelope, self._clock.now())
                    if outcome == "ack":
                        change = fallback.breaker.record_success()
                        if change:
                            self._anchor_breaker(fallback_id, change)
                        self._finish_routing(wf, fallback_id, fallback=True, elapsed=elapsed)
                        return
                    self.handle_module_failure(fallback_id, outcome, wf)
        self._terminate(wf, "failed-safe", f"delivery to {endpoint.module_id} failed and no "
                                           "fallback route succeeded")

    def _finish_routing(self, wf: WorkflowInstance, target: str, fallback: bool,
                        elapsed: float) -> None:
        self._anchor_step(wf, EventType.ROUTING, "control-plane", {
            "target": target,
            "fallback": fallback,
            "provenanceHead": self._ledger.head().entry_hash if self._ledger.head() else "",
        })
        self._trace(wf, "routing", f"delivered-to-{target}" + ("-fallback" if fallback else ""))
        self.telemetry.observe("latency.routing", elapsed)
        wf.routed_to = target
        wf.used_fallback = fallback
        wf.state = "completed"
        self._ledger.append(EventType.WORKFLOW, "control-plane", {
            "workflowID": wf.workflow_id,
            "messageID": wf.envelope.message_id,
            "state": "completed",
            "routedTo": target,
        })
        if wf.dispatched_at is not None:
            total = (self._clock.now() - wf.dispatched_at).total_seconds()
            self.telemetry.observe("latency.total", total)

    def handle_module_failure(self, module_id: str, failure_kind: str,
                              wf: Optional[WorkflowInstance] = None) -> str:
        """Contain one module's failure: breaker transition plus incident anchor.

        Other modules' breakers are never touched here.
        """
        endpoint = self.routing.get(module_id)
        transition = endpoint.breaker.record_failure(failure_kind, self._clock.now())
        if wf is not None:
            self._anchor_incident(wf, module_id, failure_kind,
                                  f"delivery to {module_id} failed ({failure_kind})")
        else:
            self._ledger.append(EventType.INCIDENT, "control-plane", {
                "module": module_id, "kind": failure_kind,
            })
        if transition:
            self._anchor_breaker(module_id, transition)
        self.telemetry.increment(f"module-failures.{module_id}")
        return endpoint.breaker.state

    def _anchor_incident(self, wf: WorkflowInstance, module_id: str, kind: str,
                         detail: str) -> None:
        self._anchor_step(wf, EventType.INCIDENT, "control-plane", {
            "module": module_id, "kind": kind, "detail": detail,
        })

    def _anchor_breaker(self, module_id: str, new_state: str) -> None:
        self._ledger.append(EventType.BREAKER_TRANSITION, "control-plane", {
            "module": module_id, "state": new_state,
        })

    def _terminate(self, wf: WorkflowInstance, state: str, reason: str) -> None:
        wf.state = state
        wf.terminal_reason = reason
        self._ledger.append(EventType.WORKFLOW, "control-plane", {
            "workflowID": wf.workflow_id,
            "messageID": wf.envelope.message_id,
            "state": state,
            "reason": reason,
        })
        if wf.dispatched_at is not None:
            total = (self._clock.now() - wf.dispatched_at).total_seconds()
            self.telemetry.observe("latency.total", total)

    # -- telemetry ----------------------------------------------------------------

    def flag_anomalies(self) -> list[dict[str, Any]]:
        breaches = self.telemetry.check_anomalies()
        for breach in breaches:
            self._ledger.append(EventType.ANOMALY, "observability", breach)
        return breaches

    def workflow_by_message(self, message_id: str) -> Optional[WorkflowInstance]:
        wf_id = self._by_message.get(message_id)
        return self.workflows.get(wf_id) if wf_id else None
