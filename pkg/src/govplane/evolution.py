"""Governed knowledge-update lifecycle.

Every change to rules, ontology terms, knowledge-graph edges, or thresholds
moves through a strict stage machine — propose, validate, simulate,
approve, apply, anchor, monitor — with required artifacts at each gate.
Application mints and deploys a new asset version through the lifecycle
registry and records a rollback target; a monitoring breach reverts to it
automatically.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Any, Optional

from .authz import RoleTable
from .ledger import EventType, Ledger
from .mediation import DomainRule, KGEdge, KGNode, KnowledgeGraph, RuleSet
from .registry import ContentStore, LifecycleRegistry
from .semantic import OntologyTerm

STAGES = ("Proposed", "Validated", "Simulated", "Approved", "Applied", "Anchored", "Monitoring")
TERMINAL_STATES = ("Reverted",)


class EvolutionError(Exception):
    pass


class EmptyChangeSet(EvolutionError):
    pass


class OutOfOrder(EvolutionError):
    pass


class MissingArtifact(EvolutionError):
    pass


class SimulationFailed(EvolutionError):
    pass


class NotMonitoring(EvolutionError):
    pass


class RejectedProposal(EvolutionError):
    pass


@dataclass(frozen=True)
class SimulationReport:
    proposal_id: str
    corpus_ref: str
    metrics: dict[str, float]
    criteria: dict[str, float]
    passed: bool

    def to_json(self) -> dict[str, Any]:
        return {
            "proposalID": self.proposal_id,
            "corpusRef": self.corpus_ref,
            "metrics": self.metrics,
            "criteria": self.criteria,
            "pass": self.passed,
        }


@dataclass
class ChangeProposal:
    proposal_id: str
    target_asset_id: str
    change_set: list[dict[str, Any]]
    evidence: str
    state: str = "Proposed"
    stage_records: list[dict[str, Any]] = field(default_factory=list)
    source_gap_id: Optional[str] = None
    rollback_target: Optional[str] = None
    minted_version: Optional[str] = None
    revert_criteria: dict[str, float] = field(default_factory=dict)
    rejected_at_stage: Optional[str] = None

    def to_json(self) -> dict[str, Any]:
        return {
            "proposalID": self.proposal_id,
            "targetAssetID": self.target_asset_id,
            "changeSet": self.change_set,
            "evidence": self.evidence,
            "state": self.state,
            "stageRecords": self.stage_records,
            "sourceGapID": self.source_gap_id,
            "rollbackTarget": self.rollback_target,
            "mintedVersion": self.minted_version,
            "revertCriteria": self.revert_criteria,
            "rejectedAtStage": self.rejected_at_stage,
        }


def mint_next_version(current: str) -> str:
    """Monotone successor: integers increment, dotted versions bump the last part."""
    if current.isdigit():
        return str(int(current) + 1)
    parts = current.split(".")
    if all(p.isdigit() for p in parts):
        parts[-1] = str(int(parts[-1]) + 1)
        return ".".join(parts)
    raise EvolutionError(f"cannot mint a successor for version {current!r}")


def apply_change_set(asset_kind: str, content: Any, change_set: list[dict[str, Any]],
                     new_version: str) -> Any:
    """Apply a structured diff to deployed content, yielding the new version's content."""
    if asset_kind == "rule-set":
        rules = {r.rule_id: r for r in content.rules}
        for op in change_set:
            kind = op["op"]
            if kind == "add-rule":
                rule = DomainRule.from_json(op["rule"])
                if rule.rule_id in rules:
                    raise EvolutionError(f"rule {rule.rule_id!r} already exists")
                rules[rule.rule_id] = rule
            elif kind == "remove-rule":
                if op["ruleID"] not in rules:
                    raise EvolutionError(f"rule {op['ruleID']!r} not found")
                del rules[op["ruleID"]]
            elif kind == "modify-rule":
                rule = DomainRule.from_json(op["rule"])
                if rule.rule_id not in rules:
                    raise EvolutionError(f"rule {rule.rule_id!r} not found")
                rules[rule.rule_id] = rule
            else:
                raise EvolutionError(f"op {kind!r} does not apply to rule sets")
        return RuleSet(tuple(sorted(rules.values(), key=lambda r: r.rule_id)), new_version)
    if asset_kind == "knowledge-graph":
        nodes = {n.node_id: n for n in content.nodes()}
        edges = list(content.edges())
        for op in change_set:
            kind = op["op"]
            if kind == "add-node":
                node = KGNode(op["node"]["nodeID"], op["node"].get("kind", "entity"),
                              dict(op["node"].get("attributes", {})))
                if node.node_id in nodes:
                    raise EvolutionError(f"node {node.node_id!r} already exists")
                nodes[node.node_id] = node
            elif kind == "add-edge":
                spec = op["edge"]
                edges.append(KGEdge(spec["from"], spec["relation"], spec["to"],
                                    dict(spec.get("attributes", {}))))
            elif kind == "remove-edge":
                spec = op["edge"]
                before = len(edges)
                edges = [e for e in edges
                         if not (e.from_id == spec["from"] and e.relation == spec["relation"]
                                 and e.to_id == spec["to"])]
                if len(edges) == before:
                    raise EvolutionError("edge to remove not found")
            else:
                raise EvolutionError(f"op {kind!r} does not apply to knowledge graphs")
        return KnowledgeGraph(list(nodes.values()), edges, new_version)
    if asset_kind == "ontology":
        terms = {(t.vocabulary, t.code): t for t in content}
        for op in change_set:
            if op["op"] != "add-term":
                raise EvolutionError(f"op {op['op']!r} does not apply to ontologies")
            spec = op["term"]
            term = OntologyTerm(spec["vocabulary"], spec["code"], spec["label"],
                                bool(spec.get("deprecated", False)))
            terms[(term.vocabulary, term.code)] = term
        return list(terms.values())
    if asset_kind == "threshold-config":
        updated = dict(content.to_json() if hasattr(content, "to_json") else content)
        for op in change_set:
            if op["op"] != "set-threshold":
                raise EvolutionError(f"op {op['op']!r} does not apply to threshold configs")
            updated[op["key"]] = op["value"]
        updated["version"] = new_version
        return updated
    raise EvolutionError(f"asset kind {asset_kind!r} is not evolvable")


class KnowledgeEvolution:
    """Stage machine for change proposals, serialized per target asset."""

    def __init__(self, ledger: Ledger, registry: LifecycleRegistry, store: ContentStore,
                 role_table: RoleTable, system_actor: str = "system-automation") -> None:
        self._ledger = ledger
        self._registry = registry
        self._store = store
        self._role_table = role_table
        self._system_actor = system_actor
        self._proposals: dict[str, ChangeProposal] = {}
        self._counter = 0
        self._asset_locks: dict[str, threading.Lock] = {}
        self._lock = threading.Lock()

    def _asset_lock(self, asset_id: str) -> threading.Lock:
        with self._lock:
            return self._asset_locks.setdefault(asset_id, threading.Lock())

    def proposal(self, proposal_id: str) -> ChangeProposal:
        if proposal_id not in self._proposals:
            raise EvolutionError(f"no proposal {proposal_id!r}")
        return self._proposals[proposal_id]

    def proposals(self) -> list[ChangeProposal]:
        return [self._proposals[k] for k in sorted(self._proposals)]

    def propose(self, target_asset_id: str, change_set: list[dict[str, Any]], evidence: str,
                actor: str = "proposer", source_gap_id: Optional[str] = None) -> ChangeProposal:
        if not change_set:
            raise EmptyChangeSet("a proposal needs a non-empty change set")
        if not self._registry.versions(target_asset_id):
            from .registry import UnknownAsset
            raise UnknownAsset(f"no asset {target_asset_id!r}")
        with self._lock:
            self._counter += 1
            proposal = ChangeProposal(
                proposal_id=f"prop-{self._counter:06d}",
                target_asset_id=target_asset_id,
                change_set=list(change_set),
                evidence=evidence,
                source_gap_id=source_gap_id,
            )
            self._proposals[proposal.proposal_id] = proposal
        self._record_stage(proposal, "Proposed", actor, {"evidence": evidence,
                                                         "sourceGapID": source_gap_id})
        self._ledger.append(EventType.PROPOSAL, actor, proposal.to_json())
        return proposal

    def _record_stage(self, proposal: ChangeProposal, stage: str, actor: str,
                      artifact_refs: dict[str, Any]) -> None:
        record = {
            "stage": stage,
            "actor": actor,
            "outcome": "ok",
            "artifactRefs": artifact_refs,
            "at": self._ledger.clock.now_iso(),
        }
        proposal.stage_records.append(record)

    def advance(self, proposal_id: str, stage: str, actor: str,
                artifact: Optional[dict[str, Any]] = None) -> ChangeProposal:
        """Move a proposal to ``stage``, which must be the next lifecycle stage."""
        proposal = self.proposal(proposal_id)
        with self._asset_lock(proposal.target_asset_id):
            if proposal.state.startswith("RejectedAtStage") or proposal.state in TERMINAL_STATES:
                raise RejectedProposal(f"proposal {proposal_id} is terminal ({proposal.state})")
            current_index = STAGES.index(proposal.state)
            if stage not in STAGES:
                raise OutOfOrder(f"unknown stage {stage!r}")
            if STAGES.index(stage) != current_index + 1:
                raise OutOfOrder(
                    f"proposal {proposal_id} is at {proposal.state}; next stage is "
                    f"{STAGES[current_index + 1] if current_index + 1 < len(STAGES) else 'none'}, "
                    f"not {stage}")
            artifact = artifact or {}
            handler = {
                "Validated": self._advance_validated,
                "Simulated": self._advance_simulated,
                "Approved": self._advance_approved,
                "Applied": self._advance_applied,
                "Anchored": self._advance_anchored,
                "Monitoring": self._advance_monitoring,
            }[stage]
            refs = handler(proposal, actor, artifact)
            proposal.state = stage
            self._record_stage(proposal, stage, actor, refs)
            self._ledger.append(EventType.STAGE_ADVANCE, actor, {
                "proposalID": proposal.proposal_id,
                "targetAssetID": proposal.target_asset_id,
                "stage": stage,
                "artifactRefs": refs,
            })
            return proposal

    def _advance_validated(self, proposal: ChangeProposal, actor: str,
                           artifact: dict[str, Any]) -> dict[str, Any]:
        if not artifact.get("validation"):
            raise MissingArtifact("Validate requires a validation record")
        return {"validation": artifact["validation"]}

    def _advance_simulated(self, proposal: ChangeProposal, actor: str,
                           artifact: dict[str, Any]) -> dict[str, Any]:
        report = artifact.get("report")
        if report is None:
            raise MissingArtifact("Simulate requires a SimulationReport")
        if isinstance(report, SimulationReport):
            report_json = report.to_json()
        else:
            report_json = dict(report)
        if not report_json.get("pass"):
            raise SimulationFailed(f"simulation did not pass: {report_json.get('metrics')}")
        return {"report": report_json}

    def _advance_approved(self, proposal: ChangeProposal, actor: str,
                          artifact: dict[str, Any]) -> dict[str, Any]:
        self._role_table.require(actor, "evolution-approve")
        criteria = artifact.get("revertCriteria")
        if not criteria:
            raise MissingArtifact("Approve requires declared revert criteria")
        proposal.revert_criteria = dict(criteria)
        return {"approver": actor, "revertCriteria": proposal.revert_criteria}

    def _advance_applied(self, proposal: ChangeProposal, actor: str,
                         artifact: dict[str, Any]) -> dict[str, Any]:
        asset_id = proposal.target_asset_id
        current = self._registry.deployed_version(asset_id)
        if current is None:
            raise EvolutionError(f"asset {asset_id!r} has no deployed version to evolve")
        record = self._registry.record(asset_id, current)
        new_version = mint_next_version(current)
        new_content = apply_change_set(record.asset_kind, self._store.get(asset_id, current),
                                       proposal.change_set, new_version)
        self._store.put(asset_id, new_version, new_content)
        self._registry.register(asset_id, record.asset_kind, new_version, record.owner,
                                metadata={"proposalID": proposal.proposal_id},
                                supersedes=current)
        self._registry.mark_validated(asset_id, new_version,
                                      {"proposalID": proposal.proposal_id}, actor=actor)
        entry = self._registry.deploy(asset_id, new_version, actor)
        proposal.rollback_target = current
        proposal.minted_version = new_version
        return {"deployedVersion": new_version, "rollbackTarget": current,
                "deploymentSequence": entry.sequence}

    def _advance_anchored(self, proposal: ChangeProposal, actor: str,
                          artifact: dict[str, Any]) -> dict[str, Any]:
        receipt = self._ledger.append(EventType.ANCHOR, actor, {
            "proposalID": proposal.proposal_id,
            "targetAssetID": proposal.target_asset_id,
            "deployedVersion": proposal.minted_version,
        })
        return {"anchorSequence": receipt.sequence}

    def _advance_monitoring(self, proposal: ChangeProposal, actor: str,
                            artifact: dict[str, Any]) -> dict[str, Any]:
        return {"watch": "open", "revertCriteria": proposal.revert_criteria}

    def reject(self, proposal_id: str, actor: str, reason: str) -> ChangeProposal:
        """Terminal rejection at the proposal's current stage; resubmit as a new proposal."""
        proposal = self.proposal(proposal_id)
        with self._asset_lock(proposal.target_asset_id):
            if proposal.state not in STAGES or proposal.state in ("Applied", "Anchored", "Monitoring"):
                raise EvolutionError(f"proposal {proposal_id} cannot be rejected at {proposal.state}")
            stage = proposal.state
            proposal.rejected_at_stage = stage
            proposal.state = f"RejectedAtStage({stage})"
            proposal.stage_records.append({
                "stage": proposal.state, "actor": actor, "outcome": "rejected",
                "artifactRefs": {"reason": reason}, "at": self._ledger.clock.now_iso(),
            })
        self._ledger.append(EventType.STAGE_ADVANCE, actor, {
            "proposalID": proposal_id, "stage": proposal.state, "reason": reason,
        })
        return proposal

    def monitor_tick(self, proposal_id: str, observed_metrics: dict[str, float],
                     actor: str = "monitor") -> ChangeProposal:
        """Check observed metrics against the declared revert criteria.

        A breach triggers an automatic rollback through the registry and the
        proposal becomes Reverted; otherwise monitoring continues. Every tick
        is anchored.
        """
        proposal = self.proposal(proposal_id)
        with self._asset_lock(proposal.target_asset_id):
            if proposal.state != "Monitoring":
                raise NotMonitoring(f"proposal {proposal_id} is {proposal.state}, not Monitoring")
            breaches = {
                metric: (observed_metrics.get(metric), ceiling)
                for metric, ceiling in proposal.revert_criteria.items()
                if observed_metrics.get(metric) is not None and observed_metrics[metric] > ceiling
            }
            outcome = "reverted" if breaches else "within-bounds"
            self._ledger.append(EventType.MONITOR_TICK, actor, {
                "proposalID": proposal_id,
                "observedMetrics": observed_metrics,
                "revertCriteria": proposal.revert_criteria,
                "outcome": outcome,
                "breaches": {m: {"observed": o, "ceiling": c} for m, (o, c) in breaches.items()},
            })
            if breaches:
                self._registry.rollback(proposal.target_asset_id, proposal.rollback_target,
                                        self._system_actor,
                                        reason=f"auto-revert of {proposal_id}: "
                                               f"{', '.join(sorted(breaches))} breached")
                proposal.state = "Reverted"
                proposal.stage_records.append({
                    "stage": "Reverted", "actor": self._system_actor, "outcome": "auto-revert",
                    "artifactRefs": {"breaches": sorted(breaches)},
                    "at": self._ledger.clock.now_iso(),
                })
            return proposal
