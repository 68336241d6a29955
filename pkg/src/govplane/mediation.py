"""Symbolic mediation of model outputs.

Statistical model outputs never reach action directly: a closed rule
language plus knowledge-graph grounding sits in between. Fired rules can
block the output outright, flag an inconsistency, or adjust its confidence;
the hybrid confidence combines the model's own score with the symbolic
result multiplicatively, so it is bounded and monotone under penalties.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

UNRESOLVED_ENTITY_MULTIPLIER = 0.8

EFFECT_KINDS = ("block", "flag-inconsistency", "adjust-confidence")

COMPARISONS = {
    "gt": lambda a, b: a > b,
    "ge": lambda a, b: a >= b,
    "lt": lambda a, b: a < b,
    "le": lambda a, b: a <= b,
    "eq": lambda a, b: a == b,
    "ne": lambda a, b: a != b,
}


class MediationError(Exception):
    pass


@dataclass(frozen=True)
class KGNode:
    node_id: str
    kind: str = "entity"
    attributes: dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class KGEdge:
    from_id: str
    relation: str
    to_id: str
    attributes: dict[str, Any] = field(default_factory=dict)


class KnowledgeGraph:
    """Immutable entity/relation store for grounding model outputs."""

    def __init__(self, nodes: list[KGNode], edges: list[KGEdge], version: str = "1") -> None:
        self._nodes = {n.node_id: n for n in nodes}
        if len(self._nodes) != len(nodes):
            raise MediationError("duplicate node ids")
        for edge in edges:
            if edge.from_id not in self._nodes or edge.to_id not in self._nodes:
                raise MediationError(
                    f"edge {edge.from_id}-{edge.relation}->{edge.to_id} references a missing node")
        self._edges = tuple(edges)
        self.version = version

    def has_node(self, node_id: str) -> bool:
        return node_id in self._nodes

    def node(self, node_id: str) -> KGNode:
        return self._nodes[node_id]

    def nodes(self) -> list[KGNode]:
        return list(self._nodes.values())

    def edges(self) -> tuple[KGEdge, ...]:
        return self._edges

    def edge_exists(self, from_id: str, relation: str, to_id: str) -> bool:
        return any(e.from_id == from_id and e.relation == relation and e.to_id == to_id
                   for e in self._edges)

    def to_json(self) -> dict[str, Any]:
        return {
            "version": self.version,
            "nodes": [{"nodeID": n.node_id, "kind": n.kind, "attributes": n.attributes}
                      for n in self.nodes()],
            "edges": [{"from": e.from_id, "relation": e.relation, "to": e.to_id,
                       "attributes": e.attributes} for e in self._edges],
        }

    @staticmethod
    def from_json(obj: dict[str, Any]) -> "KnowledgeGraph":
        nodes = [KGNode(n["nodeID"], n.get("kind", "entity"), dict(n.get("attributes", {})))
                 for n in obj.get("nodes", ())]
        edges = [KGEdge(e["from"], e["relation"], e["to"], dict(e.get("attributes", {})))
                 for e in obj.get("edges", ())]
        return KnowledgeGraph(nodes, edges, str(obj.get("version", "1")))

    @staticmethod
    def load_file(path: str | Path) -> "KnowledgeGraph":
        return KnowledgeGraph.from_json(json.loads(Path(path).read_text(encoding="utf-8")))

    @staticmethod
    def load_edge_list(path: str | Path, version: str = "1") -> "KnowledgeGraph":
        """Load `from<TAB>relation<TAB>to` lines; nodes are created implicitly."""
        nodes: dict[str, KGNode] = {}
        edges: list[KGEdge] = []
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise MediationError(f"{path}:{lineno}: malformed edge record")
            src, relation, dst = parts
            nodes.setdefault(src, KGNode(src))
            nodes.setdefault(dst, KGNode(dst))
            edges.append(KGEdge(src, relation, dst))
        return KnowledgeGraph(list(nodes.values()), edges, version)


@dataclass(frozen=True)
class Effect:
    kind: str
    multiplier: float = 1.0
    direction: str = "down"

    def __post_init__(self) -> None:
        if self.kind not in EFFECT_KINDS:
            raise MediationError(f"unknown effect kind {self.kind!r}")
        if self.kind == "adjust-confidence":
            if self.direction != "down":
                raise MediationError("only downward confidence adjustments are supported")
            if not (0.0 < self.multiplier <= 1.0):
                raise MediationError("adjustment multiplier must lie in (0, 1]")

    def to_json(self) -> dict[str, Any]:
        obj: dict[str, Any] = {"kind": self.kind}
        if self.kind == "adjust-confidence":
            obj["direction"] = self.direction
            obj["multiplier"] = self.multiplier
        return obj

    @staticmethod
    def from_json(obj: dict[str, Any]) -> "Effect":
        return Effect(obj["kind"], obj.get("multiplier", 1.0), obj.get("direction", "down"))


@dataclass(frozen=True)
class DomainRule:
    """Guarded check applied to a model output before any action.

    The guard is a closed predicate tree (comparisons, set membership,
    presence, knowledge-graph edge queries, and/or/not) over the namespace
    ``output.*`` / ``context.*``. Rules fire in ruleID order; effects are
    multiplicative, so ordering affects only the report listing.
    """

    rule_id: str
    guard: dict[str, Any]
    effect: Effect
    rationale_text: str = ""

    def to_json(self) -> dict[str, Any]:
        return {
            "ruleID": self.rule_id,
            "guard": self.guard,
            "effect": self.effect.to_json(),
            "rationale": self.rationale_text,
        }

    @staticmethod
    def from_json(obj: dict[str, Any]) -> "DomainRule":
        return DomainRule(
            rule_id=obj["ruleID"],
            guard=dict(obj["guard"]),
            effect=Effect.from_json(obj["effect"]),
            rationale_text=obj.get("rationale", ""),
        )


@dataclass(frozen=True)
class RuleSet:
    """Deployable collection of domain rules."""

    rules: tuple[DomainRule, ...]
    version: str = "1"

    def to_json(self) -> dict[str, Any]:
        return {"version": self.version, "rules": [r.to_json() for r in self.rules]}

    @staticmethod
    def from_json(obj: dict[str, Any]) -> "RuleSet":
        return RuleSet(tuple(DomainRule.from_json(r) for r in obj.get("rules", ())),
                       str(obj.get("version", "1")))

    @staticmethod
    def load_file(path: str | Path) -> "RuleSet":
        return RuleSet.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class GroundingEntry:
    entity: str
    node_id: Optional[str]

    @property
    def resolved(self) -> bool:
        return self.node_id is not None

    def to_json(self) -> dict[str, Any]:
        return {"entity": self.entity, "nodeID": self.node_id, "resolved": self.resolved}


@dataclass(frozen=True)
class MediationVerdict:
    disposition: str  # pass | blocked | flagged
    raw_confidence: float
    symbolic_score: float
    hybrid_confidence: float
    fired_rules: tuple[dict[str, Any], ...]
    grounding_report: tuple[GroundingEntry, ...]

    @property
    def unresolved_entities(self) -> list[str]:
        return [g.entity for g in self.grounding_report if not g.resolved]

    def to_json(self) -> dict[str, Any]:
        return {
            "disposition": self.disposition,
            "rawConfidence": self.raw_confidence,
            "symbolicScore": self.symbolic_score,
            "hybridConfidence": self.hybrid_confidence,
            "firedRules": list(self.fired_rules),
            "groundingReport": [g.to_json() for g in self.grounding_report],
        }


_MISSING = object()


def _resolve_path(namespace: dict[str, Any], path: str) -> Any:
    value: Any = namespace
    for part in path.split("."):
        if not isinstance(value, dict) or part not in value:
            return _MISSING
        value = value[part]
    return value


def _resolve_operand(namespace: dict[str, Any], operand: Any) -> Any:
    if isinstance(operand, dict):
        if "path" in operand:
            return _resolve_path(namespace, operand["path"])
        if "node" in operand:
            return operand["node"]
        raise MediationError(f"operand {operand!r} must carry 'path' or 'node'")
    return operand


def eval_guard(guard: dict[str, Any], namespace: dict[str, Any], kg: KnowledgeGraph) -> bool:
    """Total evaluation: unresolvable paths make comparisons false, never raise."""
    op = guard.get("op")
    if op in COMPARISONS:
        value = _resolve_path(namespace, guard["subject"])
        if value is _MISSING:
            return False
        try:
            return bool(COMPARISONS[op](value, guard["value"]))
        except TypeError:
            return False
    if op == "in" or op == "not-in":
        value = _resolve_path(namespace, guard["subject"])
        if value is _MISSING:
            return False
        return (value in guard["values"]) if op == "in" else (value not in guard["values"])
    if op == "present":
        return _resolve_path(namespace, guard["subject"]) is not _MISSING
    if op == "absent":
        return _resolve_path(namespace, guard["subject"]) is _MISSING
    if op == "edge-exists" or op == "edge-absent":
        src = _resolve_operand(namespace, guard["from"])
        dst = _resolve_operand(namespace, guard["to"])
        if src is _MISSING or dst is _MISSING:
            return False
        exists = kg.edge_exists(str(src), guard["relation"], str(dst))
        return exists if op == "edge-exists" else not exists
    if op == "all":
        return all(eval_guard(c, namespace, kg) for c in guard["clauses"])
    if op == "any":
        return any(eval_guard(c, namespace, kg) for c in guard["clauses"])
    if op == "not":
        return not eval_guard(guard["clause"], namespace, kg)
    raise MediationError(f"unknown guard op {op!r}")


def ground(model_output: dict[str, Any], kg: KnowledgeGraph) -> tuple[GroundingEntry, ...]:
    """Resolve every entity reference in the output; no partial resolution.

    Entity references are the strings listed under ``entityRefs``.
    """
    refs = model_output.get("entityRefs", [])
    report = []
    for entity in refs:
        node_id = entity if kg.has_node(entity) else None
        report.append(GroundingEntry(entity, node_id))
    return tuple(report)


def mediate(model_output: Optional[dict[str, Any]], raw_confidence: Optional[float],
            context: Optional[dict[str, Any]], kg: KnowledgeGraph,
            rules: RuleSet) -> MediationVerdict:
    """Run every applicable rule and grounding check over one model output.

    Never raises on content. A missing output or confidence yields a flagged
    verdict with zero confidence rather than an error.
    """
    fired: list[dict[str, Any]] = []
    missing_input = False
    if model_output is None:
        model_output = {}
        missing_input = True
        fired.append({"ruleID": "missing-input", "effect": {"kind": "flag-inconsistency"},
                      "rationale": "model output absent"})
    if raw_confidence is None:
        raw_confidence = 0.0
        missing_input = True
        fired.append({"ruleID": "missing-input-confidence", "effect": {"kind": "flag-inconsistency"},
                      "rationale": "model confidence absent"})
    raw_confidence = min(max(float(raw_confidence), 0.0), 1.0)

    grounding = ground(model_output, kg)
    namespace = {"output": model_output, "context": context or {}}

    blocked = False
    flagged = missing_input
    symbolic_score = 1.0
    for rule in sorted(rules.rules, key=lambda r: r.rule_id):
        if not eval_guard(rule.guard, namespace, kg):
            continue
        fired.append({"ruleID": rule.rule_id, "effect": rule.effect.to_json(),
                      "rationale": rule.rationale_text})
        if rule.effect.kind == "block":
            blocked = True
        elif rule.effect.kind == "flag-inconsistency":
            flagged = True
        elif rule.effect.kind == "adjust-confidence":
            symbolic_score *= rule.effect.multiplier

    for entry in grounding:
        if not entry.resolved:
            symbolic_score *= UNRESOLVED_ENTITY_MULTIPLIER
    symbolic_score = min(max(symbolic_score, 0.0), 1.0)
    hybrid = min(max(raw_confidence * symbolic_score, 0.0), 1.0)

    if blocked:
        disposition = "blocked"
    elif flagged or symbolic_score < 1.0:
        disposition = "flagged"
    else:
        disposition = "pass"
    return MediationVerdict(
        disposition=disposition,
        raw_confidence=raw_confidence,
        symbolic_score=symbolic_score,
        hybrid_confidence=hybrid,
        fired_rules=tuple(fired),
        grounding_report=grounding,
    )
