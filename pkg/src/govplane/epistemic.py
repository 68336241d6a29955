"""Epistemic uncertainty assessment and knowledge-gap logging.

After mediation, every case is assessed against a versioned threshold
configuration. Cases the system cannot support confidently are escalated to
human review instead of acted on; blocked outputs degrade to a fail-safe
mode. Detected knowledge gaps are deduplicated, anchored, and handed to the
governed update pipeline as draft proposals.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional

from .canonical import digest
from .ledger import EventType, Ledger
from .mediation import MediationVerdict

SIGNAL_KINDS = (
    "low-confidence",
    "unresolved-grounding",
    "missing-rule",
    "distribution-shift-flag",
    "missing-evidence",
    "blocked-output",
)

GAP_KINDS = ("missing-edge", "missing-rule", "missing-term")


class EpistemicError(Exception):
    pass


class UnknownCase(EpistemicError):
    pass


@dataclass(frozen=True)
class Thresholds:
    """Versioned escalation configuration (a lifecycle asset, not ground truth)."""

    version: str = "1"
    escalate_below: float = 0.60
    warn_below: float = 0.80

    def to_json(self) -> dict[str, Any]:
        return {"version": self.version, "escalateBelow": self.escalate_below,
                "warnBelow": self.warn_below}

    @staticmethod
    def from_json(obj: dict[str, Any]) -> "Thresholds":
        return Thresholds(str(obj.get("version", "1")),
                          float(obj.get("escalateBelow", 0.60)),
                          float(obj.get("warnBelow", 0.80)))

    @staticmethod
    def load_file(path: str | Path) -> "Thresholds":
        return Thresholds.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class Signal:
    kind: str
    detail: str
    escalates: bool

    def to_json(self) -> dict[str, Any]:
        return {"kind": self.kind, "detail": self.detail, "escalates": self.escalates}


@dataclass(frozen=True)
class UncertaintyAssessment:
    case_id: str
    signals: tuple[Signal, ...]
    severity: str  # proceed | escalate | degrade
    thresholds_version: str

    @property
    def factors(self) -> list[str]:
        """Human-readable list of the factors causing uncertainty."""
        return [f"{s.kind}: {s.detail}" for s in self.signals]

    def to_json(self) -> dict[str, Any]:
        return {
            "caseID": self.case_id,
            "signals": [s.to_json() for s in self.signals],
            "severity": self.severity,
            "thresholdsVersion": self.thresholds_version,
        }


@dataclass(frozen=True)
class KnowledgeGap:
    gap_id: str
    kind: str
    description: str
    source_case_id: str
    logged_at: str

    def __post_init__(self) -> None:
        if self.kind not in GAP_KINDS:
            raise EpistemicError(f"unknown gap kind {self.kind!r}")
        if not self.description.strip():
            raise EpistemicError("gap description must be non-empty")

    def content_key(self) -> str:
        return digest({"kind": self.kind, "description": self.description,
                       "case": self.source_case_id})

    def to_json(self) -> dict[str, Any]:
        return {
            "gapID": self.gap_id,
            "kind": self.kind,
            "description": self.description,
            "sourceCaseID": self.source_case_id,
            "loggedAt": self.logged_at,
        }


def assess(case_id: str, verdict: Optional[MediationVerdict], thresholds: Thresholds,
           context_signals: Optional[list[tuple[str, str]]] = None) -> UncertaintyAssessment:
    """Deterministic severity for one mediated case.

    Degrade is strictly stronger than escalate and exclusive: a blocked
    verdict always degrades. Escalation triggers when the hybrid confidence
    falls below the escalation threshold, when any grounding entity is
    unresolved, or when a gap/shift/evidence signal is present. A confidence
    under the warn threshold but at or above the escalation threshold is
    recorded without escalating.
    """
    signals: list[Signal] = []
    blocked = verdict is not None and verdict.disposition == "blocked"
    if blocked:
        rule_ids = [f["ruleID"] for f in verdict.fired_rules
                    if f.get("effect", {}).get("kind") == "block"]
        signals.append(Signal("blocked-output",
                              f"output blocked by rule(s): {', '.join(rule_ids)}", True))
    if verdict is not None:
        hybrid = verdict.hybrid_confidence
        if hybrid < thresholds.warn_below:
            signals.append(Signal(
                "low-confidence",
                f"hybridConfidence {hybrid:.4g} below "
                f"{'escalation' if hybrid < thresholds.escalate_below else 'warning'} threshold",
                hybrid < thresholds.escalate_below,
            ))
        for entity in verdict.unresolved_entities:
            signals.append(Signal("unresolved-grounding",
                                  f"entity '{entity}' not in the knowledge graph", True))
    for kind, detail in context_signals or []:
        if kind not in SIGNAL_KINDS:
            raise EpistemicError(f"unknown signal kind {kind!r}")
        signals.append(Signal(kind, detail, True))

    if blocked:
        severity = "degrade"
    elif any(s.escalates for s in signals):
        severity = "escalate"
    else:
        severity = "proceed"
    return UncertaintyAssessment(case_id, tuple(signals), severity, thresholds.version)


class EpistemicMonitor:
    """Anchors assessments and routes gaps into the update pipeline."""

    def __init__(self, ledger: Ledger,
                 propose_draft: Optional[Callable[[KnowledgeGap], str]] = None) -> None:
        self._ledger = ledger
        self._propose_draft = propose_draft
        self._assessed_cases: set[str] = set()
        self._gap_proposals: dict[str, str] = {}
        self._gap_counter = 0

    def assess_case(self, case_id: str, verdict: Optional[MediationVerdict],
                    thresholds: Thresholds,
                    context_signals: Optional[list[tuple[str, str]]] = None,
                    actor: str = "epistemic-monitor") -> UncertaintyAssessment:
        assessment = assess(case_id, verdict, thresholds, context_signals)
        self._assessed_cases.add(case_id)
        self._ledger.append(EventType.ASSESSMENT, actor, assessment.to_json())
        return assessment

    def log_gap(self, kind: str, description: str, source_case_id: str,
                actor: str = "epistemic-monitor") -> str:
        """Anchor a knowledge gap and open a draft proposal for it.

        Duplicate gaps (same kind, description, and case) collapse onto the
        original proposal by content-hash equality.
        """
        if source_case_id not in self._assessed_cases:
            raise UnknownCase(f"case {source_case_id!r} was never assessed")
        self._gap_counter += 1
        gap = KnowledgeGap(
            gap_id=f"gap-{self._gap_counter:06d}",
            kind=kind,
            description=description,
            source_case_id=source_case_id,
            logged_at=self._ledger.clock.now_iso(),
        )
        key = gap.content_key()
        if key in self._gap_proposals:
            self._gap_counter -= 1
            return self._gap_proposals[key]
        proposal_ref = ""
        if self._propose_draft is not None:
            proposal_ref = self._propose_draft(gap)
        self._gap_proposals[key] = proposal_ref
        self._ledger.append(EventType.GAP_LOGGED, actor, {
            **gap.to_json(), "proposalRef": proposal_ref,
        })
        return proposal_ref
