"""Human review gates.

High-risk actions stop here: a case opens in the review queue, downstream
execution stays blocked, and only explicit operator decisions move the
state machine. Dual-control cases need two distinct qualified approvers.
Every transition is anchored with operator ID and timestamp; overrides
always carry a justification.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

from .authz import NotAuthorised, RoleTable
from .clock import parse_instant
from .ledger import EventType, Ledger

OPEN_STATES = ("open", "partially-approved")
TERMINAL_STATES = ("approved", "rejected", "overridden", "expired")


class HitlError(Exception):
    pass


class MissingRationale(HitlError):
    pass


class DuplicateReviewer(HitlError):
    pass


class CaseClosed(HitlError):
    pass


class EmptyJustification(HitlError):
    pass


class UnknownCaseID(HitlError):
    pass


@dataclass(frozen=True)
class ReviewDecision:
    case_id: str
    operator_id: str
    decision: str  # approve | reject | modify | override
    decided_at: str
    viewed_rationale: bool = True
    payload: Optional[dict[str, Any]] = None
    direction: Optional[str] = None  # force-proceed | force-halt
    justification: str = ""

    def to_json(self) -> dict[str, Any]:
        return {
            "caseID": self.case_id,
            "operatorID": self.operator_id,
            "decision": self.decision,
            "decidedAt": self.decided_at,
            "viewedRationale": self.viewed_rationale,
            "payload": self.payload,
            "direction": self.direction,
            "justification": self.justification,
        }


@dataclass
class EscalationCase:
    case_id: str
    workflow_ref: str
    rationale_id: str
    rationale: dict[str, Any]
    required_approvals: int
    required_role: str
    opened_at: str
    state: str = "open"
    reviews: list[ReviewDecision] = field(default_factory=list)
    deadline: Optional[str] = None
    override_direction: Optional[str] = None
    pending_payload: Optional[dict[str, Any]] = None

    @property
    def approving_operators(self) -> list[str]:
        return [r.operator_id for r in self.reviews if r.decision == "approve"]

    @property
    def permits_execution(self) -> bool:
        return self.state == "approved" or (
            self.state == "overridden" and self.override_direction == "force-proceed")

    def to_json(self) -> dict[str, Any]:
        return {
            "caseID": self.case_id,
            "workflowRef": self.workflow_ref,
            "rationaleID": self.rationale_id,
            "rationale": self.rationale,
            "requiredApprovals": self.required_approvals,
            "requiredRole": self.required_role,
            "openedAt": self.opened_at,
            "state": self.state,
            "reviews": [r.to_json() for r in self.reviews],
            "deadline": self.deadline,
            "overrideDirection": self.override_direction,
        }


# Called with (case, modified_payload); returns (ok, detail) after pushing the
# payload back through semantic validation and policy evaluation.
Revalidator = Callable[[EscalationCase, dict[str, Any]], tuple[bool, str]]


class HitlGateway:
    """Escalation-case state machine with per-case serialized transitions."""

    def __init__(self, ledger: Ledger, role_table: RoleTable,
                 revalidator: Optional[Revalidator] = None) -> None:
        self._ledger = ledger
        self._role_table = role_table
        self._revalidator = revalidator
        self._cases: dict[str, EscalationCase] = {}
        self._counter = 0
        self._lock = threading.Lock()
        self._case_locks: dict[str, threading.Lock] = {}
        self._resolution_listeners: list[Callable[[EscalationCase], None]] = []

    def set_revalidator(self, revalidator: Revalidator) -> None:
        self._revalidator = revalidator

    def on_resolution(self, listener: Callable[[EscalationCase], None]) -> None:
        self._resolution_listeners.append(listener)

    def _case_lock(self, case_id: str) -> threading.Lock:
        with self._lock:
            if case_id not in self._case_locks:
                self._case_locks[case_id] = threading.Lock()
            return self._case_locks[case_id]

    def case(self, case_id: str) -> EscalationCase:
        if case_id not in self._cases:
            raise UnknownCaseID(case_id)
        return self._cases[case_id]

    def queue(self) -> list[EscalationCase]:
        """Open and partially-approved cases, deadline first, then age."""
        open_cases = [c for c in self._cases.values() if c.state in OPEN_STATES]
        return sorted(open_cases, key=lambda c: (c.deadline is None, c.deadline or "", c.opened_at))

    def cases(self) -> list[EscalationCase]:
        return [self._cases[k] for k in sorted(self._cases)]

    def open_case(self, workflow_ref: str, rationale_id: str, rationale: dict[str, Any],
                  required_approvals: int, required_role: str,
                  deadline: Optional[str] = None) -> EscalationCase:
        if not rationale_id or not rationale:
            raise MissingRationale("a case cannot open without an anchored rationale")
        if required_approvals not in (1, 2):
            raise HitlError("requiredApprovals must be 1 or 2")
        with self._lock:
            self._counter += 1
            case = EscalationCase(
                case_id=f"case-{self._counter:06d}",
                workflow_ref=workflow_ref,
                rationale_id=rationale_id,
                rationale=dict(rationale),
                required_approvals=required_approvals,
                required_role=required_role,
                opened_at=self._ledger.clock.now_iso(),
                deadline=deadline,
            )
            self._cases[case.case_id] = case
        self._ledger.append(EventType.CASE_OPENED, "hitl-gateway", {
            "caseID": case.case_id,
            "workflowRef": workflow_ref,
            "rationaleID": rationale_id,
            "requiredApprovals": required_approvals,
            "requiredRole": required_role,
            "deadline": deadline,
        })
        return case

    def _expire_if_due(self, case: EscalationCase) -> bool:
        if case.state in OPEN_STATES and case.deadline is not None:
            if self._ledger.clock.now() >= parse_instant(case.deadline):
                case.state = "expired"
                self._ledger.append(EventType.CASE_EXPIRED, "hitl-gateway", {
                    "caseID": case.case_id,
                    "workflowRef": case.workflow_ref,
                    "resultingState": "expired",
                })
                self._notify(case)
                return True
        return False

    def expire_due_cases(self) -> list[str]:
        expired = []
        for case in list(self._cases.values()):
            with self._case_lock(case.case_id):
                if self._expire_if_due(case):
                    expired.append(case.case_id)
        return expired

    def submit_review(self, case_id: str, operator_id: str, decision: str,
                      payload: Optional[dict[str, Any]] = None,
                      justification: str = "",
                      viewed_rationale: bool = True) -> EscalationCase:
        """Apply one review decision; transitions are serialized per case."""
        case = self.case(case_id)
        with self._case_lock(case_id):
            if self._expire_if_due(case):
                raise CaseClosed(f"case {case_id} expired at its deadline")
            if case.state not in OPEN_STATES:
                raise CaseClosed(f"case {case_id} is {case.state}")
            operator = self._role_table.operator(operator_id)
            if case.required_role not in operator.roles:
                raise NotAuthorised(
                    f"operator {operator_id!r} lacks required role {case.required_role!r}")
            if any(r.operator_id == operator_id for r in case.reviews):
                raise DuplicateReviewer(f"operator {operator_id!r} already decided case {case_id}")
            if decision not in ("approve", "reject", "modify"):
                raise HitlError(f"unknown decision {decision!r}")

            review = ReviewDecision(
                case_id=case_id,
                operator_id=operator_id,
                decision=decision,
                decided_at=self._ledger.clock.now_iso(),
                viewed_rationale=viewed_rationale,
                payload=payload,
                justification=justification,
            )

            detail = ""
            if decision == "modify":
                if payload is None:
                    raise HitlError("modify requires a payload")
                if self._revalidator is None:
                    raise HitlError("no revalidator wired for modify decisions")
                ok, detail = self._revalidator(case, payload)
                if ok:
                    case.pending_payload = dict(payload)
                # A failing modification leaves the case open; the attempt is
                # still recorded and anchored below.
                case.reviews.append(review)
                resulting_state = case.state
            elif decision == "reject":
                case.reviews.append(review)
                case.state = "rejected"
                resulting_state = "rejected"
            else:  # approve
                case.reviews.append(review)
                distinct = set(case.approving_operators)
                if len(distinct) >= case.required_approvals:
                    case.state = "approved"
                else:
                    case.state = "partially-approved"
                resulting_state = case.state

            self._ledger.append(EventType.REVIEW, operator_id, {
                **review.to_json(),
                "workflowRef": case.workflow_ref,
                "resultingState": resulting_state,
                "detail": detail,
            })
            if case.state in TERMINAL_STATES:
                self._notify(case)
            return case

    def override(self, case_id: str, operator_id: str, direction: str,
                 justification: str) -> EscalationCase:
        """Authorised override at any time before dispatch; always justified."""
        case = self.case(case_id)
        with self._case_lock(case_id):
            if direction not in ("force-proceed", "force-halt"):
                raise HitlError(f"unknown override direction {direction!r}")
            if not justification.strip():
                raise EmptyJustification("override requires a non-empty justification")
            self._role_table.require(operator_id, "override")
            if case.state in ("rejected", "overridden", "expired"):
                raise CaseClosed(f"case {case_id} is {case.state}")
            review = ReviewDecision(
                case_id=case_id,
                operator_id=operator_id,
                decision="override",
                decided_at=self._ledger.clock.now_iso(),
                direction=direction,
                justification=justification,
            )
            case.reviews.append(review)
            case.state = "overridden"
            case.override_direction = direction
            self._ledger.append(EventType.OVERRIDE, operator_id, {
                **review.to_json(),
                "workflowRef": case.workflow_ref,
                "resultingState": "overridden",
            })
            self._notify(case)
            return case

    def _notify(self, case: EscalationCase) -> None:
        for listener in self._resolution_listeners:
            listener(case)
