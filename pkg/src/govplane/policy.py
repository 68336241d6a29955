"""Runtime policy enforcement.

Every action request is evaluated against the full rule set of every active
policy — no short-circuit — and the decision lists every violation. The
engine fails closed: with no active policy, everything is denied.

Evaluation is a pure function of (request, active-policy snapshot, active
exceptions, now); activations and exception grants publish a new snapshot
atomically while in-flight evaluations keep the one they started with.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any, Callable, Optional
from zoneinfo import ZoneInfo

from .authz import RoleTable
from .clock import isoformat_utc, parse_instant
from .ledger import EventType, Ledger, LedgerEntry

RULE_KINDS = (
    "numeric-bound",
    "set-membership",
    "actor-permission",
    "temporal-window",
    "resource-quota",
    "escalation-trigger",
)

_UNSET = object()


class PolicyError(Exception):
    pass


class UnknownVersion(PolicyError):
    pass


class ActivationConflict(PolicyError):
    """Another activation changed the active version first."""


class InvalidInterval(PolicyError):
    pass


class MalformedPolicy(PolicyError):
    pass


@dataclass(frozen=True)
class Rule:
    """One machine-readable constraint.

    ``subject`` is an attribute path into the action request; kinds supply
    defaults (actor-permission reads the requesting module, temporal-window
    reads the evaluation instant). ``params`` are kind-dependent:

    - numeric-bound / resource-quota: ``max`` and/or ``min`` with explicit
      ``inclusive`` flag
    - set-membership / actor-permission: ``allowed`` list
    - temporal-window: ``start``/``end`` as HH:MM plus an explicit ``zone``
    - escalation-trigger: ``triggers`` list; a match routes to escalation
      (extra keys such as ``requiredApprovals``/``requiredRole`` configure
      the review gate)
    """

    rule_id: str
    kind: str
    subject: str
    params: dict[str, Any]
    on_violation: str = "deny"

    def __post_init__(self) -> None:
        if self.kind not in RULE_KINDS:
            raise MalformedPolicy(f"rule {self.rule_id!r} has unknown kind {self.kind!r}")
        if self.on_violation not in ("deny", "escalate"):
            raise MalformedPolicy(f"rule {self.rule_id!r}: onViolation must be deny or escalate")
        if self.kind == "escalation-trigger" and self.on_violation != "escalate":
            raise MalformedPolicy(f"rule {self.rule_id!r}: escalation-trigger rules must escalate")
        if self.kind in ("numeric-bound", "resource-quota"):
            if "max" not in self.params and "min" not in self.params:
                raise MalformedPolicy(f"rule {self.rule_id!r} declares no bound")
            if "inclusive" not in self.params:
                raise MalformedPolicy(f"rule {self.rule_id!r} lacks an explicit inclusive flag")
        if self.kind == "temporal-window" and "zone" not in self.params:
            raise MalformedPolicy(f"rule {self.rule_id!r} lacks an explicit time zone")

    def to_json(self) -> dict[str, Any]:
        return {
            "ruleID": self.rule_id,
            "kind": self.kind,
            "subject": self.subject,
            "params": self.params,
            "onViolation": self.on_violation,
        }

    @staticmethod
    def from_json(obj: dict[str, Any]) -> "Rule":
        return Rule(
            rule_id=obj["ruleID"],
            kind=obj["kind"],
            subject=obj.get("subject", ""),
            params=dict(obj.get("params", {})),
            on_violation=obj.get("onViolation", "deny"),
        )


@dataclass(frozen=True)
class Policy:
    policy_id: str
    version: int
    rules: tuple[Rule, ...]
    status: str = "draft"

    def to_json(self) -> dict[str, Any]:
        return {
            "policyID": self.policy_id,
            "version": self.version,
            "status": self.status,
            "rules": [r.to_json() for r in self.rules],
        }

    @staticmethod
    def from_json(obj: dict[str, Any]) -> "Policy":
        return Policy(
            policy_id=obj["policyID"],
            version=int(obj["version"]),
            rules=tuple(Rule.from_json(r) for r in obj["rules"]),
            status=obj.get("status", "draft"),
        )

    @staticmethod
    def load_file(path: str | Path) -> "Policy":
        return Policy.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class ActionRequest:
    request_id: str
    requesting_module: str
    action_type: str
    attributes: dict[str, Any]
    envelope_ref: str = ""

    def to_json(self) -> dict[str, Any]:
        return {
            "requestID": self.request_id,
            "requestingModule": self.requesting_module,
            "actionType": self.action_type,
            "attributes": self.attributes,
            "envelopeRef": self.envelope_ref,
        }

    @staticmethod
    def from_json(obj: dict[str, Any]) -> "ActionRequest":
        return ActionRequest(
            request_id=obj["requestID"],
            requesting_module=obj["requestingModule"],
            action_type=obj["actionType"],
            attributes=dict(obj.get("attributes", {})),
            envelope_ref=obj.get("envelopeRef", ""),
        )


@dataclass(frozen=True)
class Violation:
    rule_id: str
    observed: Any
    bound: Any
    klass: str  # deny | escalate

    def to_json(self) -> dict[str, Any]:
        return {"ruleID": self.rule_id, "observed": self.observed, "bound": self.bound, "class": self.klass}


@dataclass(frozen=True)
class PolicyDecision:
    verdict: str  # allow | deny | escalate
    violations: tuple[Violation, ...]
    evaluated_policy_versions: dict[str, int]
    decided_at: str

    def escalation_rules(self) -> list[Violation]:
        return [v for v in self.violations if v.klass == "escalate"]

    def to_json(self) -> dict[str, Any]:
        return {
            "verdict": self.verdict,
            "violations": [v.to_json() for v in self.violations],
            "evaluatedPolicyVersions": dict(sorted(self.evaluated_policy_versions.items())),
            "decidedAt": self.decided_at,
        }


@dataclass(frozen=True)
class PolicyException:
    """Time-limited, pre-approved relaxation of one rule.

    Within [validFrom, validUntil) the rule's params are replaced by
    ``override_params`` when given, otherwise the rule is suspended.
    """

    exception_id: str
    policy_id: str
    rule_id: str
    granted_by: str
    valid_from: str
    valid_until: str
    justification: str
    override_params: Optional[dict[str, Any]] = None

    def active_at(self, now: datetime) -> bool:
        return parse_instant(self.valid_from) <= now < parse_instant(self.valid_until)

    def to_json(self) -> dict[str, Any]:
        return {
            "exceptionID": self.exception_id,
            "policyID": self.policy_id,
            "ruleID": self.rule_id,
            "grantedBy": self.granted_by,
            "validFrom": self.valid_from,
            "validUntil": self.valid_until,
            "justification": self.justification,
            "overrideParams": self.override_params,
        }


@dataclass(frozen=True)
class PolicySnapshot:
    """Immutable view used for one evaluation (or pinned by one workflow)."""

    policies: tuple[Policy, ...]
    exceptions: tuple[PolicyException, ...]

    @property
    def versions(self) -> dict[str, int]:
        return {p.policy_id: p.version for p in self.policies}


MISSING = "<missing>"


def _lookup(attributes: dict[str, Any], path: str) -> Any:
    value: Any = attributes
    for part in path.split("."):
        if not isinstance(value, dict) or part not in value:
            return MISSING
        value = value[part]
    return value


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _check_rule(rule: Rule, request: ActionRequest, now: datetime) -> Optional[Violation]:
    params = rule.params
    kind = rule.kind
    if kind == "actor-permission":
        observed = request.requesting_module if not rule.subject else _lookup(request.attributes, rule.subject)
        allowed = params.get("allowed", [])
        if observed == MISSING or observed not in allowed:
            return Violation(rule.rule_id, observed, {"allowed": allowed}, rule.on_violation)
        return None
    if kind == "temporal-window":
        if rule.subject and rule.subject != "now":
            raw = _lookup(request.attributes, rule.subject)
            if raw == MISSING:
                return Violation(rule.rule_id, MISSING, params, rule.on_violation)
            try:
                instant = parse_instant(str(raw))
            except ValueError:
                return Violation(rule.rule_id, raw, params, rule.on_violation)
        else:
            instant = now
        local = instant.astimezone(ZoneInfo(params["zone"]))
        minute = local.hour * 60 + local.minute
        start = _parse_hhmm(params["start"])
        end = _parse_hhmm(params["end"])
        if start <= end:
            inside = start <= minute < end
        else:
            inside = minute >= start or minute < end
        if not inside:
            observed = local.strftime("%H:%M")
            bound = {"window": f"[{params['start']}, {params['end']})", "zone": params["zone"]}
            return Violation(rule.rule_id, observed, bound, rule.on_violation)
        return None

    observed = _lookup(request.attributes, rule.subject)
    if kind in ("numeric-bound", "resource-quota"):
        bound = {k: params[k] for k in ("max", "min", "inclusive") if k in params}
        if not _is_number(observed):
            return Violation(rule.rule_id, observed, bound, rule.on_violation)
        inclusive = bool(params["inclusive"])
        if "max" in params:
            over = observed > params["max"] if inclusive else observed >= params["max"]
            if over:
                return Violation(rule.rule_id, observed, bound, rule.on_violation)
        if "min" in params:
            under = observed < params["min"] if inclusive else observed <= params["min"]
            if under:
                return Violation(rule.rule_id, observed, bound, rule.on_violation)
        return None
    if kind == "set-membership":
        allowed = params.get("allowed", [])
        if observed == MISSING or observed not in allowed:
            return Violation(rule.rule_id, observed, {"allowed": allowed}, rule.on_violation)
        return None
    if kind == "escalation-trigger":
        triggers = params.get("triggers", [])
        if observed != MISSING and observed in triggers:
            return Violation(rule.rule_id, observed, {"triggers": triggers}, rule.on_violation)
        return None
    raise AssertionError(f"unreachable rule kind {kind}")


def _parse_hhmm(text: str) -> int:
    hours, minutes = text.split(":")
    return int(hours) * 60 + int(minutes)


def evaluate_snapshot(snapshot: PolicySnapshot, request: ActionRequest, now: datetime) -> PolicyDecision:
    """Evaluate every rule of every active policy; exhaustive violation list.

    Fail closed: an empty snapshot denies. Malformed or missing attributes
    surface as violations, never as exceptions.
    """
    decided_at = isoformat_utc(now)
    if not snapshot.policies:
        return PolicyDecision(
            verdict="deny",
            violations=(Violation("no-active-policy", "0 active policies", "at least 1", "deny"),),
            evaluated_policy_versions={},
            decided_at=decided_at,
        )
    violations: list[Violation] = []
    for policy in sorted(snapshot.policies, key=lambda p: p.policy_id):
        for rule in policy.rules:
            effective = _effective_rule(policy, rule, snapshot.exceptions, now)
            if effective is None:
                continue
            violation = _check_rule(effective, request, now)
            if violation is not None:
                violations.append(violation)
    if any(v.klass == "deny" for v in violations):
        verdict = "deny"
    elif violations:
        verdict = "escalate"
    else:
        verdict = "allow"
    return PolicyDecision(verdict, tuple(violations), snapshot.versions, decided_at)


def _effective_rule(policy: Policy, rule: Rule, exceptions: tuple[PolicyException, ...],
                    now: datetime) -> Optional[Rule]:
    for exc in exceptions:
        if exc.policy_id == policy.policy_id and exc.rule_id == rule.rule_id and exc.active_at(now):
            if exc.override_params is None:
                return None
            return Rule(rule.rule_id, rule.kind, rule.subject, dict(exc.override_params), rule.on_violation)
    return rule


@dataclass(frozen=True)
class ActivationRecord:
    policy_id: str
    version: int
    activated_by: str
    activated_at: str
    retired_version: Optional[int]


class PolicyEngine:
    """Versioned policy store with atomic activation and decision audit."""

    def __init__(self, role_table: RoleTable, ledger: Optional[Ledger] = None) -> None:
        self._role_table = role_table
        self._ledger = ledger
        self._lock = threading.Lock()
        self._versions: dict[str, dict[int, Policy]] = {}
        self._active: dict[str, int] = {}
        self._exceptions: list[PolicyException] = []
        self._snapshot = PolicySnapshot((), ())

    def register_policy(self, policy: Policy) -> None:
        with self._lock:
            versions = self._versions.setdefault(policy.policy_id, {})
            if policy.version in versions:
                raise PolicyError(f"policy {policy.policy_id} v{policy.version} already registered")
            if versions and policy.version <= max(versions):
                raise PolicyError(f"policy {policy.policy_id} versions must increase monotonically")
            versions[policy.version] = Policy(policy.policy_id, policy.version, policy.rules, "draft")

    def policy(self, policy_id: str, version: int) -> Policy:
        try:
            return self._versions[policy_id][version]
        except KeyError:
            raise UnknownVersion(f"no policy {policy_id} v{version}") from None

    def active_versions(self) -> dict[str, int]:
        with self._lock:
            return dict(self._active)

    def snapshot(self) -> PolicySnapshot:
        return self._snapshot

    def _publish_snapshot(self) -> None:
        policies = tuple(self._versions[pid][v] for pid, v in sorted(self._active.items()))
        self._snapshot = PolicySnapshot(policies, tuple(self._exceptions))

    def activate_policy(self, policy_id: str, version: int, activated_by: str,
                        expected_active: Any = _UNSET) -> ActivationRecord:
        """Atomically retire the prior active version and activate ``version``.

        ``expected_active`` enables optimistic concurrency: when given, the
        activation fails with :class:`ActivationConflict` if another
        activation changed the active version in the meantime.
        """
        self._role_table.require(activated_by, "policy-activate")
        with self._lock:
            versions = self._versions.get(policy_id, {})
            if version not in versions:
                raise UnknownVersion(f"no policy {policy_id} v{version}")
            target = versions[version]
            if target.status == "retired":
                raise PolicyError(f"policy {policy_id} v{version} is retired and can never reactivate")
            if target.status == "active":
                raise PolicyError(f"policy {policy_id} v{version} is already active")
            current = self._active.get(policy_id)
            if expected_active is not _UNSET and current != expected_active:
                raise ActivationConflict(
                    f"policy {policy_id}: active version is {current}, expected {expected_active}")
            retired_version = current
            if current is not None:
                prior = versions[current]
                versions[current] = Policy(prior.policy_id, prior.version, prior.rules, "retired")
            versions[version] = Policy(target.policy_id, target.version, target.rules, "active")
            self._active[policy_id] = version
            self._publish_snapshot()
        record = ActivationRecord(policy_id, version, activated_by,
                                  self._now_iso(), retired_version)
        if self._ledger is not None:
            self._ledger.append(EventType.POLICY_ACTIVATED, activated_by, {
                "policyID": policy_id,
                "version": version,
                "retiredVersion": retired_version,
            })
        return record

    def grant_exception(self, exception: PolicyException) -> PolicyException:
        if parse_instant(exception.valid_until) <= parse_instant(exception.valid_from):
            raise InvalidInterval("validUntil must be after validFrom")
        self._role_table.require(exception.granted_by, "exception-grant")
        if not exception.justification.strip():
            raise PolicyError("exception justification must be non-empty")
        with self._lock:
            self._exceptions.append(exception)
            self._publish_snapshot()
        if self._ledger is not None:
            self._ledger.append(EventType.EXCEPTION_GRANTED, exception.granted_by, exception.to_json())
        return exception

    def evaluate(self, request: ActionRequest, now: datetime,
                 snapshot: Optional[PolicySnapshot] = None) -> PolicyDecision:
        return evaluate_snapshot(snapshot if snapshot is not None else self._snapshot, request, now)

    def evaluate_and_record(self, request: ActionRequest, now: datetime,
                            snapshot: Optional[PolicySnapshot] = None) -> tuple[PolicyDecision, Optional[LedgerEntry]]:
        decision = self.evaluate(request, now, snapshot)
        entry = None
        if self._ledger is not None:
            receipt = self._ledger.append(EventType.POLICY_DECISION, "policy-engine", {
                "requestID": request.request_id,
                "requestingModule": request.requesting_module,
                "actionType": request.action_type,
                "decision": decision.to_json(),
            })
            entry = self._ledger.entry(receipt.sequence)
        return decision, entry

    def audit_query(self, verdict: Optional[str] = None, since: Optional[str] = None,
                    request_id: Optional[str] = None) -> list[LedgerEntry]:
        """Every recorded evaluation matching the filter, in ledger order."""
        if self._ledger is None:
            return []
        out = []
        for entry, payload in self._ledger.iter_payloads(EventType.POLICY_DECISION):
            decision = payload.get("decision", {})
            if verdict is not None and decision.get("verdict") != verdict:
                continue
            if since is not None and entry.timestamp < since:
                continue
            if request_id is not None and payload.get("requestID") != request_id:
                continue
            out.append(entry)
        return out

    def _now_iso(self) -> str:
        if self._ledger is not None:
            return self._ledger.clock.now_iso()
        return ""
