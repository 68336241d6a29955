"""Lifecycle registry for governed assets.

Models, rule sets, ontologies, policies, schemas, knowledge graphs, and
threshold configurations are tracked from registration through validation,
deployment, rollback, and retirement. The ledger is the authoritative
state: the in-memory index is a cache, and point-in-time reconstruction
folds deployment/rollback events straight off the ledger.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from datetime import datetime
from typing import Any, Optional

from .authz import RoleTable
from .clock import isoformat_utc, parse_instant
from .ledger import EventType, Ledger, LedgerEntry

ASSET_KINDS = (
    "model",
    "rule-set",
    "ontology",
    "knowledge-graph",
    "policy",
    "schema",
    "threshold-config",
    "role-table",
)

STATUS_ORDER = ("designed", "validated", "deployed", "retired")


class RegistryError(Exception):
    pass


class UnknownAsset(RegistryError):
    pass


class NotValidated(RegistryError):
    pass


class NeverDeployed(RegistryError):
    pass


class StillDeployed(RegistryError):
    pass


class BeforeGenesis(RegistryError):
    pass


@dataclass
class AssetRecord:
    asset_id: str
    asset_kind: str
    version: str
    owner: str
    status: str = "designed"
    metadata: dict[str, Any] = field(default_factory=dict)
    created_at: str = ""
    supersedes: Optional[str] = None
    approvals: list[str] = field(default_factory=list)
    validation_evidence: list[dict[str, Any]] = field(default_factory=list)
    retirement: Optional[dict[str, Any]] = None

    def to_json(self) -> dict[str, Any]:
        return {
            "assetID": self.asset_id,
            "assetKind": self.asset_kind,
            "version": self.version,
            "owner": self.owner,
            "status": self.status,
            "metadata": self.metadata,
            "createdAt": self.created_at,
            "supersedes": self.supersedes,
            "approvals": self.approvals,
            "validationEvidence": self.validation_evidence,
            "retirement": self.retirement,
        }


@dataclass(frozen=True)
class DeploymentSnapshot:
    as_of: str
    deployed_versions: dict[str, str]

    def to_json(self) -> dict[str, Any]:
        return {"asOf": self.as_of, "deployedVersions": dict(sorted(self.deployed_versions.items()))}


def fold_deployments(entries: list[LedgerEntry], until: Optional[datetime] = None) -> dict[str, str]:
    """Left fold of deployment/rollback events up to ``until`` (inclusive)."""
    deployed: dict[str, str] = {}
    for entry in entries:
        if until is not None and parse_instant(entry.timestamp) > until:
            continue
        if entry.event_type == EventType.DEPLOYMENT.value:
            deployed[entry.payload["assetID"]] = entry.payload["version"]
        elif entry.event_type == EventType.ROLLBACK.value:
            deployed[entry.payload["assetID"]] = entry.payload["toVersion"]
    return deployed


class ContentStore:
    """Deployable content keyed by (assetID, version).

    The registry tracks lifecycle metadata; the actual rule sets, graphs,
    policies, and configurations live here so workflows can resolve their
    pinned versions to concrete objects.
    """

    def __init__(self) -> None:
        self._content: dict[tuple[str, str], Any] = {}

    def put(self, asset_id: str, version: str, content: Any) -> None:
        key = (asset_id, version)
        if key in self._content:
            raise RegistryError(f"content for {asset_id} v{version} already stored")
        self._content[key] = content

    def get(self, asset_id: str, version: str) -> Any:
        key = (asset_id, version)
        if key not in self._content:
            raise UnknownAsset(f"no content for {asset_id} v{version}")
        return self._content[key]

    def has(self, asset_id: str, version: str) -> bool:
        return (asset_id, version) in self._content

    def keys(self) -> list[tuple[str, str]]:
        return sorted(self._content)


class LifecycleRegistry:
    """Asset lifecycle state machine, event-sourced through the ledger."""

    def __init__(self, ledger: Ledger, role_table: RoleTable) -> None:
        self._ledger = ledger
        self._role_table = role_table
        self._lock = threading.Lock()
        self._records: dict[tuple[str, str], AssetRecord] = {}
        self._deployed: dict[str, str] = {}
        self._ever_deployed: set[tuple[str, str]] = set()

    def _record(self, asset_id: str, version: str) -> AssetRecord:
        key = (asset_id, version)
        if key not in self._records:
            raise UnknownAsset(f"no asset {asset_id} v{version}")
        return self._records[key]

    def register(self, asset_id: str, asset_kind: str, version: str, owner: str,
                 metadata: Optional[dict[str, Any]] = None,
                 supersedes: Optional[str] = None) -> AssetRecord:
        if asset_kind not in ASSET_KINDS:
            raise RegistryError(f"unknown asset kind {asset_kind!r}")
        if not owner:
            raise RegistryError("asset owner must be non-empty")
        with self._lock:
            key = (asset_id, version)
            if key in self._records:
                raise RegistryError(f"asset {asset_id} v{version} already registered")
            record = AssetRecord(
                asset_id=asset_id,
                asset_kind=asset_kind,
                version=version,
                owner=owner,
                metadata=dict(metadata or {}),
                created_at=self._ledger.clock.now_iso(),
                supersedes=supersedes,
            )
            self._records[key] = record
        self._ledger.append(EventType.ASSET_REGISTERED, owner, {
            "assetID": asset_id,
            "assetKind": asset_kind,
            "version": version,
            "owner": owner,
            "metadata": record.metadata,
            "supersedes": supersedes,
        })
        return record

    def mark_validated(self, asset_id: str, version: str, evidence: dict[str, Any],
                       actor: str = "validation") -> AssetRecord:
        with self._lock:
            record = self._record(asset_id, version)
            if record.status != "designed":
                raise RegistryError(f"asset {asset_id} v{version} is {record.status}, not designed")
            record.status = "validated"
            record.validation_evidence.append(dict(evidence))
        self._ledger.append(EventType.ASSET_VALIDATED, actor, {
            "assetID": asset_id, "version": version, "evidence": evidence,
        })
        return record

    def deploy(self, asset_id: str, version: str, approver: str) -> LedgerEntry:
        """Deploy a validated version, superseding the prior deployment atomically."""
        self._role_table.require(approver, "deploy")
        with self._lock:
            record = self._record(asset_id, version)
            if record.status == "designed":
                raise NotValidated(f"asset {asset_id} v{version} has not been validated")
            if record.status == "deployed":
                raise RegistryError(f"asset {asset_id} v{version} is already deployed")
            if record.status == "retired":
                raise RegistryError(
                    f"asset {asset_id} v{version} is retired; use rollback to re-deploy")
            superseded = self._deployed.get(asset_id)
            if superseded is not None:
                prior = self._records[(asset_id, superseded)]
                prior.status = "retired"
            record.status = "deployed"
            record.approvals.append(approver)
            self._deployed[asset_id] = version
            self._ever_deployed.add((asset_id, version))
        receipt = self._ledger.append(EventType.DEPLOYMENT, approver, {
            "assetID": asset_id,
            "version": version,
            "approver": approver,
            "supersededVersion": superseded,
        })
        return self._ledger.entry(receipt.sequence)

    def rollback(self, asset_id: str, to_version: str, operator: str, reason: str) -> LedgerEntry:
        """Re-deploy a previously deployed version via an explicit rollback event."""
        self._role_table.require(operator, "rollback")
        with self._lock:
            if (asset_id, to_version) not in self._ever_deployed:
                raise NeverDeployed(f"asset {asset_id} v{to_version} was never deployed")
            current = self._deployed.get(asset_id)
            if current == to_version:
                raise RegistryError(f"asset {asset_id} v{to_version} is already deployed")
            if current is not None:
                self._records[(asset_id, current)].status = "retired"
            target = self._records[(asset_id, to_version)]
            target.status = "deployed"
            self._deployed[asset_id] = to_version
        receipt = self._ledger.append(EventType.ROLLBACK, operator, {
            "assetID": asset_id,
            "toVersion": to_version,
            "fromVersion": current,
            "operator": operator,
            "reason": reason,
        })
        return self._ledger.entry(receipt.sequence)

    def retire(self, asset_id: str, version: str, reason: str,
               replacement: Optional[str] = None, actor: str = "registry") -> AssetRecord:
        """Archive a non-deployed version with its reason and replacement."""
        with self._lock:
            record = self._record(asset_id, version)
            if self._deployed.get(asset_id) == version:
                raise StillDeployed(f"asset {asset_id} v{version} is currently deployed")
            record.status = "retired"
            record.retirement = {"reason": reason, "replacement": replacement}
        self._ledger.append(EventType.RETIREMENT, actor, {
            "assetID": asset_id, "version": version, "reason": reason, "replacement": replacement,
        })
        return record

    def snapshot_at(self, instant: datetime | str) -> DeploymentSnapshot:
        """Deployed-version map at ``instant``, derived purely from the ledger."""
        if isinstance(instant, str):
            instant = parse_instant(instant)
        entries = self._ledger.entries()
        if not entries or parse_instant(entries[0].timestamp) > instant:
            raise BeforeGenesis(f"no ledger history at {isoformat_utc(instant)}")
        deployed = fold_deployments(entries, until=instant)
        return DeploymentSnapshot(isoformat_utc(instant), deployed)

    def deployed_versions(self) -> dict[str, str]:
        with self._lock:
            return dict(self._deployed)

    def deployed_version(self, asset_id: str) -> Optional[str]:
        return self._deployed.get(asset_id)

    def record(self, asset_id: str, version: str) -> AssetRecord:
        with self._lock:
            return self._record(asset_id, version)

    def versions(self, asset_id: str) -> list[AssetRecord]:
        with self._lock:
            return [r for (aid, _), r in sorted(self._records.items()) if aid == asset_id]

    def history(self, asset_id: str) -> list[LedgerEntry]:
        wanted = {
            EventType.ASSET_REGISTERED.value,
            EventType.ASSET_VALIDATED.value,
            EventType.DEPLOYMENT.value,
            EventType.ROLLBACK.value,
            EventType.RETIREMENT.value,
        }
        return [e for e in self._ledger.entries()
                if e.event_type in wanted and e.payload.get("assetID") == asset_id]

    def replay_events(self) -> None:
        """Rebuild the cache from the ledger (used when loading a stored run)."""
        with self._lock:
            self._records.clear()
            self._deployed.clear()
            self._ever_deployed.clear()
            for entry in self._ledger.entries():
                payload = entry.payload
                if entry.event_type == EventType.ASSET_REGISTERED.value:
                    record = AssetRecord(
                        asset_id=payload["assetID"],
                        asset_kind=payload["assetKind"],
                        version=payload["version"],
                        owner=payload["owner"],
                        metadata=dict(payload.get("metadata", {})),
                        created_at=entry.timestamp,
                        supersedes=payload.get("supersedes"),
                    )
                    self._records[(record.asset_id, record.version)] = record
                elif entry.event_type == EventType.ASSET_VALIDATED.value:
                    record = self._records[(payload["assetID"], payload["version"])]
                    record.status = "validated"
                    record.validation_evidence.append(dict(payload.get("evidence", {})))
                elif entry.event_type == EventType.DEPLOYMENT.value:
                    superseded = payload.get("supersededVersion")
                    if superseded is not None:
                        self._records[(payload["assetID"], superseded)].status = "retired"
                    record = self._records[(payload["assetID"], payload["version"])]
                    record.status = "deployed"
                    record.approvals.append(payload["approver"])
                    self._deployed[payload["assetID"]] = payload["version"]
                    self._ever_deployed.add((payload["assetID"], payload["version"]))
                elif entry.event_type == EventType.ROLLBACK.value:
                    current = payload.get("fromVersion")
                    if current is not None:
                        self._records[(payload["assetID"], current)].status = "retired"
                    self._records[(payload["assetID"], payload["toVersion"])].status = "deployed"
                    self._deployed[payload["assetID"]] = payload["toVersion"]
                elif entry.event_type == EventType.RETIREMENT.value:
                    record = self._records[(payload["assetID"], payload["version"])]
                    record.status = "retired"
                    record.retirement = {
                        "reason": payload.get("reason"),
                        "replacement": payload.get("replacement"),
                    }
