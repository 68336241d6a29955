"""Append-only, hash-chained provenance ledger.

Every consequential event in the system is anchored here: one canonical
JSON entry per line, each entry's hash covering the previous entry's hash,
so any mutation of stored bytes is detectable by recomputation. A per
deployment HMAC key stands in for a real signature scheme; verification and
forensic replay work offline on the raw file.

Truncation of the suffix cannot be detected from the chain alone, so
verifiers hold the latest :class:`AnchorReceipt` out-of-band and compare it
against the ledger head.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Iterable, Iterator, Union

from .canonical import ZERO_DIGEST, canonical_bytes, digest, hmac_hex, sha256_hex
from .clock import VirtualClock, isoformat_utc

DEFAULT_SIGNING_KEY = b"govplane-deployment-key"

ENTRY_FIELDS = (
    "sequence",
    "prevHash",
    "payloadHash",
    "entryHash",
    "signature",
    "eventType",
    "actor",
    "timestamp",
    "payload",
)


class EventType(str, Enum):
    SCHEMA_REGISTERED = "schema-registered"
    MESSAGE_VALIDATED = "message-validated"
    MEDIATION = "mediation"
    POLICY_DECISION = "policy-decision"
    POLICY_ACTIVATED = "policy-activated"
    EXCEPTION_GRANTED = "exception-granted"
    ASSESSMENT = "assessment"
    GAP_LOGGED = "gap-logged"
    CASE_OPENED = "case-opened"
    REVIEW = "review"
    OVERRIDE = "override"
    CASE_EXPIRED = "case-expired"
    RATIONALE = "rationale"
    ANCHOR = "anchor"
    ROUTING = "routing"
    INCIDENT = "incident"
    BREAKER_TRANSITION = "breaker-transition"
    ESCALATION_LOGGED = "escalation-logged"
    DEPLOYMENT = "deployment"
    ROLLBACK = "rollback"
    RETIREMENT = "retirement"
    ASSET_REGISTERED = "asset-registered"
    ASSET_VALIDATED = "asset-validated"
    PROPOSAL = "proposal"
    STAGE_ADVANCE = "stage-advance"
    MONITOR_TICK = "monitor-tick"
    WORKFLOW = "workflow"
    ANOMALY = "anomaly"


@dataclass(frozen=True)
class LedgerEntry:
    sequence: int
    prev_hash: str
    payload_hash: str
    entry_hash: str
    signature: str
    event_type: str
    actor: str
    timestamp: str
    payload: dict[str, Any]

    def to_record(self) -> dict[str, Any]:
        return {
            "sequence": self.sequence,
            "prevHash": self.prev_hash,
            "payloadHash": self.payload_hash,
            "entryHash": self.entry_hash,
            "signature": self.signature,
            "eventType": self.event_type,
            "actor": self.actor,
            "timestamp": self.timestamp,
            "payload": self.payload,
        }

    @staticmethod
    def from_record(record: dict[str, Any]) -> "LedgerEntry":
        return LedgerEntry(
            sequence=record["sequence"],
            prev_hash=record["prevHash"],
            payload_hash=record["payloadHash"],
            entry_hash=record["entryHash"],
            signature=record["signature"],
            event_type=record["eventType"],
            actor=record["actor"],
            timestamp=record["timestamp"],
            payload=record["payload"],
        )


@dataclass(frozen=True)
class AnchorReceipt:
    sequence: int
    entry_hash: str
    anchored_at: str

    def to_record(self) -> dict[str, Any]:
        return {"sequence": self.sequence, "entryHash": self.entry_hash, "anchoredAt": self.anchored_at}

    @staticmethod
    def from_record(record: dict[str, Any]) -> "AnchorReceipt":
        return AnchorReceipt(record["sequence"], record["entryHash"], record["anchoredAt"])


@dataclass(frozen=True)
class Valid:
    checked: int

    @property
    def ok(self) -> bool:
        return True


@dataclass(frozen=True)
class TamperDetected:
    first_bad_sequence: int
    reason: str

    @property
    def ok(self) -> bool:
        return False


VerifyResult = Union[Valid, TamperDetected]


class TamperedRange(RuntimeError):
    """Replay or lineage was requested over a range that fails verification."""


def entry_hash_for(sequence: int, prev_hash: str, payload_hash: str,
                   event_type: str, actor: str, timestamp: str) -> str:
    return digest({
        "sequence": sequence,
        "prevHash": prev_hash,
        "payloadHash": payload_hash,
        "eventType": event_type,
        "actor": actor,
        "timestamp": timestamp,
    })


def _references(value: Any, ref: str) -> bool:
    if isinstance(value, str):
        return value == ref
    if isinstance(value, dict):
        return any(_references(v, ref) for v in value.values())
    if isinstance(value, list):
        return any(_references(v, ref) for v in value)
    return False


@dataclass
class LineageGraph:
    """Entries referencing one entity, ordered by sequence, chained by edges."""

    entity: str
    entries: list[LedgerEntry] = field(default_factory=list)
    edges: list[tuple[int, int]] = field(default_factory=list)

    @property
    def event_types(self) -> list[str]:
        return [e.event_type for e in self.entries]


def verify_lines(lines: list[bytes], signing_key: bytes | None = None,
                 start: int = 0, end: int | None = None) -> VerifyResult:
    """Recompute every hash in [start, end) from stored bytes.

    Reports the earliest inconsistency. The chain link of the first entry in
    the range is checked against the preceding stored line when one exists.
    """
    stop = len(lines) if end is None else min(end, len(lines))
    prev_entry_hash: str | None = None
    if start > 0 and start <= len(lines):
        try:
            prev_record = json.loads(lines[start - 1].decode("utf-8"))
            prev_entry_hash = prev_record["entryHash"]
        except Exception:
            prev_entry_hash = None
    checked = 0
    for k in range(start, stop):
        raw = lines[k]
        try:
            text = raw.decode("utf-8")
            record = json.loads(text)
        except (UnicodeDecodeError, json.JSONDecodeError):
            return TamperDetected(k, "malformed-line")
        if not isinstance(record, dict) or set(record) != set(ENTRY_FIELDS):
            return TamperDetected(k, "malformed-entry")
        try:
            if canonical_bytes(record) != raw.rstrip(b"\n"):
                return TamperDetected(k, "non-canonical-form")
        except Exception:
            return TamperDetected(k, "malformed-entry")
        if record["sequence"] != k:
            return TamperDetected(k, "sequence-mismatch")
        if k == 0:
            if record["prevHash"] != ZERO_DIGEST:
                return TamperDetected(k, "genesis-prev-hash-mismatch")
        elif prev_entry_hash is not None and record["prevHash"] != prev_entry_hash:
            return TamperDetected(k, "chain-link-mismatch")
        try:
            recomputed_payload_hash = digest(record["payload"])
        except Exception:
            return TamperDetected(k, "malformed-entry")
        if recomputed_payload_hash != record["payloadHash"]:
            return TamperDetected(k, "payload-hash-mismatch")
        recomputed_entry_hash = entry_hash_for(
            record["sequence"], record["prevHash"], record["payloadHash"],
            record["eventType"], record["actor"], record["timestamp"],
        )
        if recomputed_entry_hash != record["entryHash"]:
            return TamperDetected(k, "entry-hash-mismatch")
        if signing_key is not None:
            if hmac_hex(signing_key, record["entryHash"]) != record["signature"]:
                return TamperDetected(k, "signature-mismatch")
        prev_entry_hash = record["entryHash"]
        checked += 1
    return Valid(checked)


class Ledger:
    """Single-writer hash chain with durable line-per-entry storage.

    Appends are totally ordered behind one lock; reads see a consistent
    prefix. The public surface exposes no mutation of existing entries.
    """

    def __init__(self, clock: VirtualClock, path: str | Path | None = None,
                 signing_key: bytes = DEFAULT_SIGNING_KEY) -> None:
        self._clock = clock
        self._path = Path(path) if path is not None else None
        self._key = signing_key
        self._lock = threading.Lock()
        self._lines: list[bytes] = []
        self._entries: list[LedgerEntry] = []
        self._head_receipt: AnchorReceipt | None = None
        self._observers: list[Callable[[LedgerEntry], None]] = []
        if self._path is not None and self._path.exists():
            self._load_existing()

    def _load_existing(self) -> None:
        raw = self._path.read_bytes()
        for line in raw.splitlines():
            if not line:
                continue
            self._lines.append(line)
            record = json.loads(line.decode("utf-8"))
            entry = LedgerEntry.from_record(record)
            self._entries.append(entry)
        if self._entries:
            last = self._entries[-1]
            self._head_receipt = AnchorReceipt(last.sequence, last.entry_hash, last.timestamp)

    def add_observer(self, observer: Callable[[LedgerEntry], None]) -> None:
        self._observers.append(observer)

    @property
    def clock(self) -> VirtualClock:
        return self._clock

    def __len__(self) -> int:
        return len(self._entries)

    @property
    def path(self) -> Path | None:
        return self._path

    def append(self, event_type: str | EventType, actor: str, payload: dict[str, Any],
               timestamp: datetime | None = None) -> AnchorReceipt:
        """Append one entry; the receipt is returned only after the bytes are durable."""
        if isinstance(event_type, EventType):
            event_type = event_type.value
        ts = isoformat_utc(timestamp) if timestamp is not None else self._clock.now_iso()
        with self._lock:
            sequence = len(self._entries)
            prev_hash = self._entries[-1].entry_hash if self._entries else ZERO_DIGEST
            payload_hash = digest(payload)
            entry_hash = entry_hash_for(sequence, prev_hash, payload_hash, event_type, actor, ts)
            signature = hmac_hex(self._key, entry_hash)
            entry = LedgerEntry(sequence, prev_hash, payload_hash, entry_hash,
                                signature, event_type, actor, ts, payload)
            line = canonical_bytes(entry.to_record())
            if self._path is not None:
                with open(self._path, "ab") as fh:
                    fh.write(line + b"\n")
                    fh.flush()
            self._lines.append(line)
            self._entries.append(entry)
            receipt = AnchorReceipt(sequence, entry_hash, ts)
            self._head_receipt = receipt
        for observer in self._observers:
            observer(entry)
        return receipt

    def entries(self) -> list[LedgerEntry]:
        with self._lock:
            return list(self._entries)

    def entry(self, sequence: int) -> LedgerEntry:
        return self._entries[sequence]

    def head(self) -> AnchorReceipt | None:
        return self._head_receipt

    def raw_lines(self) -> list[bytes]:
        with self._lock:
            return list(self._lines)

    def verify(self, start: int = 0, end: int | None = None,
               check_signatures: bool = True) -> VerifyResult:
        return verify_lines(self.raw_lines(), self._key if check_signatures else None, start, end)

    def verify_against_head(self, receipt: AnchorReceipt) -> VerifyResult:
        """Detect suffix truncation by comparing a held receipt to the stored chain."""
        with self._lock:
            length = len(self._entries)
            if receipt.sequence >= length:
                return TamperDetected(length, "truncated-ledger")
            stored = self._entries[receipt.sequence]
        if stored.entry_hash != receipt.entry_hash:
            return TamperDetected(receipt.sequence, "head-receipt-mismatch")
        return self.verify()

    def replay(self, event_types: Iterable[str] | None = None, actor: str | None = None,
               ref: str | None = None, start: int = 0, end: int | None = None) -> list[LedgerEntry]:
        """Entries in sequence order matching the filter; the range must verify."""
        result = self.verify(start, end)
        if not result.ok:
            raise TamperedRange(f"entry {result.first_bad_sequence}: {result.reason}")
        wanted = set(event_types) if event_types is not None else None
        out = []
        for entry in self.entries()[start:end]:
            if wanted is not None and entry.event_type not in wanted:
                continue
            if actor is not None and entry.actor != actor:
                continue
            if ref is not None and not _references(entry.payload, ref):
                continue
            out.append(entry)
        return out

    def lineage(self, entity_ref: str) -> LineageGraph:
        """All entries referencing the entity, as a sequence-ordered chain."""
        result = self.verify()
        if not result.ok:
            raise TamperedRange(f"entry {result.first_bad_sequence}: {result.reason}")
        graph = LineageGraph(entity_ref)
        for entry in self.entries():
            if _references(entry.payload, entity_ref):
                if graph.entries:
                    graph.edges.append((graph.entries[-1].sequence, entry.sequence))
                graph.entries.append(entry)
        return graph

    def iter_payloads(self, event_type: str | EventType) -> Iterator[tuple[LedgerEntry, dict[str, Any]]]:
        if isinstance(event_type, EventType):
            event_type = event_type.value
        for entry in self.entries():
            if entry.event_type == event_type:
                yield entry, entry.payload
