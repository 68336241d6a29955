from __future__ import annotations

import hashlib
import hmac
import json

import pytest

from govplane.canonical import ZERO_DIGEST, canonical_bytes
from govplane.ledger import (
    DEFAULT_SIGNING_KEY,
    AnchorReceipt,
    EventType,
    Ledger,
    TamperDetected,
    TamperedRange,
    Valid,
    verify_lines,
)


def independent_recompute(lines: list[bytes], key: bytes) -> tuple[bool, int]:
    """Oracle: recompute every hash from raw bytes using only hashlib/json.

    Deliberately shares no code with the ledger's own verifier.
    """
    prev = "0" * 64
    for k, raw in enumerate(lines):
        record = json.loads(raw.decode("utf-8"))
        payload_bytes = json.dumps(record["payload"], sort_keys=True,
                                   separators=(",", ":"), ensure_ascii=False).encode("utf-8")
        if hashlib.sha256(payload_bytes).hexdigest() != record["payloadHash"]:
            return False, k
        header = {
            "sequence": record["sequence"],
            "prevHash": record["prevHash"],
            "payloadHash": record["payloadHash"],
            "eventType": record["eventType"],
            "actor": record["actor"],
            "timestamp": record["timestamp"],
        }
        header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":"),
                                  ensure_ascii=False).encode("utf-8")
        if hashlib.sha256(header_bytes).hexdigest() != record["entryHash"]:
            return False, k
        if record["prevHash"] != prev or record["sequence"] != k:
            return False, k
        if hmac.new(key, record["entryHash"].encode(), hashlib.sha256).hexdigest() != record["signature"]:
            return False, k
        prev = record["entryHash"]
    return True, -1


def fill(ledger: Ledger, n: int) -> None:
    for i in range(n):
        ledger.append(EventType.WORKFLOW, f"module-{i % 3}",
                      {"workflowID": f"wf-{i:04d}", "step": i})
        ledger.clock.tick()


def test_genesis_entry_has_zero_prev_hash(ledger):
    receipt = ledger.append(EventType.WORKFLOW, "m", {"n": 1})
    assert receipt.sequence == 0
    assert ledger.entry(0).prev_hash == ZERO_DIGEST


def test_second_entry_chains_to_first(ledger):
    ledger.append(EventType.WORKFLOW, "m", {"n": 1})
    ledger.append(EventType.WORKFLOW, "m", {"n": 2})
    assert ledger.entry(1).prev_hash == ledger.entry(0).entry_hash


def test_thousand_appends_pass_independent_recompute_oracle(ledger):
    fill(ledger, 1000)
    ok, bad = independent_recompute(ledger.raw_lines(), DEFAULT_SIGNING_KEY)
    assert ok, f"oracle found inconsistency at {bad}"
    assert isinstance(ledger.verify(), Valid)


def test_untouched_ledger_verifies(ledger):
    fill(ledger, 25)
    result = ledger.verify()
    assert result.ok and result.checked == 25


def flip_byte(lines: list[bytes], entry: int, offset: int) -> list[bytes]:
    mutated = list(lines)
    line = bytearray(mutated[entry])
    line[offset] ^= 0xFF
    mutated[entry] = bytes(line)
    return mutated


def test_payload_byte_flip_detected_at_entry_17(ledger):
    fill(ledger, 30)
    lines = ledger.raw_lines()
    target = lines[17]
    offset = target.index(b'"payload"') + len(b'"payload":{"step":') + 1
    mutated = flip_byte(lines, 17, offset)
    result = verify_lines(mutated, DEFAULT_SIGNING_KEY)
    assert isinstance(result, TamperDetected)
    assert result.first_bad_sequence == 17


def test_exhaustive_byte_flips_all_detected(ledger):
    fill(ledger, 12)
    lines = ledger.raw_lines()
    for k, line in enumerate(lines):
        for offset in range(len(line)):
            result = verify_lines(flip_byte(lines, k, offset), DEFAULT_SIGNING_KEY)
            assert not result.ok, f"flip at entry {k} offset {offset} went undetected"
            assert result.first_bad_sequence <= k, (
                f"flip at entry {k} offset {offset} detected late at "
                f"{result.first_bad_sequence}")


def test_truncation_detected_via_head_receipt(tmp_path, clock):
    ledger = Ledger(clock, tmp_path / "l.ndjson")
    fill(ledger, 10)
    head = ledger.head()
    truncated = Ledger(clock, tmp_path / "t.ndjson")
    for entry in ledger.entries()[:-1]:
        truncated._lines.append(canonical_bytes(entry.to_record()))
        truncated._entries.append(entry)
    result = truncated.verify_against_head(head)
    assert isinstance(result, TamperDetected)
    assert result.reason == "truncated-ledger"
    # The surviving prefix still verifies on its own.
    assert truncated.verify(end=9).ok


def test_deterministic_serialization_across_instances(tmp_path):
    from govplane.clock import VirtualClock
    lines = []
    for _ in range(2):
        clock = VirtualClock("2024-11-24T08:00:00+00:00")
        ledger = Ledger(clock, None)
        fill(ledger, 50)
        lines.append(b"\n".join(ledger.raw_lines()))
    assert lines[0] == lines[1]


def test_file_backed_ledger_reloads(tmp_path, clock):
    path = tmp_path / "ledger.ndjson"
    ledger = Ledger(clock, path)
    fill(ledger, 8)
    reloaded = Ledger(clock, path)
    assert len(reloaded) == 8
    assert reloaded.verify().ok
    assert reloaded.head() == ledger.head()


def test_read_operations_do_not_mutate_storage(tmp_path, clock):
    path = tmp_path / "ledger.ndjson"
    ledger = Ledger(clock, path)
    fill(ledger, 15)
    before = hashlib.sha256(path.read_bytes()).hexdigest()
    ledger.verify()
    ledger.replay(event_types=[EventType.WORKFLOW.value])
    ledger.lineage("wf-0003")
    assert hashlib.sha256(path.read_bytes()).hexdigest() == before


def test_public_surface_has_no_mutation_of_existing_entries():
    mutating = [name for name in dir(Ledger)
                if not name.startswith("_") and any(
                    verb in name for verb in ("update", "delete", "remove", "set", "pop", "edit"))]
    assert mutating == []


def test_replay_filters_and_orders(ledger):
    ledger.append(EventType.DEPLOYMENT, "admin", {"assetID": "m", "version": "1"})
    ledger.append(EventType.WORKFLOW, "a", {"workflowID": "wf-x"})
    ledger.append(EventType.DEPLOYMENT, "admin", {"assetID": "m", "version": "2"})
    entries = ledger.replay(event_types=[EventType.DEPLOYMENT.value])
    assert [e.sequence for e in entries] == [0, 2]
    assert all(e.event_type == "deployment" for e in entries)


def test_replay_rejects_tampered_range(tmp_path, clock):
    ledger = Ledger(clock, tmp_path / "l.ndjson")
    fill(ledger, 5)
    ledger._lines[2] = flip_byte(ledger._lines, 2, 5)[2]
    with pytest.raises(TamperedRange):
        ledger.replay()


def test_lineage_orders_referencing_entries(ledger):
    ledger.append(EventType.MESSAGE_VALIDATED, "clin", {"workflowID": "wf-1", "outcome": "accepted"})
    ledger.append(EventType.WORKFLOW, "other", {"workflowID": "wf-2"})
    ledger.append(EventType.POLICY_DECISION, "engine", {"workflowID": "wf-1", "verdict": "allow"})
    ledger.append(EventType.ROUTING, "cp", {"workflowID": "wf-1", "target": "pharmacy"})
    graph = ledger.lineage("wf-1")
    assert graph.event_types == ["message-validated", "policy-decision", "routing"]
    assert graph.edges == [(0, 2), (2, 3)]


def test_lineage_of_unknown_entity_is_empty(ledger):
    fill(ledger, 4)
    graph = ledger.lineage("nothing-here")
    assert graph.entries == [] and graph.edges == []


def test_receipt_round_trip():
    receipt = AnchorReceipt(4, "ab" * 32, "2024-11-24T08:00:00+00:00")
    assert AnchorReceipt.from_record(receipt.to_record()) == receipt
