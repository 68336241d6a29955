from __future__ import annotations

import json

import pytest

from govplane.canonical import canonical_bytes, digest, hmac_hex
from govplane.harness import (
    MalformedScript,
    ScenarioScript,
    run_all_scans,
    run_scenario,
    verify_run,
)
from govplane.ledger import DEFAULT_SIGNING_KEY, ZERO_DIGEST
from govplane.scenarios import (
    BUILTIN_SCENARIOS,
    finance_scenario,
    pharmacy_timeout_scenario,
    random_review_round,
    sepsis_scenario,
    stroke_drift_scenario,
)


@pytest.mark.parametrize("name", sorted(BUILTIN_SCENARIOS))
def test_builtin_scenarios_pass_their_expectations(name, tmp_path):
    report = run_scenario(BUILTIN_SCENARIOS[name](), tmp_path)
    failed = [e for e in report.expectations if not e["ok"]]
    assert report.passed, failed


def test_scenario_script_json_round_trip(tmp_path):
    script = sepsis_scenario()
    path = tmp_path / "sepsis.json"
    path.write_text(json.dumps(script.to_json(), indent=2), encoding="utf-8")
    loaded = ScenarioScript.load_file(path)
    assert loaded == script


def test_runs_are_reproducible_byte_for_byte(tmp_path):
    first = run_scenario(sepsis_scenario(), tmp_path / "a")
    second = run_scenario(sepsis_scenario(), tmp_path / "b")
    a = (tmp_path / "a" / "sepsis.ledger.ndjson").read_bytes()
    b = (tmp_path / "b" / "sepsis.ledger.ndjson").read_bytes()
    assert a == b
    assert first.passed and second.passed


def test_verify_run_passes_on_untouched_output(tmp_path):
    report = run_scenario(sepsis_scenario(), tmp_path)
    result = verify_run(report.ledger_path, report.head_receipt_path)
    assert result["ok"], result
    assert result["chain"]["ok"] and result["headReceipt"]["ok"]
    assert all(not v for v in result["scans"].values())


def test_verify_run_detects_truncation_against_head_receipt(tmp_path):
    report = run_scenario(sepsis_scenario(), tmp_path)
    ledger_path = tmp_path / "sepsis.ledger.ndjson"
    lines = ledger_path.read_bytes().splitlines()
    ledger_path.write_bytes(b"\n".join(lines[:-1]) + b"\n")
    result = verify_run(ledger_path, report.head_receipt_path)
    assert not result["ok"]
    assert result["headReceipt"] == {
        "ok": False, "reason": "truncated-ledger",
        "expectedSequence": len(lines) - 1, "entries": len(lines) - 1}
    # The surviving prefix chain still verifies.
    assert result["chain"]["ok"]


def forge_ledger_with_inserted_event(lines: list[bytes], position: int,
                                     event_type: str, actor: str, payload: dict) -> list[bytes]:
    """Corruption tool: insert a forged event and rebuild the whole chain so it
    hashes cleanly. Only the behavioural scans can catch this."""
    records = [json.loads(line.decode("utf-8")) for line in lines]
    forged = {"eventType": event_type, "actor": actor, "payload": payload,
              "timestamp": records[position]["timestamp"]}
    records.insert(position, forged)
    out = []
    prev = ZERO_DIGEST
    for k, record in enumerate(records):
        payload_hash = digest(record["payload"])
        header = {"sequence": k, "prevHash": prev, "payloadHash": payload_hash,
                  "eventType": record["eventType"], "actor": record["actor"],
                  "timestamp": record["timestamp"]}
        entry_hash = digest(header)
        rebuilt = {**header, "entryHash": entry_hash,
                   "signature": hmac_hex(DEFAULT_SIGNING_KEY, entry_hash),
                   "payload": record["payload"]}
        out.append(canonical_bytes(rebuilt))
        prev = entry_hash
    return out


def test_forged_routing_before_approval_fails_the_blocking_scan(tmp_path):
    report = run_scenario(sepsis_scenario(), tmp_path)
    ledger_path = tmp_path / "sepsis.ledger.ndjson"
    lines = [l for l in ledger_path.read_bytes().splitlines() if l]
    records = [json.loads(l.decode("utf-8")) for l in lines]
    case_opened_at = next(i for i, r in enumerate(records)
                          if r["eventType"] == "case-opened")
    workflow = records[case_opened_at]["payload"]["workflowRef"]
    forged = forge_ledger_with_inserted_event(
        lines, case_opened_at + 1, "routing", "control-plane",
        {"workflowID": workflow, "target": "care-team", "fallback": False})
    forged_path = tmp_path / "forged.ndjson"
    forged_path.write_bytes(b"\n".join(forged) + b"\n")
    result = verify_run(forged_path)
    assert result["chain"]["ok"]  # the forger rebuilt the hashes
    assert result["scans"]["hitl-blocking"], "blocking scan should have caught the forgery"
    assert not result["ok"]


def test_drift_analysis_groups_by_classifier_version(tmp_path):
    report = run_scenario(stroke_drift_scenario(), tmp_path)
    drift = report.drift_analysis
    assert drift["perVersion"]["1"] == {"decisions": 6, "falsePositives": 0}
    assert drift["perVersion"]["2"] == {"decisions": 8, "falsePositives": 4}
    assert drift["onset"]["classifierVersion"] == "2"


def test_pharmacy_timeout_uses_fallback_and_leaves_others_closed(tmp_path):
    report = run_scenario(pharmacy_timeout_scenario(), tmp_path)
    assert report.passed, [e for e in report.expectations if not e["ok"]]
    wf = next(iter(report.workflows.values()))
    assert wf["usedFallback"] and wf["routedTo"] == "manual-notification"


def test_finance_run_is_fast_and_exact(tmp_path):
    import time
    started = time.perf_counter()
    report = run_scenario(finance_scenario(), tmp_path)
    elapsed = time.perf_counter() - started
    assert report.passed
    assert elapsed < 1.0


def test_malformed_script_rejected():
    with pytest.raises(MalformedScript):
        ScenarioScript.from_json({"start": "2024-11-01T00:00:00+00:00"})
    script = sepsis_scenario()
    script.events.append({"kind": "teleport"})
    with pytest.raises(MalformedScript):
        run_scenario(script)


def test_random_review_rounds_always_satisfy_the_scans():
    for seed in range(25):
        system = random_review_round(seed)
        scans = run_all_scans(system.ledger.entries())
        assert all(not v for v in scans.values()), (seed, scans)
        assert system.ledger.verify().ok
