"""Command-line entry point.

Offline commands (run, verify, ledger, trace, registry snapshot/history,
policy check/explain) work directly on scenario and ledger files. Commands
that mutate a live system (hitl, policy activate, registry rollback,
evolve) talk to a running `orchestrate serve` instance over HTTP.
"""

from __future__ import annotations

import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import click

from .harness import ScenarioScript, run_scenario, verify_run
from .ledger import DEFAULT_SIGNING_KEY, AnchorReceipt, LedgerEntry, verify_lines
from .scenarios import BUILTIN_SCENARIOS


def _echo_json(obj) -> None:
    click.echo(json.dumps(obj, indent=2, sort_keys=True))


def _load_script(scenario: str) -> ScenarioScript:
    if scenario in BUILTIN_SCENARIOS:
        return BUILTIN_SCENARIOS[scenario]()
    return ScenarioScript.load_file(scenario)


def _read_entries(ledger_file: str) -> list[LedgerEntry]:
    lines = [l for l in Path(ledger_file).read_bytes().splitlines() if l]
    result = verify_lines(lines, DEFAULT_SIGNING_KEY)
    if not result.ok:
        raise click.ClickException(
            f"ledger fails verification at entry {result.first_bad_sequence}: {result.reason}")
    return [LedgerEntry.from_record(json.loads(l.decode("utf-8"))) for l in lines]


@click.group()
def main() -> None:
    """Governed orchestration control-plane runtime."""


@main.command()
@click.option("--scenario", required=True,
              help="Built-in scenario name or path to a scenario JSON file.")
@click.option("--out", "out_dir", default="runs", show_default=True,
              help="Directory for the ledger and head receipt.")
@click.option("--seed", default=0, show_default=True, help="Seed for randomized events.")
def run(scenario: str, out_dir: str, seed: int) -> None:
    """Run a scenario end to end and report expectation results."""
    script = _load_script(scenario)
    report = run_scenario(script, Path(out_dir) / script.scenario_id)
    for result in report.expectations:
        mark = "PASS" if result["ok"] else "FAIL"
        click.echo(f"{mark}  {result['kind']}: {result['detail']}")
    click.echo(f"ledger: {report.ledger_path}")
    click.echo(f"head receipt: {report.head_receipt_path}")
    click.echo("scenario result: " + ("PASS" if report.passed else "FAIL"))
    sys.exit(0 if report.passed else 1)


@main.command()
@click.argument("ledger_file", type=click.Path(exists=True))
@click.option("--head", "head_file", type=click.Path(exists=True), default=None,
              help="Out-of-band head receipt for truncation detection.")
def verify(ledger_file: str, head_file: str | None) -> None:
    """Verify a stored ledger: hash chain, head receipt, and behaviour scans."""
    report = verify_run(ledger_file, head_file)
    _echo_json(report)
    sys.exit(0 if report["ok"] else 1)


@main.command()
@click.option("--scenario", required=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8400, show_default=True)
@click.option("--console", "console_dist", default="frontend/dist",
              help="Directory with the built review console (optional).")
@click.option("--apply-reviews/--skip-reviews", default=False, show_default=True,
              help="Whether scripted review events are applied before serving.")
def serve(scenario: str, host: str, port: int, console_dist: str,
          apply_reviews: bool) -> None:
    """Run a scenario's seed and envelope events, then serve the HTTP API."""
    import uvicorn

    from .harness import ScenarioRunner
    from .service import create_app

    script = _load_script(scenario)
    if not apply_reviews:
        script.events = [e for e in script.events if e.get("kind") not in ("review", "override")]
    runner = ScenarioRunner(script)
    for event in script.events:
        if event.get("at"):
            runner.system.clock.advance_to(event["at"])
        runner._apply_event(event)
        runner.system.control.pump()
    app = create_app(runner.system, console_dist)
    if Path(console_dist).exists():
        click.echo(f"console mounted from {console_dist} at /console/")
    else:
        click.echo(f"console not found at {console_dist}; serving the API only")
    click.echo(f"serving {script.scenario_id} on http://{host}:{port} "
               f"({len(runner.system.gateway.queue())} open cases)")
    uvicorn.run(app, host=host, port=port, log_level="warning")


@main.group()
def scenarios() -> None:
    """Inspect and export the built-in scenario corpus."""


@scenarios.command("list")
def scenarios_list() -> None:
    for name in sorted(BUILTIN_SCENARIOS):
        script = BUILTIN_SCENARIOS[name]()
        click.echo(f"{name}: {len(script.events)} events, "
                   f"{len(script.expectations)} expectations")


@scenarios.command("export")
@click.argument("directory", type=click.Path())
def scenarios_export(directory: str) -> None:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    for name, builder in sorted(BUILTIN_SCENARIOS.items()):
        path = out / f"{name}.json"
        path.write_text(json.dumps(builder().to_json(), indent=2) + "\n", encoding="utf-8")
        click.echo(f"wrote {path}")


@main.command()
@click.argument("workflow_id")
@click.option("--ledger", "ledger_file", required=True, type=click.Path(exists=True))
def trace(workflow_id: str, ledger_file: str) -> None:
    """Print every ledger entry referencing a workflow, in order."""
    entries = [e for e in _read_entries(ledger_file)
               if _payload_references(e.payload, workflow_id)]
    if not entries:
        click.echo(f"no entries reference {workflow_id!r}")
        sys.exit(1)
    for entry in entries:
        click.echo(f"{entry.sequence:6d}  {entry.timestamp}  {entry.event_type:20s}  "
                   f"actor={entry.actor}")


def _payload_references(payload, ref: str) -> bool:
    if isinstance(payload, str):
        return payload == ref
    if isinstance(payload, dict):
        return any(_payload_references(v, ref) for v in payload.values())
    if isinstance(payload, list):
        return any(_payload_references(v, ref) for v in payload)
    return False


# -- ledger subcommands -----------------------------------------------------------


@main.group()
def ledger() -> None:
    """Offline ledger operations."""


@ledger.command("verify")
@click.argument("ledger_file", type=click.Path(exists=True))
@click.option("--head", "head_file", type=click.Path(exists=True), default=None)
def ledger_verify(ledger_file: str, head_file: str | None) -> None:
    lines = [l for l in Path(ledger_file).read_bytes().splitlines() if l]
    result = verify_lines(lines, DEFAULT_SIGNING_KEY)
    if not result.ok:
        click.echo(f"TAMPER DETECTED at entry {result.first_bad_sequence}: {result.reason}")
        sys.exit(1)
    click.echo(f"valid: {result.checked} entries")
    if head_file:
        receipt = AnchorReceipt.from_record(json.loads(Path(head_file).read_text()))
        if receipt.sequence >= len(lines):
            click.echo(f"TRUNCATION DETECTED: head receipt expects sequence "
                       f"{receipt.sequence}, ledger has {len(lines)} entries")
            sys.exit(1)
        stored = json.loads(lines[receipt.sequence].decode("utf-8"))
        if stored["entryHash"] != receipt.entry_hash:
            click.echo("HEAD RECEIPT MISMATCH")
            sys.exit(1)
        click.echo("head receipt matches")


@ledger.command("replay")
@click.argument("ledger_file", type=click.Path(exists=True))
@click.option("--workflow", default=None)
@click.option("--event-type", "event_type", default=None)
@click.option("--actor", default=None)
def ledger_replay(ledger_file: str, workflow: str | None, event_type: str | None,
                  actor: str | None) -> None:
    for entry in _read_entries(ledger_file):
        if workflow and not _payload_references(entry.payload, workflow):
            continue
        if event_type and entry.event_type != event_type:
            continue
        if actor and entry.actor != actor:
            continue
        _echo_json(entry.to_record())


@ledger.command("head")
@click.argument("ledger_file", type=click.Path(exists=True))
def ledger_head(ledger_file: str) -> None:
    entries = _read_entries(ledger_file)
    if not entries:
        raise click.ClickException("empty ledger")
    last = entries[-1]
    _echo_json({"sequence": last.sequence, "entryHash": last.entry_hash,
                "anchoredAt": last.timestamp})


# -- policy subcommands ------------------------------------------------------------


@main.group()
def policy() -> None:
    """Evaluate, explain, and activate policies."""


@policy.command("check")
@click.argument("request_file", type=click.Path(exists=True))
@click.option("--policy", "policy_files", multiple=True, required=True,
              type=click.Path(exists=True), help="Policy JSON file(s) treated as active.")
@click.option("--at", "at_instant", default=None,
              help="Evaluation instant (ISO 8601 with zone); defaults to now.")
def policy_check(request_file: str, policy_files: tuple[str, ...],
                 at_instant: str | None) -> None:
    from .clock import parse_instant
    from .policy import ActionRequest, Policy, PolicySnapshot, evaluate_snapshot

    request = ActionRequest.from_json(json.loads(Path(request_file).read_text()))
    policies = tuple(Policy.load_file(p) for p in policy_files)
    now = parse_instant(at_instant) if at_instant else datetime.now(timezone.utc)
    decision = evaluate_snapshot(PolicySnapshot(policies, ()), request, now)
    _echo_json(decision.to_json())
    sys.exit(0 if decision.verdict == "allow" else 1)


@policy.command("explain")
@click.argument("decision_ref")
@click.option("--ledger", "ledger_file", required=True, type=click.Path(exists=True))
def policy_explain(decision_ref: str, ledger_file: str) -> None:
    """Explain a recorded decision by ledger sequence or request ID."""
    for entry in _read_entries(ledger_file):
        if entry.event_type != "policy-decision":
            continue
        if decision_ref.isdigit() and entry.sequence != int(decision_ref):
            continue
        if not decision_ref.isdigit() and entry.payload.get("requestID") != decision_ref:
            continue
        decision = entry.payload["decision"]
        click.echo(f"sequence {entry.sequence} at {entry.timestamp}")
        click.echo(f"verdict: {decision['verdict']}")
        for violation in decision["violations"]:
            click.echo(f"  violation {violation['ruleID']}: observed "
                       f"{violation['observed']!r}, bound {violation['bound']!r}")
        click.echo(f"policy versions: {decision['evaluatedPolicyVersions']}")
        return
    raise click.ClickException(f"no policy decision matching {decision_ref!r}")


@policy.command("activate")
@click.argument("policy_id")
@click.argument("version", type=int)
@click.option("--api", required=True, help="Base URL of a running serve instance.")
@click.option("--operator", required=True)
def policy_activate(policy_id: str, version: int, api: str, operator: str) -> None:
    _api_post(api, f"/api/policies/{policy_id}/activate", {"version": version}, operator)


# -- hitl subcommands ---------------------------------------------------------------


@main.group()
def hitl() -> None:
    """Headless review-queue operations against a live instance."""


@hitl.command("list")
@click.option("--api", required=True)
def hitl_list(api: str) -> None:
    cases = _api_get(api, "/api/cases?state=open")
    if not cases:
        click.echo("review queue is empty")
        return
    for case in cases:
        click.echo(f"{case['caseID']}  {case['state']:20s} approvals "
                   f"{len([r for r in case['reviews'] if r['decision'] == 'approve'])}"
                   f"/{case['requiredApprovals']}  role={case['requiredRole']}  "
                   f"workflow={case['workflowRef']}")


@hitl.command("approve")
@click.argument("case_id")
@click.option("--api", required=True)
@click.option("--operator", required=True)
def hitl_approve(case_id: str, api: str, operator: str) -> None:
    _api_post(api, f"/api/cases/{case_id}/review", {"decision": "approve"}, operator)


@hitl.command("reject")
@click.argument("case_id")
@click.option("--api", required=True)
@click.option("--operator", required=True)
@click.option("--justification", default="")
def hitl_reject(case_id: str, api: str, operator: str, justification: str) -> None:
    _api_post(api, f"/api/cases/{case_id}/review",
              {"decision": "reject", "justification": justification}, operator)


@hitl.command("override")
@click.argument("case_id")
@click.option("--api", required=True)
@click.option("--operator", required=True)
@click.option("--direction", type=click.Choice(["force-proceed", "force-halt"]),
              required=True)
@click.option("--justification", required=True)
def hitl_override(case_id: str, api: str, operator: str, direction: str,
                  justification: str) -> None:
    _api_post(api, f"/api/cases/{case_id}/override",
              {"direction": direction, "justification": justification}, operator)


# -- registry subcommands -------------------------------------------------------------


@main.group()
def registry() -> None:
    """Asset lifecycle queries and rollback."""


@registry.command("snapshot")
@click.option("--ledger", "ledger_file", required=True, type=click.Path(exists=True))
@click.option("--at", "at_instant", required=True,
              help="Reconstruction instant (ISO 8601 with zone).")
def registry_snapshot(ledger_file: str, at_instant: str) -> None:
    from .clock import parse_instant
    from .registry import fold_deployments

    entries = _read_entries(ledger_file)
    deployed = fold_deployments(entries, until=parse_instant(at_instant))
    _echo_json({"asOf": at_instant, "deployedVersions": dict(sorted(deployed.items()))})


@registry.command("history")
@click.argument("asset_id")
@click.option("--ledger", "ledger_file", required=True, type=click.Path(exists=True))
def registry_history(asset_id: str, ledger_file: str) -> None:
    wanted = {"asset-registered", "asset-validated", "deployment", "rollback", "retirement"}
    rows = [e for e in _read_entries(ledger_file)
            if e.event_type in wanted and e.payload.get("assetID") == asset_id]
    if not rows:
        raise click.ClickException(f"no history for asset {asset_id!r}")
    for entry in rows:
        click.echo(f"{entry.sequence:6d}  {entry.timestamp}  {entry.event_type:18s}  "
                   f"{json.dumps({k: v for k, v in entry.payload.items() if k != 'assetID'})}")


@registry.command("rollback")
@click.argument("asset_id")
@click.argument("version")
@click.option("--api", required=True)
@click.option("--operator", required=True)
@click.option("--reason", required=True)
def registry_rollback(asset_id: str, version: str, api: str, operator: str,
                      reason: str) -> None:
    _api_post(api, f"/api/registry/assets/{asset_id}/rollback",
              {"toVersion": version, "reason": reason}, operator)


# -- evolve subcommands ----------------------------------------------------------------


@main.group()
def evolve() -> None:
    """Governed knowledge-update pipeline against a live instance."""


@evolve.command("propose")
@click.argument("proposal_file", type=click.Path(exists=True))
@click.option("--api", required=True)
@click.option("--operator", required=True)
def evolve_propose(proposal_file: str, api: str, operator: str) -> None:
    body = json.loads(Path(proposal_file).read_text())
    _api_post(api, "/api/proposals", body, operator)


@evolve.command("advance")
@click.argument("proposal_id")
@click.argument("stage")
@click.option("--api", required=True)
@click.option("--operator", required=True)
@click.option("--artifact", "artifact_file", type=click.Path(exists=True), default=None)
def evolve_advance(proposal_id: str, stage: str, api: str, operator: str,
                   artifact_file: str | None) -> None:
    artifact = json.loads(Path(artifact_file).read_text()) if artifact_file else {}
    _api_post(api, f"/api/proposals/{proposal_id}/advance",
              {"stage": stage, "artifact": artifact}, operator)


@evolve.command("status")
@click.argument("proposal_id")
@click.option("--api", required=True)
def evolve_status(proposal_id: str, api: str) -> None:
    _echo_json(_api_get(api, f"/api/proposals/{proposal_id}"))


# -- HTTP helpers -------------------------------------------------------------------------


def _api_get(api: str, path: str):
    import httpx

    response = httpx.get(api.rstrip("/") + path, timeout=10.0)
    if response.status_code >= 400:
        raise click.ClickException(f"{response.status_code}: {response.text}")
    return response.json()


def _api_post(api: str, path: str, body: dict, operator: str) -> None:
    import httpx

    response = httpx.post(api.rstrip("/") + path, json=body,
                          headers={"X-Operator-ID": operator}, timeout=10.0)
    if response.status_code >= 400:
        raise click.ClickException(f"{response.status_code}: {response.text}")
    _echo_json(response.json())


if __name__ == "__main__":
    main()
