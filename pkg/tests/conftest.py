from __future__ import annotations

import pytest

from govplane.authz import Operator, RoleTable
from govplane.clock import VirtualClock
from govplane.ledger import Ledger
from govplane.semantic import FieldSpec, MessageSchema, OntologyStore, OntologyTerm, SchemaRegistry

START = "2024-11-24T08:00:00+00:00"


@pytest.fixture
def clock() -> VirtualClock:
    return VirtualClock(START)


@pytest.fixture
def ledger(tmp_path, clock) -> Ledger:
    return Ledger(clock, tmp_path / "ledger.ndjson")


@pytest.fixture
def ontology() -> OntologyStore:
    store = OntologyStore()
    store.register(OntologyTerm("medication-codes", "6809", "Metformin"))
    store.register(OntologyTerm("medication-codes", "11289", "Warfarin"))
    store.register(OntologyTerm("medication-codes", "99999", "Obsoletol", deprecated=True))
    store.register(OntologyTerm("lab-codes", "2345-4", "glucose"))
    store.register(OntologyTerm("lab-codes", "2524-7", "lactate"))
    store.register(OntologyTerm("condition-codes", "E11", "type 2 diabetes"))
    store.register(OntologyTerm("condition-codes", "OLD-1", "legacy condition", deprecated=True))
    store.register(OntologyTerm("action-codes", "medication-request", "medication request"))
    store.register(OntologyTerm("action-codes", "lab-result", "laboratory result"))
    store.register(OntologyTerm("unit-codes", "breaths/min", "breaths per minute"))
    store.register(OntologyTerm("unit-codes", "USD", "US dollars"))
    return store


@pytest.fixture
def schema_registry(ontology) -> SchemaRegistry:
    registry = SchemaRegistry(ontology)
    registry.register(medication_request_schema("1.0.0"))
    return registry


def medication_request_schema(version: str) -> MessageSchema:
    return MessageSchema(
        schema_id="medication-request",
        version=version,
        fields=(
            FieldSpec("patientID", "string", required=True),
            FieldSpec("rxnormCode", "code", required=True, vocabulary="medication-codes"),
            FieldSpec("dosageValue", "number", required=True,
                      unit_field="dosageUnit", allowed_units=("mg", "mcg")),
            FieldSpec("dosageUnit", "code", required=True, vocabulary="unit-codes"),
            FieldSpec("indicationCode", "code", vocabulary="condition-codes"),
            FieldSpec("administeredAt", "instant"),
        ),
    )


@pytest.fixture
def role_table() -> RoleTable:
    table = RoleTable({
        "clinician": ["review"],
        "senior-clinician": ["review", "override"],
        "treasury-approver": ["review", "policy-activate", "exception-grant"],
        "platform-admin": ["deploy", "rollback", "evolution-approve",
                           "policy-activate", "exception-grant"],
        "automation": ["deploy", "rollback"],
    })
    table.add_operator(Operator("alice", "Dr. Alice Ray", frozenset({"clinician"})))
    table.add_operator(Operator("bob", "Dr. Bob Chen", frozenset({"clinician"})))
    table.add_operator(Operator("carol", "Dr. Carol Diaz", frozenset({"senior-clinician"})))
    table.add_operator(Operator("dana", "Dana Wolfe", frozenset({"treasury-approver"})))
    table.add_operator(Operator("admin", "Platform Admin", frozenset({"platform-admin"})))
    table.add_operator(Operator("system-automation", "Automation",
                                frozenset({"automation"})))
    return table
