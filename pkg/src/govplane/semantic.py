"""Semantic message validation.

Inter-module messages are structured envelopes whose payload fields are
bound to controlled vocabularies and explicit units. Validation is strict
and deterministic: all failures are reported in a fixed stage order
(structural, vocabulary, units, temporal) and the payload is never touched.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .clock import parse_instant

UNIT_VOCABULARY = "unit-codes"
DEFAULT_UNITS = ("mg", "mcg", "mg/dL", "mmol/L", "minutes")

FIELD_TYPES = ("code", "number", "string", "instant", "boolean", "list")


class SemanticError(Exception):
    """Base class for semantic-layer errors."""


class UnknownTerm(SemanticError):
    pass


class DuplicateTerm(SemanticError):
    pass


class UnknownSchema(SemanticError):
    """schemaRef does not resolve. Distinct from a validation rejection."""


class DuplicateVersion(SemanticError):
    pass


class MalformedSchema(SemanticError):
    pass


class IllegalVersionBump(SemanticError):
    """The schema diff requires a higher version bump than was declared."""


@dataclass(frozen=True)
class OntologyTerm:
    vocabulary: str
    code: str
    label: str
    deprecated: bool = False


@dataclass(frozen=True)
class TermRef:
    vocabulary: str
    code: str

    def to_json(self) -> dict[str, str]:
        return {"vocabulary": self.vocabulary, "code": self.code}

    @staticmethod
    def from_json(obj: dict[str, str]) -> "TermRef":
        return TermRef(obj["vocabulary"], obj["code"])


class OntologyStore:
    """Versioned, file-loaded table of controlled vocabulary terms.

    Lookups never guess near-matches: a code either resolves exactly or
    raises :class:`UnknownTerm`.
    """

    def __init__(self, seed_default_units: bool = True) -> None:
        self._terms: dict[tuple[str, str], OntologyTerm] = {}
        if seed_default_units:
            for code in DEFAULT_UNITS:
                self.register(OntologyTerm(UNIT_VOCABULARY, code, code))

    def register(self, term: OntologyTerm) -> None:
        key = (term.vocabulary, term.code)
        if key in self._terms:
            raise DuplicateTerm(f"term {term.vocabulary}/{term.code} already registered")
        self._terms[key] = term

    def resolve(self, vocabulary: str, code: str) -> OntologyTerm:
        key = (vocabulary, code)
        if key not in self._terms:
            raise UnknownTerm(f"no term {code!r} in vocabulary {vocabulary!r}")
        return self._terms[key]

    def has(self, vocabulary: str, code: str) -> bool:
        return (vocabulary, code) in self._terms

    def terms(self) -> list[OntologyTerm]:
        return list(self._terms.values())

    def load_file(self, path: str | Path) -> int:
        """Load one tab-separated term per line: vocabulary, code, label, deprecated(0|1)."""
        count = 0
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 4 or parts[3] not in ("0", "1"):
                raise SemanticError(f"{path}:{lineno}: malformed ontology record")
            self.register(OntologyTerm(parts[0], parts[1], parts[2], parts[3] == "1"))
            count += 1
        return count


@dataclass(frozen=True)
class FieldSpec:
    """One payload field: its semantic type and bindings.

    ``vocabulary`` binds a code field to a controlled vocabulary. A number
    field that carries a magnitude names its companion unit field via
    ``unit_field`` and constrains the codes it accepts via ``allowed_units``.
    """

    name: str
    ftype: str
    required: bool = False
    vocabulary: Optional[str] = None
    unit_field: Optional[str] = None
    allowed_units: Optional[tuple[str, ...]] = None
    label: str = ""

    def to_json(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "ftype": self.ftype,
            "required": self.required,
            "vocabulary": self.vocabulary,
            "unitField": self.unit_field,
            "allowedUnits": list(self.allowed_units) if self.allowed_units else None,
            "label": self.label,
        }

    @staticmethod
    def from_json(obj: dict[str, Any]) -> "FieldSpec":
        allowed = obj.get("allowedUnits")
        return FieldSpec(
            name=obj["name"],
            ftype=obj["ftype"],
            required=obj.get("required", False),
            vocabulary=obj.get("vocabulary"),
            unit_field=obj.get("unitField"),
            allowed_units=tuple(allowed) if allowed else None,
            label=obj.get("label", ""),
        )


def parse_version(text: str) -> tuple[int, int, int]:
    parts = text.split(".")
    if len(parts) != 3 or not all(p.isdigit() for p in parts):
        raise MalformedSchema(f"version {text!r} is not major.minor.patch")
    return (int(parts[0]), int(parts[1]), int(parts[2]))


@dataclass(frozen=True)
class MessageSchema:
    schema_id: str
    version: str
    fields: tuple[FieldSpec, ...]
    compatible_with: tuple[str, ...] = ()

    def field_map(self) -> dict[str, FieldSpec]:
        return {f.name: f for f in self.fields}

    def unit_companions(self) -> set[str]:
        return {f.unit_field for f in self.fields if f.unit_field}

    def to_json(self) -> dict[str, Any]:
        return {
            "schemaID": self.schema_id,
            "version": self.version,
            "fields": [f.to_json() for f in self.fields],
            "compatibleWith": list(self.compatible_with),
        }

    @staticmethod
    def from_json(obj: dict[str, Any]) -> "MessageSchema":
        return MessageSchema(
            schema_id=obj["schemaID"],
            version=obj["version"],
            fields=tuple(FieldSpec.from_json(f) for f in obj["fields"]),
            compatible_with=tuple(obj.get("compatibleWith", ())),
        )

    @staticmethod
    def load_file(path: str | Path) -> "MessageSchema":
        return MessageSchema.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class MessageEnvelope:
    """The universal inter-module message."""

    message_id: str
    timestamp: str
    source_module: str
    target_module: str
    action_type: TermRef
    schema_ref: tuple[str, str]
    payload: dict[str, Any]
    confidence: Optional[float] = None
    provenance_refs: tuple[int, ...] = ()

    def to_json(self) -> dict[str, Any]:
        obj: dict[str, Any] = {
            "messageID": self.message_id,
            "timestamp": self.timestamp,
            "sourceModule": self.source_module,
            "targetModule": self.target_module,
            "actionType": self.action_type.to_json(),
            "schemaRef": {"schemaID": self.schema_ref[0], "version": self.schema_ref[1]},
            "payload": self.payload,
            "provenanceRefs": list(self.provenance_refs),
        }
        if self.confidence is not None:
            obj["confidence"] = self.confidence
        return obj

    @staticmethod
    def from_json(obj: dict[str, Any]) -> "MessageEnvelope":
        return MessageEnvelope(
            message_id=obj["messageID"],
            timestamp=obj["timestamp"],
            source_module=obj["sourceModule"],
            target_module=obj["targetModule"],
            action_type=TermRef.from_json(obj["actionType"]),
            schema_ref=(obj["schemaRef"]["schemaID"], obj["schemaRef"]["version"]),
            payload=dict(obj["payload"]),
            confidence=obj.get("confidence"),
            provenance_refs=tuple(obj.get("provenanceRefs", ())),
        )


@dataclass(frozen=True)
class ValidationResult:
    accepted: bool
    reasons: tuple[str, ...]

    def to_json(self) -> dict[str, Any]:
        return {"accepted": self.accepted, "reasons": list(self.reasons)}


@dataclass(frozen=True)
class RegistrationReceipt:
    schema_id: str
    version: str
    registered_at: str


# Diff classes, ordered by the bump level they demand.
_BREAKING, _ADDITIVE, _DOC = 2, 1, 0


def _schema_diff_level(old: MessageSchema, new: MessageSchema) -> int:
    """Classify the change set between two schema versions.

    Breaking (major): add a required field, remove any field, change a
    vocabulary binding, change a unit constraint, make an optional field
    required. Additive (minor): add an optional field, relax required to
    optional. Doc (patch): label-only changes.
    """
    level = _DOC
    old_fields = old.field_map()
    new_fields = new.field_map()
    for name in old_fields:
        if name not in new_fields:
            return _BREAKING
    for name, spec in new_fields.items():
        prior = old_fields.get(name)
        if prior is None:
            level = max(level, _BREAKING if spec.required else _ADDITIVE)
            continue
        if spec.vocabulary != prior.vocabulary:
            return _BREAKING
        if spec.unit_field != prior.unit_field or spec.allowed_units != prior.allowed_units:
            return _BREAKING
        if spec.ftype != prior.ftype:
            return _BREAKING
        if spec.required and not prior.required:
            return _BREAKING
        if prior.required and not spec.required:
            level = max(level, _ADDITIVE)
    return level


def _actual_bump_level(old: tuple[int, int, int], new: tuple[int, int, int]) -> int:
    if new[0] > old[0]:
        return _BREAKING
    if new[1] > old[1]:
        return _ADDITIVE
    return _DOC


class SchemaRegistry:
    """Registry of message schemas with version-bump enforcement."""

    def __init__(self, ontology: OntologyStore) -> None:
        self._ontology = ontology
        self._schemas: dict[tuple[str, str], MessageSchema] = {}
        self._latest: dict[str, tuple[int, int, int]] = {}

    def _check_well_formed(self, schema: MessageSchema) -> None:
        if not schema.schema_id:
            raise MalformedSchema("schemaID is empty")
        parse_version(schema.version)
        if not schema.fields:
            raise MalformedSchema("schema declares no field specs")
        names = [f.name for f in schema.fields]
        if len(names) != len(set(names)):
            raise MalformedSchema("duplicate field names")
        by_name = schema.field_map()
        for spec in schema.fields:
            if spec.ftype not in FIELD_TYPES:
                raise MalformedSchema(f"field {spec.name!r} has unknown type {spec.ftype!r}")
            if spec.ftype == "code" and not spec.vocabulary:
                raise MalformedSchema(f"code field {spec.name!r} lacks a vocabulary binding")
            if spec.vocabulary and spec.ftype != "code":
                raise MalformedSchema(f"field {spec.name!r} binds a vocabulary but is not a code field")
            if spec.unit_field:
                if spec.ftype != "number":
                    raise MalformedSchema(f"field {spec.name!r} names a unit field but is not a number")
                companion = by_name.get(spec.unit_field)
                if companion is None:
                    raise MalformedSchema(f"field {spec.name!r} names missing unit field {spec.unit_field!r}")
                if companion.ftype != "code" or companion.vocabulary != UNIT_VOCABULARY:
                    raise MalformedSchema(
                        f"unit field {spec.unit_field!r} must be a code field bound to {UNIT_VOCABULARY!r}")
            if spec.allowed_units and not spec.unit_field:
                raise MalformedSchema(f"field {spec.name!r} constrains units but names no unit field")

    def register(self, schema: MessageSchema, registered_at: str = "") -> RegistrationReceipt:
        self._check_well_formed(schema)
        key = (schema.schema_id, schema.version)
        if key in self._schemas:
            raise DuplicateVersion(f"schema {schema.schema_id} {schema.version} already registered")
        new_version = parse_version(schema.version)
        latest = self._latest.get(schema.schema_id)
        if latest is not None:
            if new_version <= latest:
                raise DuplicateVersion(
                    f"schema {schema.schema_id} {schema.version} is not newer than the latest registration")
            prior = self._schemas[(schema.schema_id, _render_version(latest))]
            required_level = _schema_diff_level(prior, schema)
            if _actual_bump_level(latest, new_version) < required_level:
                raise IllegalVersionBump(
                    f"schema {schema.schema_id} {schema.version}: change set requires a "
                    f"{'major' if required_level == _BREAKING else 'minor'} version bump")
        self._schemas[key] = schema
        self._latest[schema.schema_id] = new_version
        return RegistrationReceipt(schema.schema_id, schema.version, registered_at)

    def get(self, schema_id: str, version: str) -> MessageSchema:
        key = (schema_id, version)
        if key not in self._schemas:
            raise UnknownSchema(f"no schema {schema_id} {version}")
        return self._schemas[key]

    def versions(self, schema_id: str) -> list[str]:
        return sorted(
            (v for (sid, v) in self._schemas if sid == schema_id),
            key=parse_version,
        )

    def validate_message(self, envelope: MessageEnvelope) -> ValidationResult:
        """Strict validation; rejection reasons enumerate every failure.

        Stage order is fixed (structural, vocabulary, units, temporal) so the
        reason list is byte-for-byte deterministic for identical inputs.
        """
        schema = self.get(*envelope.schema_ref)
        reasons: list[str] = []
        by_name = schema.field_map()
        companions = schema.unit_companions()
        payload = envelope.payload

        # Structural: required fields, unknown fields, primitive types, confidence range.
        for spec in schema.fields:
            if spec.required and spec.name not in payload and spec.name not in companions:
                reasons.append(f"structural: missing required field '{spec.name}'")
        for name in sorted(set(payload) - set(by_name)):
            reasons.append(f"structural: unknown field '{name}'")
        for spec in schema.fields:
            if spec.name not in payload:
                continue
            value = payload[spec.name]
            if not _type_ok(spec.ftype, value):
                reasons.append(f"structural: field '{spec.name}' expected {spec.ftype}")
        if envelope.confidence is not None and not (0.0 <= envelope.confidence <= 1.0):
            reasons.append("structural: confidence out of range [0,1]")

        # Vocabulary: action type, then code fields in schema order.
        reasons.extend(self._check_term("action type", envelope.action_type.vocabulary,
                                        envelope.action_type.code))
        for spec in schema.fields:
            if spec.ftype != "code" or spec.name in companions:
                continue
            value = payload.get(spec.name)
            if value is None or not isinstance(value, str):
                continue
            reasons.extend(self._check_term(f"field '{spec.name}'", spec.vocabulary or "", value))

        # Units: every magnitude carries a resolvable, permitted unit term.
        for spec in schema.fields:
            if spec.ftype != "number" or not spec.unit_field:
                continue
            if spec.name not in payload:
                continue
            unit_code = payload.get(spec.unit_field)
            if unit_code is None:
                reasons.append(f"units: missing required unit '{spec.unit_field}' for field '{spec.name}'")
                continue
            if not isinstance(unit_code, str):
                reasons.append(f"units: field '{spec.unit_field}' expected a unit code")
                continue
            if not self._ontology.has(UNIT_VOCABULARY, unit_code):
                reasons.append(f"units: unknown unit '{unit_code}' for field '{spec.name}'")
                continue
            if self._ontology.resolve(UNIT_VOCABULARY, unit_code).deprecated:
                reasons.append(f"units: deprecated unit '{unit_code}' for field '{spec.name}'")
                continue
            if spec.allowed_units and unit_code not in spec.allowed_units:
                reasons.append(f"units: unit '{unit_code}' not allowed for field '{spec.name}'")

        # Temporal: envelope timestamp, then instant fields in schema order.
        if not _instant_ok(envelope.timestamp):
            reasons.append("temporal: timestamp is not ISO 8601 with an explicit zone")
        for spec in schema.fields:
            if spec.ftype != "instant" or spec.name not in payload:
                continue
            value = payload[spec.name]
            if isinstance(value, str) and not _instant_ok(value):
                reasons.append(f"temporal: field '{spec.name}' is not ISO 8601 with an explicit zone")

        return ValidationResult(accepted=not reasons, reasons=tuple(reasons))

    def _check_term(self, what: str, vocabulary: str, code: str) -> list[str]:
        if not self._ontology.has(vocabulary, code):
            return [f"vocabulary: unknown {what} '{code}' in vocabulary '{vocabulary}'"]
        if self._ontology.resolve(vocabulary, code).deprecated:
            return [f"vocabulary: deprecated {what} '{code}' in vocabulary '{vocabulary}'"]
        return []


def _render_version(version: tuple[int, int, int]) -> str:
    return ".".join(str(p) for p in version)


def _type_ok(ftype: str, value: Any) -> bool:
    if ftype == "number":
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if ftype in ("string", "code", "instant"):
        return isinstance(value, str)
    if ftype == "boolean":
        return isinstance(value, bool)
    if ftype == "list":
        return isinstance(value, list)
    return True


def _instant_ok(text: Any) -> bool:
    if not isinstance(text, str):
        return False
    try:
        parse_instant(text)
        return True
    except ValueError:
        return False
