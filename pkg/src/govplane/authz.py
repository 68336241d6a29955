"""Operators and the static role/capability table.

Authorisation is role-based: a role table loaded at startup (and registered
as a lifecycle asset) maps roles to capabilities. There is no identity
provider; operators are known profiles.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable


class NotAuthorised(PermissionError):
    pass


class UnknownOperator(KeyError):
    pass


@dataclass(frozen=True)
class Operator:
    operator_id: str
    display_name: str
    roles: frozenset[str]
    credential_ref: str = ""

    def __post_init__(self) -> None:
        if not self.roles:
            raise ValueError(f"operator {self.operator_id!r} has no roles")

    def to_json(self) -> dict[str, Any]:
        return {
            "operatorID": self.operator_id,
            "displayName": self.display_name,
            "roles": sorted(self.roles),
            "credentialRef": self.credential_ref,
        }


class RoleTable:
    """Role -> capability map plus the operator directory."""

    def __init__(self, role_capabilities: dict[str, Iterable[str]] | None = None) -> None:
        self._capabilities: dict[str, frozenset[str]] = {
            role: frozenset(caps) for role, caps in (role_capabilities or {}).items()
        }
        self._operators: dict[str, Operator] = {}

    def define_role(self, role: str, capabilities: Iterable[str]) -> None:
        self._capabilities[role] = frozenset(capabilities)

    def add_operator(self, operator: Operator) -> None:
        if operator.operator_id in self._operators:
            raise ValueError(f"operator {operator.operator_id!r} already registered")
        self._operators[operator.operator_id] = operator

    def operator(self, operator_id: str) -> Operator:
        if operator_id not in self._operators:
            raise UnknownOperator(operator_id)
        return self._operators[operator_id]

    def operators(self) -> list[Operator]:
        return sorted(self._operators.values(), key=lambda o: o.operator_id)

    def capabilities_of(self, operator_id: str) -> frozenset[str]:
        operator = self.operator(operator_id)
        caps: set[str] = set()
        for role in operator.roles:
            caps |= self._capabilities.get(role, frozenset())
        return frozenset(caps)

    def is_authorised(self, operator_id: str, capability: str) -> bool:
        try:
            return capability in self.capabilities_of(operator_id)
        except UnknownOperator:
            return False

    def require(self, operator_id: str, capability: str) -> Operator:
        if not self.is_authorised(operator_id, capability):
            raise NotAuthorised(f"operator {operator_id!r} lacks capability {capability!r}")
        return self.operator(operator_id)

    def has_role(self, operator_id: str, role: str) -> bool:
        try:
            return role in self.operator(operator_id).roles
        except UnknownOperator:
            return False

    def to_json(self) -> dict[str, Any]:
        return {
            "roles": {role: sorted(caps) for role, caps in sorted(self._capabilities.items())},
            "operators": [op.to_json() for op in self.operators()],
        }

    @staticmethod
    def from_json(obj: dict[str, Any]) -> "RoleTable":
        table = RoleTable({role: caps for role, caps in obj.get("roles", {}).items()})
        for record in obj.get("operators", ()):
            table.add_operator(Operator(
                operator_id=record["operatorID"],
                display_name=record.get("displayName", record["operatorID"]),
                roles=frozenset(record["roles"]),
                credential_ref=record.get("credentialRef", ""),
            ))
        return table

    @staticmethod
    def load_file(path: str | Path) -> "RoleTable":
        return RoleTable.from_json(json.loads(Path(path).read_text(encoding="utf-8")))
