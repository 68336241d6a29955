"""Canonical serialization and digests.

Ledger hashing requires that the same event payload serializes to identical
bytes on every run: JSON with sorted keys, compact separators, UTF-8, no
NaN/Infinity. Digests are SHA-256 hex; entry signatures are HMAC-SHA256.
"""

from __future__ import annotations

import hashlib
import hmac
import json
import math
from typing import Any

ZERO_DIGEST = "0" * 64


class SerializationFailure(ValueError):
    """Payload cannot be canonically serialized."""


def _check_serializable(value: Any) -> None:
    if isinstance(value, float) and not math.isfinite(value):
        raise SerializationFailure(f"non-finite number {value!r} is not canonicalizable")
    if isinstance(value, dict):
        for key, item in value.items():
            if not isinstance(key, str):
                raise SerializationFailure(f"non-string key {key!r}")
            _check_serializable(item)
    elif isinstance(value, (list, tuple)):
        for item in value:
            _check_serializable(item)
    elif value is not None and not isinstance(value, (str, int, float, bool)):
        raise SerializationFailure(f"value of type {type(value).__name__} is not canonicalizable")


def canonical_bytes(value: Any) -> bytes:
    """Serialize ``value`` to canonical JSON bytes."""
    _check_serializable(value)
    text = json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return text.encode("utf-8")


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def digest(value: Any) -> str:
    """SHA-256 hex digest of the canonical serialization of ``value``."""
    return sha256_hex(canonical_bytes(value))


def hmac_hex(key: bytes, message: str) -> str:
    return hmac.new(key, message.encode("ascii"), hashlib.sha256).hexdigest()
