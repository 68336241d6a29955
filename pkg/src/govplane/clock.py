"""Virtual clock.

Core modules never read the wall clock. Every timestamp comes from an
injected :class:`VirtualClock`, which the harness advances explicitly so
temporal-window checks, deadlines, and ledger timestamps are reproducible.
"""

from __future__ import annotations

from datetime import datetime, timedelta, timezone


def parse_instant(text: str) -> datetime:
    """Parse an ISO 8601 instant that carries an explicit zone designator.

    Accepts the ``Z`` suffix (Python 3.10's ``fromisoformat`` does not).
    Raises ``ValueError`` for unparseable text or a missing zone.
    """
    raw = text.strip()
    if raw.endswith(("Z", "z")):
        raw = raw[:-1] + "+00:00"
    instant = datetime.fromisoformat(raw)
    if instant.tzinfo is None:
        raise ValueError(f"instant {text!r} has no zone designator")
    return instant


def isoformat_utc(instant: datetime) -> str:
    """Render an aware datetime as UTC ISO 8601 text."""
    return instant.astimezone(timezone.utc).isoformat()


class VirtualClock:
    """Monotone virtual clock, advanced only by its owner.

    ``tick`` nudges the clock by a small default step so consecutive events
    carry distinct timestamps without the harness micromanaging time.
    """

    def __init__(self, start: datetime | str = "2024-11-24T08:00:00+00:00") -> None:
        if isinstance(start, str):
            start = parse_instant(start)
        if start.tzinfo is None:
            raise ValueError("virtual clock start must be zone-aware")
        self._now = start.astimezone(timezone.utc)

    def now(self) -> datetime:
        return self._now

    def now_iso(self) -> str:
        return isoformat_utc(self._now)

    def advance(self, seconds: float) -> datetime:
        if seconds < 0:
            raise ValueError("virtual clock cannot move backwards")
        self._now = self._now + timedelta(seconds=seconds)
        return self._now

    def advance_to(self, instant: datetime | str) -> datetime:
        if isinstance(instant, str):
            instant = parse_instant(instant)
        instant = instant.astimezone(timezone.utc)
        if instant < self._now:
            raise ValueError("virtual clock cannot move backwards")
        self._now = instant
        return self._now

    def tick(self, seconds: float = 0.05) -> datetime:
        return self.advance(seconds)
