"""Injectable clocks and UTC timestamp helpers.

Every operation that needs "now" takes a Clock, so measurements and
experiments replay deterministically against a simulated clock.
"""

from __future__ import annotations

import abc
import time as _time
from datetime import datetime, timedelta, timezone

UTC = timezone.utc


def utc(year: int, month: int, day: int, hour: int = 0, minute: int = 0, second: int = 0) -> datetime:
    """Shorthand for a timezone-aware UTC datetime."""
    return datetime(year, month, day, hour, minute, second, tzinfo=UTC)


def parse_utc(text: str) -> datetime:
    """Parse an ISO-8601 timestamp, accepting both 'Z' and explicit offsets.

    Naive timestamps are taken to be UTC.
    """
    value = datetime.fromisoformat(text.replace("Z", "+00:00"))
    if value.tzinfo is None:
        value = value.replace(tzinfo=UTC)
    return value.astimezone(UTC)


def format_utc(at: datetime) -> str:
    """Render a datetime as ISO-8601 UTC."""
    return at.astimezone(UTC).isoformat()


def seconds_between(start: datetime, end: datetime) -> float:
    return (end - start).total_seconds()


class Clock(abc.ABC):
    """Source of the current time plus a way to wait for the next tick."""

    @abc.abstractmethod
    def now(self) -> datetime:
        """Current UTC time."""

    @abc.abstractmethod
    def sleep(self, seconds: float) -> None:
        """Block (or simulate blocking) for the given number of seconds."""


class SystemClock(Clock):
    """Wall clock; sleep really sleeps."""

    def now(self) -> datetime:
        return datetime.now(UTC)

    def sleep(self, seconds: float) -> None:
        if seconds > 0:
            _time.sleep(seconds)


class SimulatedClock(Clock):
    """Deterministic clock that advances only when told to.

    sleep() advances instantly, which lets long monitoring runs execute in
    test time.
    """

    def __init__(self, start: datetime):
        if start.tzinfo is None:
            start = start.replace(tzinfo=UTC)
        self._now = start.astimezone(UTC)

    def now(self) -> datetime:
        return self._now

    def sleep(self, seconds: float) -> None:
        self.advance(seconds)

    def advance(self, seconds: float) -> None:
        if seconds < 0:
            raise ValueError("clock cannot move backwards")
        self._now = self._now + timedelta(seconds=seconds)
