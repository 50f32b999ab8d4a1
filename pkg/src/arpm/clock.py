"""Injectable time sources (UTC seconds since epoch)."""

from __future__ import annotations

import time
from collections.abc import Iterable
from datetime import datetime, timezone
from typing import Protocol


class Clock(Protocol):
    def __call__(self) -> float: ...


class WallClock:
    def __call__(self) -> float:
        return time.time()


class ScriptedClock:
    """Deterministic clock for tests and experiments.

    Starts at ``start`` and advances by ``step`` seconds per reading, unless
    explicit readings are queued with :meth:`push` or :meth:`set`.
    """

    def __init__(self, start: float = 1_767_225_600.0, step: float = 3600.0) -> None:
        self._now = float(start)
        self.step = float(step)
        self._queue: list[float] = []

    def push(self, readings: Iterable[float]) -> None:
        self._queue.extend(float(r) for r in readings)

    def set(self, now: float) -> None:
        self._now = float(now)

    def peek(self) -> float:
        return self._queue[0] if self._queue else self._now

    def __call__(self) -> float:
        if self._queue:
            self._now = self._queue.pop(0)
            return self._now
        value = self._now
        self._now += self.step
        return value


def iso_utc(ts: float) -> str:
    return datetime.fromtimestamp(ts, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
