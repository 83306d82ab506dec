"""Logical clock assigning the tick timestamps used everywhere.

Ticks are plain non-negative integers with no wall-clock meaning, which
makes replays deterministic. Tick 0 is "before anything happened"; the
first assigned tick is 1.
"""

from __future__ import annotations


class LogicalClock:
    def __init__(self, start: int = 0) -> None:
        if start < 0:
            raise ValueError("clock cannot start below 0")
        self._last = start

    @property
    def now(self) -> int:
        """Last assigned tick (0 if none assigned yet)."""
        return self._last

    def tick(self) -> int:
        """Advance and return a fresh tick."""
        self._last += 1
        return self._last
