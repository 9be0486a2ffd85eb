"""Monotonic and virtual clocks.

All latency instrumentation reads one clock injected at pipeline build time.
The virtual clock advances only through ``sleep_ms``, which makes replayed
experiments deterministic and lets the full experiment suite run in well
under a second of wall time.
"""
from __future__ import annotations

import time


class MonotonicClock:
    """Wall clock backed by ``time.monotonic``; sleeps for real."""

    def now_ms(self) -> float:
        return time.monotonic() * 1000.0

    def sleep_ms(self, duration_ms: float) -> None:
        if duration_ms > 0:
            time.sleep(duration_ms / 1000.0)


class VirtualClock:
    """Manual clock: ``sleep_ms`` advances time instantly and exactly."""

    def __init__(self, start_ms: float = 0.0):
        self._now = float(start_ms)

    def now_ms(self) -> float:
        return self._now

    def sleep_ms(self, duration_ms: float) -> None:
        if duration_ms > 0:
            self._now += float(duration_ms)

    def advance(self, duration_ms: float) -> None:
        self.sleep_ms(duration_ms)


Clock = MonotonicClock | VirtualClock
