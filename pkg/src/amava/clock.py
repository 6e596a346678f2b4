"""Session clocks. Everything downstream reads time through one of these,
so tests can run whole sessions on simulated milliseconds."""

from __future__ import annotations

import time


class SystemClock:
    """Monotonic milliseconds since the clock was created."""

    def __init__(self):
        self._t0 = time.monotonic()

    def now_ms(self) -> float:
        return (time.monotonic() - self._t0) * 1000.0


class ManualClock:
    """Test clock advanced explicitly; never moves on its own."""

    def __init__(self, start_ms: float = 0.0):
        self._now = float(start_ms)

    def now_ms(self) -> float:
        return self._now

    def advance(self, delta_ms: float) -> None:
        if delta_ms < 0:
            raise ValueError("clocks do not run backwards")
        self._now += delta_ms

    def set_ms(self, t_ms: float) -> None:
        if t_ms < self._now:
            raise ValueError("clocks do not run backwards")
        self._now = float(t_ms)
