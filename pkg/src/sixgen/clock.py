"""Clocks.

Everything time-dependent takes a clock object so the whole system can run
under simulated time. `SimClock` only moves when told to; `WallClock` is for
live processes and benchmarks.
"""

import time


class SimClock:
    def __init__(self, start_ms: int = 0):
        self._now_ms = int(start_ms)

    def now_ms(self) -> int:
        return self._now_ms

    def advance(self, delta_ms: int):
        if delta_ms < 0:
            raise ValueError("time only moves forward")
        self._now_ms += int(delta_ms)

    def advance_to(self, t_ms: int):
        if t_ms < self._now_ms:
            raise ValueError("time only moves forward")
        self._now_ms = int(t_ms)


class WallClock:
    def __init__(self):
        self._t0 = time.monotonic()

    def now_ms(self) -> int:
        return int((time.monotonic() - self._t0) * 1000)
