"""Monotonic clocks shared by the energy providers and the workload timeline.

``RealClock`` waits in wall time. ``SimulatedClock`` only moves when told to,
so a full measurement cycle of minutes runs instantly while keeping every
timestamp exact to the nanosecond.
"""

from __future__ import annotations

import time


class RealClock:
    simulated = False

    def now_ns(self) -> int:
        return time.monotonic_ns()

    def sleep(self, seconds: float) -> None:
        if seconds > 0:
            time.sleep(seconds)

    def sleep_until_ns(self, deadline_ns: int) -> None:
        # No busy-waiting: a spinning core would show up in the energy counters.
        while True:
            remaining = deadline_ns - time.monotonic_ns()
            if remaining <= 0:
                return
            time.sleep(remaining / 1e9)


class SimulatedClock:
    simulated = True

    def __init__(self, start_ns: int = 0):
        self._now = int(start_ns)

    def now_ns(self) -> int:
        return self._now

    def advance_ns(self, delta_ns: int) -> None:
        if delta_ns < 0:
            raise ValueError("simulated time cannot move backwards")
        self._now += int(delta_ns)

    def sleep(self, seconds: float) -> None:
        if seconds > 0:
            self.advance_ns(seconds_to_ns(seconds))

    def sleep_until_ns(self, deadline_ns: int) -> None:
        if deadline_ns > self._now:
            self._now = int(deadline_ns)


def seconds_to_ns(seconds: float) -> int:
    return int(round(seconds * 1e9))
