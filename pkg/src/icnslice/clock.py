"""Deterministic discrete-event clock.

Events run in (time, insertion-sequence) order, so two runs with the same
seed and the same scheduling sequence produce identical traces regardless
of wall-clock behaviour.
"""

from __future__ import annotations

import heapq
from typing import Callable


class EventClock:
    def __init__(self, rng_seed: int = 0) -> None:
        self.now: float = 0.0
        self.rng_seed = rng_seed
        self._seq = 0
        self._queue: list[tuple[float, int, Callable[[], None]]] = []

    def schedule_at(self, at_ms: float, fn: Callable[[], None]) -> None:
        if at_ms < self.now - 1e-9:
            raise ValueError(f"cannot schedule at {at_ms} before now={self.now}")
        self._seq += 1
        heapq.heappush(self._queue, (max(at_ms, self.now), self._seq, fn))

    def schedule(self, delay_ms: float, fn: Callable[[], None]) -> None:
        self.schedule_at(self.now + delay_ms, fn)

    def pending(self) -> int:
        return len(self._queue)

    def peek_time(self) -> float | None:
        return self._queue[0][0] if self._queue else None

    def run_until(self, t_stop_ms: float, max_events: int = 10_000_000) -> int:
        """Dispatch every event with time <= t_stop_ms; clock lands on t_stop_ms.

        Events scheduled while draining are dispatched too if they fall
        within the window, so periodic events must re-arm themselves with a
        strictly positive period.
        """
        dispatched = 0
        while self._queue and self._queue[0][0] <= t_stop_ms:
            if dispatched >= max_events:
                raise RuntimeError(f"event budget exceeded ({max_events})")
            t, _, fn = heapq.heappop(self._queue)
            self.now = t
            fn()
            dispatched += 1
        self.now = max(self.now, t_stop_ms)
        return dispatched

    def run_all(self, max_events: int = 1_000_000) -> int:
        """Drain the queue completely; guards against runaway loops."""
        dispatched = 0
        while self._queue:
            if dispatched >= max_events:
                raise RuntimeError(f"event budget exceeded ({max_events})")
            t, _, fn = heapq.heappop(self._queue)
            self.now = t
            fn()
            dispatched += 1
        return dispatched
