"""Cooperative preemption cell shared between a solver and its owner."""
from __future__ import annotations

import threading

RUNNING = "RUNNING"
SUSPENDED = "SUSPENDED"
TERMINATED = "TERMINATED"

_VALID = {
    (RUNNING, SUSPENDED),
    (SUSPENDED, RUNNING),
    (RUNNING, TERMINATED),
    (SUSPENDED, TERMINATED),
}


class SolverControl:
    """Single mutable state cell polled by the solver at safe points.

    The owner flips the state; the solver observes it at conflict/flip
    boundaries.  In threaded mode a suspended solver parks on an event and
    burns no CPU beyond the poll; terminate() wakes it for a final exit.
    """

    def __init__(self) -> None:
        self._state = RUNNING
        self._wake = threading.Event()
        self._wake.set()
        self.parked = False

    @property
    def state(self) -> str:
        return self._state

    def _move(self, new: str) -> None:
        if self._state == new:
            return
        if (self._state, new) not in _VALID:
            raise ValueError(f"bad transition {self._state} -> {new}")
        self._state = new

    def suspend(self) -> None:
        self._move(SUSPENDED)
        self._wake.clear()

    def resume(self) -> None:
        self._move(RUNNING)
        self._wake.set()

    def terminate(self) -> None:
        self._move(TERMINATED)
        self._wake.set()

    def park_while_suspended(self) -> None:
        """Called from the solver thread; blocks until resumed or terminated."""
        while self._state == SUSPENDED:
            self.parked = True
            self._wake.wait(timeout=1.0)
        self.parked = False
