"""Message transport: a deterministic simulated event loop and a threaded one.

Both transports deliver the same interface to PE actors (a Context with
now_us/send/set_timer/log), so the actor code is identical in --sim and
--real runs.  Per (src, dst) pair delivery is FIFO in both modes.
"""
from __future__ import annotations

import heapq
import queue
import threading
import time
from dataclasses import dataclass, field
from random import Random
from typing import Any, Callable, Optional

from ..util import derive_seed

# Message kinds.
JOB_REQUEST = "JOB_REQUEST"
ADOPT_ACK = "ADOPT_ACK"
JOB_PAYLOAD = "JOB_PAYLOAD"
VOLUME_UPDATE = "VOLUME_UPDATE"
EVENT_REDUCE = "EVENT_REDUCE"
EVENT_BROADCAST = "EVENT_BROADCAST"
CLAUSES_BEGIN = "CLAUSES_BEGIN"
CLAUSES_UP = "CLAUSES_UP"
CLAUSES_BCAST = "CLAUSES_BCAST"
RESULT = "RESULT"
ABORT = "ABORT"
DEMAND_SET = "DEMAND_SET"
SOLVER_DONE = "SOLVER_DONE"


@dataclass
class Envelope:
    """One message between PEs.  payload is a kind-specific dict."""

    kind: str
    src: int
    dst: int
    job: Optional[int] = None
    payload: dict = field(default_factory=dict)


class Context:
    """What a PE actor sees of the outside world."""

    def __init__(self, pe_id: int, rng: Random):
        self.pe_id = pe_id
        self.rng = rng

    def now_us(self) -> int:
        raise NotImplementedError

    def send(self, env: Envelope, extra_delay_us: int = 0) -> None:
        raise NotImplementedError

    def set_timer(self, delay_us: int, tag: str, data: Any = None) -> None:
        raise NotImplementedError

    def log(self, kind: str, job: Optional[int], detail: str = "") -> None:
        raise NotImplementedError


def format_time_ms(us: int) -> str:
    """Render integer microseconds as milliseconds with fixed precision."""
    return "%d.%03d" % (us // 1000, us % 1000)


class Trace:
    """Append-only run trace; one line per event."""

    def __init__(self) -> None:
        self._lines: list[str] = []
        self._lock = threading.Lock()

    def add(self, time_us: int, pe: int, kind: str, job: Optional[int],
            detail: str = "") -> None:
        jobtxt = "-" if job is None else str(job)
        line = "%s %d %s %s" % (format_time_ms(time_us), pe, kind, jobtxt)
        if detail:
            line += " " + detail
        with self._lock:
            self._lines.append(line)

    def lines(self) -> list[str]:
        with self._lock:
            return list(self._lines)


# --- simulated transport ---------------------------------------------------

_EV_MSG = 0
_EV_TIMER = 1


class SimLoop:
    """Single-threaded discrete-event loop keyed by (time_us, seq)."""

    def __init__(self, seed: int, latency_us: int = 100, jitter_us: int = 50):
        self.now = 0
        self.latency_us = latency_us
        self.jitter_us = jitter_us
        self._rng = Random(derive_seed(seed, "sim-latency"))
        self._heap: list[tuple[int, int, int, int, Any, Any]] = []
        self._seq = 0
        self._pair_last: dict[tuple[int, int], int] = {}

    def _push(self, t: int, ev: int, pe: int, a: Any, b: Any) -> None:
        self._seq += 1
        heapq.heappush(self._heap, (t, self._seq, ev, pe, a, b))

    def post_message(self, env: Envelope, extra_delay_us: int = 0) -> None:
        jitter = self._rng.randrange(self.jitter_us + 1) if self.jitter_us else 0
        t = self.now + extra_delay_us + self.latency_us + jitter
        # Clamp to preserve per-pair FIFO despite jitter.
        key = (env.src, env.dst)
        t = max(t, self._pair_last.get(key, 0))
        self._pair_last[key] = t
        self._push(t, _EV_MSG, env.dst, env, None)

    def post_timer(self, pe: int, delay_us: int, tag: str, data: Any) -> None:
        self._push(self.now + delay_us, _EV_TIMER, pe, tag, data)

    def run(self, on_message: Callable[[int, Envelope], None],
            on_timer: Callable[[int, str, Any], None],
            should_stop: Callable[[], bool],
            timeout_us: int) -> None:
        while self._heap:
            if should_stop():
                return
            t = self._heap[0][0]
            if t > timeout_us:
                self.now = timeout_us
                return
            t, _seq, ev, pe, a, b = heapq.heappop(self._heap)
            self.now = t
            if ev == _EV_MSG:
                on_message(pe, a)
            else:
                on_timer(pe, a, b)
        self.now = min(self.now, timeout_us)


class SimContext(Context):
    """Context bound to one PE inside a SimLoop."""

    def __init__(self, pe_id: int, rng: Random, loop: SimLoop, trace: Trace):
        super().__init__(pe_id, rng)
        self._loop = loop
        self._trace = trace

    def now_us(self) -> int:
        return self._loop.now

    def send(self, env: Envelope, extra_delay_us: int = 0) -> None:
        self._loop.post_message(env, extra_delay_us)

    def set_timer(self, delay_us: int, tag: str, data: Any = None) -> None:
        self._loop.post_timer(self.pe_id, delay_us, tag, data)

    def log(self, kind: str, job: Optional[int], detail: str = "") -> None:
        self._trace.add(self._loop.now, self.pe_id, kind, job, detail)


# --- threaded transport ----------------------------------------------------


class RealRouter:
    """Shared mailbox registry for threaded runs."""

    def __init__(self, start_ns: int):
        self.start_ns = start_ns
        self.queues: dict[int, "queue.Queue[Envelope]"] = {}
        self.stop = threading.Event()

    def now_us(self) -> int:
        return (time.monotonic_ns() - self.start_ns) // 1000

    def register(self, pe_id: int) -> "queue.Queue[Envelope]":
        q: "queue.Queue[Envelope]" = queue.Queue()
        self.queues[pe_id] = q
        return q


class RealContext(Context):
    """Context bound to one PE thread; timers live in a local heap."""

    def __init__(self, pe_id: int, rng: Random, router: RealRouter, trace: Trace):
        super().__init__(pe_id, rng)
        self._router = router
        self._trace = trace
        self.inbox = router.register(pe_id)
        self._timers: list[tuple[int, int, str, Any]] = []
        self._tseq = 0

    def now_us(self) -> int:
        return self._router.now_us()

    def send(self, env: Envelope, extra_delay_us: int = 0) -> None:
        # Delivery latency is whatever the queues give us; extra_delay is a
        # simulation-only refinement and is ignored here.
        q = self._router.queues.get(env.dst)
        if q is not None:
            q.put(env)

    def set_timer(self, delay_us: int, tag: str, data: Any = None) -> None:
        self._tseq += 1
        heapq.heappush(self._timers, (self.now_us() + delay_us, self._tseq, tag, data))

    def log(self, kind: str, job: Optional[int], detail: str = "") -> None:
        self._trace.add(self.now_us(), self.pe_id, kind, job, detail)

    def pump(self, on_message: Callable[[Envelope], None],
             on_timer: Callable[[str, Any], None]) -> None:
        """Serve the mailbox and timer heap until the router stops."""
        while not self._router.stop.is_set():
            now = self.now_us()
            while self._timers and self._timers[0][0] <= now:
                _t, _s, tag, data = heapq.heappop(self._timers)
                on_timer(tag, data)
            wait_s = 0.005
            if self._timers:
                wait_s = min(wait_s, max(0.0, (self._timers[0][0] - self.now_us()) / 1e6))
            try:
                env = self.inbox.get(timeout=wait_s)
            except queue.Empty:
                continue
            on_message(env)
