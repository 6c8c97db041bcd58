"""Discrete-event runtime: a scheduler and a point-to-point message network.

The scheduler is a plain (due_ms, seq) heap. Under a `SimClock` the event
loop advances time itself, so a multi-node run is a single-threaded,
fully reproducible fold over the task heap. Under a `WallClock` the owner
calls `run_due()` periodically and time advances on its own.

The network simulates links with seeded uniform delays and counts bytes per
node, which is what the bandwidth measurements read. A node that is down
neither sends nor receives; messages in flight to a node that goes down are
dropped at delivery time.
"""

import heapq
import itertools
import logging
import random
from collections import defaultdict

from .clock import SimClock

log = logging.getLogger(__name__)


class Task:
    __slots__ = ("due_ms", "seq", "fn", "cancelled")

    def __init__(self, due_ms, seq, fn):
        self.due_ms = due_ms
        self.seq = seq
        self.fn = fn
        self.cancelled = False

    def cancel(self):
        self.cancelled = True


class Scheduler:
    def __init__(self, clock=None):
        self.clock = clock if clock is not None else SimClock()
        self._heap = []
        self._seq = itertools.count()

    def call_at(self, t_ms: int, fn) -> Task:
        t_ms = max(int(t_ms), self.clock.now_ms())
        task = Task(t_ms, next(self._seq), fn)
        heapq.heappush(self._heap, (task.due_ms, task.seq, task))
        return task

    def call_later(self, delay_ms: int, fn) -> Task:
        return self.call_at(self.clock.now_ms() + int(delay_ms), fn)

    def pending(self) -> int:
        return sum(1 for _, _, t in self._heap if not t.cancelled)

    def next_due(self):
        while self._heap and self._heap[0][2].cancelled:
            heapq.heappop(self._heap)
        return self._heap[0][0] if self._heap else None

    def run_due(self) -> int:
        """Execute tasks due at or before the current clock reading."""
        ran = 0
        while True:
            due = self.next_due()
            if due is None or due > self.clock.now_ms():
                return ran
            _, _, task = heapq.heappop(self._heap)
            if not task.cancelled:
                task.fn()
                ran += 1

    # The two methods below drive a SimClock forward and are the only way
    # time passes in simulated runs.

    def run_until(self, t_ms: int, max_steps: int = 10_000_000):
        steps = 0
        while True:
            due = self.next_due()
            if due is None or due > t_ms:
                break
            _, _, task = heapq.heappop(self._heap)
            if task.cancelled:
                continue
            if due > self.clock.now_ms():
                self.clock.advance_to(due)
            task.fn()
            steps += 1
            if steps > max_steps:
                raise RuntimeError("scheduler runaway: task re-arm loop?")
        if t_ms > self.clock.now_ms():
            self.clock.advance_to(t_ms)

    def run_until_idle(self, max_steps: int = 10_000_000):
        steps = 0
        while True:
            due = self.next_due()
            if due is None:
                return
            _, _, task = heapq.heappop(self._heap)
            if task.cancelled:
                continue
            if due > self.clock.now_ms():
                self.clock.advance_to(due)
            task.fn()
            steps += 1
            if steps > max_steps:
                raise RuntimeError("scheduler runaway: task re-arm loop?")


class Network:
    """Point-to-point datagram fabric between registered node ids."""

    def __init__(self, scheduler: Scheduler, seed: int = 0,
                 min_delay_ms: int = 2, max_delay_ms: int = 8):
        self.scheduler = scheduler
        self._rng = random.Random(seed)
        self._min = min_delay_ms
        self._max = max_delay_ms
        self._handlers = {}
        self._down = set()
        self.sent_bytes = defaultdict(int)
        self.recv_bytes = defaultdict(int)
        self.delivered = 0
        self.dropped = 0

    def register(self, node_id: str, handler):
        self._handlers[node_id] = handler
        self._down.discard(node_id)

    def set_down(self, node_id: str):
        self._down.add(node_id)

    def set_up(self, node_id: str):
        self._down.discard(node_id)

    def alive(self, node_id: str) -> bool:
        return node_id in self._handlers and node_id not in self._down

    def live_subset(self, node_ids) -> list:
        return [n for n in node_ids if self.alive(n)]

    def send(self, src: str, dst: str, data: bytes):
        if not self.alive(src):
            self.dropped += 1
            return
        self.sent_bytes[src] += len(data)
        delay = self._rng.randint(self._min, self._max)
        self.scheduler.call_later(delay, lambda: self._deliver(src, dst, data))

    def _deliver(self, src: str, dst: str, data: bytes):
        if not self.alive(dst):
            self.dropped += 1
            return
        self.recv_bytes[dst] += len(data)
        self.delivered += 1
        try:
            self._handlers[dst](src, data)
        except Exception:
            # A handler fault must not take down the event loop.
            log.exception("handler for %s failed on message from %s", dst, src)

    def bytes_for(self, node_id: str) -> int:
        return self.sent_bytes[node_id] + self.recv_bytes[node_id]

    def reset_counters(self):
        self.sent_bytes.clear()
        self.recv_bytes.clear()
        self.delivered = 0
        self.dropped = 0
