"""Node-local publish/subscribe bus.

Per-topic logs with contiguous offsets from zero. Delivery is at-least-once:
a subscriber acknowledges each envelope, and anything unacknowledged when the
ack timeout lapses is delivered again from the oldest unacknowledged offset.
Subscribers may join with explicit starting offsets to replay history, and
every subscriber on a topic receives every event (fan-out). Events are kept
for the life of the process; the bus is a projection of node activity, not
durable state.

Delivery is synchronous in subscription order. A handler that publishes
while handling an event is picked up by the same delivery loop, so chains
like ingest -> breach -> alarm resolve within one publish call.
"""

import logging
from collections import defaultdict

log = logging.getLogger(__name__)


class Subscription:
    def __init__(self, bus, topics, handler, from_offsets, auto_ack,
                 max_redeliveries):
        self.bus = bus
        self.topics = list(topics)
        self.handler = handler
        self.auto_ack = auto_ack
        self.max_redeliveries = max_redeliveries
        self.active = True
        # Cursor per topic: everything below `acked` is done; events in
        # [acked, delivered) are in flight and subject to redelivery.
        self._acked = {}
        self._delivered = {}
        self._attempts = defaultdict(int)
        for t in self.topics:
            start = (from_offsets or {}).get(t, bus.next_offset(t))
            self._acked[t] = start
            self._delivered[t] = start

    def ack(self, topic, offset):
        if topic not in self._acked:
            return
        if offset >= self._acked[topic]:
            self._acked[topic] = offset + 1
            self._attempts.pop((topic, offset), None)

    def cancel(self):
        self.active = False

    def lag(self, topic) -> int:
        return self.bus.next_offset(topic) - self._acked.get(topic, 0)

    # -- delivery internals -------------------------------------------------

    def _pump(self, topic):
        while self.active and self._delivered[topic] < self.bus.next_offset(topic):
            offset = self._delivered[topic]
            env = self.bus.get(topic, offset)
            self._delivered[topic] = offset + 1
            self._dispatch(env)

    def _dispatch(self, env):
        topic, offset = env["topic"], env["offset"]
        key = (topic, offset)
        self._attempts[key] += 1
        if (self.max_redeliveries is not None
                and self._attempts[key] > self.max_redeliveries + 1):
            log.warning("dropping %s@%d after %d attempts",
                        topic, offset, self._attempts[key] - 1)
            self.ack(topic, offset)
            return
        try:
            self.handler(env)
        except Exception:
            log.exception("subscriber failed on %s@%d", topic, offset)
        else:
            if self.auto_ack:
                self.ack(topic, offset)
        if self._acked[topic] <= offset:
            self.bus._arm_redelivery(self, topic)

    def _redeliver(self, topic):
        if not self.active:
            return
        if self._acked[topic] >= self._delivered[topic]:
            return  # everything caught up; timer dies here
        self._delivered[topic] = self._acked[topic]
        self._pump(topic)


class Bus:
    def __init__(self, scheduler, ack_timeout_ms: int = 5000):
        self.scheduler = scheduler
        self.ack_timeout_ms = ack_timeout_ms
        self._logs = defaultdict(list)
        self._subs = defaultdict(list)

    def publish(self, topic: str, data: dict) -> int:
        offset = len(self._logs[topic])
        env = {
            "topic": topic,
            "offset": offset,
            "ts_ms": self.scheduler.clock.now_ms(),
            "data": data,
        }
        self._logs[topic].append(env)
        for sub in list(self._subs[topic]):
            sub._pump(topic)
        return offset

    def subscribe(self, topics, handler, from_offsets=None, auto_ack=True,
                  max_redeliveries=None) -> Subscription:
        sub = Subscription(self, topics, handler, from_offsets, auto_ack,
                           max_redeliveries)
        for t in sub.topics:
            self._subs[t].append(sub)
        # Replay any backlog behind the starting offsets immediately.
        for t in sub.topics:
            sub._pump(t)
        return sub

    def next_offset(self, topic: str) -> int:
        return len(self._logs[topic])

    def get(self, topic: str, offset: int) -> dict:
        return self._logs[topic][offset]

    def read(self, topic: str, from_offset: int = 0, limit: int = None) -> list:
        events = self._logs[topic][from_offset:]
        return events[:limit] if limit is not None else events

    def topics(self) -> list:
        return sorted(self._logs.keys())

    def _arm_redelivery(self, sub: Subscription, topic: str):
        def check():
            sub._redeliver(topic)

        self.scheduler.call_later(self.ack_timeout_ms, check)
