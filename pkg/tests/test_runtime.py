"""Scheduler and simulated network basics: ordering, cancellation, time,
seeded delays, byte accounting, and partition behavior."""

import pytest

from sixgen.clock import SimClock, WallClock
from sixgen.runtime import Network, Scheduler


def test_tasks_run_in_due_order_then_fifo():
    sched = Scheduler()
    seen = []
    sched.call_at(20, lambda: seen.append("late"))
    sched.call_at(10, lambda: seen.append("a"))
    sched.call_at(10, lambda: seen.append("b"))
    sched.run_until_idle()
    assert seen == ["a", "b", "late"]
    assert sched.clock.now_ms() == 20


def test_call_later_offsets_from_now():
    sched = Scheduler()
    sched.run_until(100)
    fired = []
    sched.call_later(50, lambda: fired.append(sched.clock.now_ms()))
    sched.run_until_idle()
    assert fired == [150]


def test_call_at_in_the_past_clamps_to_now():
    sched = Scheduler()
    sched.run_until(500)
    fired = []
    sched.call_at(100, lambda: fired.append(sched.clock.now_ms()))
    sched.run_until_idle()
    assert fired == [500]


def test_cancelled_tasks_do_not_run():
    sched = Scheduler()
    seen = []
    task = sched.call_at(10, lambda: seen.append("no"))
    sched.call_at(10, lambda: seen.append("yes"))
    task.cancel()
    sched.run_until_idle()
    assert seen == ["yes"]
    assert sched.pending() == 0


def test_run_until_does_not_execute_future_tasks():
    sched = Scheduler()
    seen = []
    sched.call_at(10, lambda: seen.append(1))
    sched.call_at(30, lambda: seen.append(2))
    sched.run_until(20)
    assert seen == [1]
    assert sched.clock.now_ms() == 20
    assert sched.next_due() == 30


def test_run_due_only_fires_elapsed_tasks():
    clock = SimClock()
    sched = Scheduler(clock)
    seen = []
    sched.call_at(10, lambda: seen.append(1))
    sched.call_at(30, lambda: seen.append(2))
    sched.run_due()
    assert seen == []
    clock.advance(10)
    sched.run_due()
    assert seen == [1]


def test_rearming_loop_is_detected():
    sched = Scheduler()

    def rearm():
        sched.call_later(1, rearm)

    sched.call_later(1, rearm)
    with pytest.raises(RuntimeError):
        sched.run_until_idle(max_steps=100)


def test_sim_clock_rejects_backward_movement():
    clock = SimClock(start_ms=10)
    with pytest.raises(ValueError):
        clock.advance(-1)
    with pytest.raises(ValueError):
        clock.advance_to(5)


def test_wall_clock_advances_on_its_own():
    clock = WallClock()
    assert clock.now_ms() >= 0


class TestNetwork:
    def _pair(self, seed=0):
        sched = Scheduler()
        net = Network(sched, seed=seed)
        inbox = []
        net.register("a", lambda src, data: inbox.append(("a", src, data)))
        net.register("b", lambda src, data: inbox.append(("b", src, data)))
        return sched, net, inbox

    def test_delivery_within_delay_bounds(self):
        sched, net, inbox = self._pair()
        net.send("a", "b", b"hello")
        assert inbox == []  # nothing delivered synchronously
        sched.run_until_idle()
        assert inbox == [("b", "a", b"hello")]
        assert 2 <= sched.clock.now_ms() <= 8

    def test_byte_counters_track_payload_sizes(self):
        sched, net, inbox = self._pair()
        net.send("a", "b", b"12345")
        net.send("b", "a", b"123")
        sched.run_until_idle()
        assert net.sent_bytes["a"] == 5
        assert net.recv_bytes["b"] == 5
        assert net.bytes_for("a") == 5 + 3
        net.reset_counters()
        assert net.bytes_for("a") == 0

    def test_down_destination_drops_in_flight_messages(self):
        sched, net, inbox = self._pair()
        net.send("a", "b", b"x")
        net.set_down("b")
        sched.run_until_idle()
        assert inbox == []
        assert net.dropped == 1
        assert not net.alive("b")

    def test_down_source_never_sends(self):
        sched, net, inbox = self._pair()
        net.set_down("a")
        net.send("a", "b", b"x")
        sched.run_until_idle()
        assert inbox == []
        assert net.sent_bytes["a"] == 0

    def test_revived_node_receives_again(self):
        sched, net, inbox = self._pair()
        net.set_down("b")
        net.set_up("b")
        net.send("a", "b", b"x")
        sched.run_until_idle()
        assert inbox == [("b", "a", b"x")]

    def test_same_seed_same_delays(self):
        def delays(seed):
            sched = Scheduler()
            net = Network(sched, seed=seed)
            arrivals = []
            net.register("a", lambda *_: None)
            net.register("b", lambda *_: arrivals.append(sched.clock.now_ms()))
            for _ in range(20):
                net.send("a", "b", b"x")
            sched.run_until_idle()
            return arrivals

        assert delays(5) == delays(5)
        assert delays(5) != delays(6)

    def test_handler_exception_does_not_stop_delivery(self):
        sched = Scheduler()
        net = Network(sched)
        got = []
        net.register("x", lambda *_: 1 / 0)
        net.register("y", lambda src, data: got.append(data))
        net.send("y", "x", b"boom")
        net.send("x", "y", b"fine")
        sched.run_until_idle()
        assert got == [b"fine"]

    def test_live_subset_filters_down_nodes(self):
        sched, net, _ = self._pair()
        net.set_down("a")
        assert net.live_subset(["a", "b", "c"]) == ["b"]
