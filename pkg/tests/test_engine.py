import math

import numpy as np
import pytest

from permaqnet.engine import (
    Admission,
    Bundle,
    DropCause,
    DtnBuffer,
    EventKind,
    LoraLink,
    NvisLink,
    SchedulingError,
    SimClock,
    dtn_flush_on_up,
    dtn_store,
    lora_send,
    nvis_step,
    nvis_up_fraction,
    reserve_bandwidth,
)
from permaqnet.rng import substream

DAY = 86400.0


def wire_nvis(clock, link):
    clock.on(EventKind.LINK_STATE_CHANGE, lambda e: nvis_step(clock, e.payload))
    link.start(clock)


class TestKernel:
    def test_empty_queue_runs_zero_events(self):
        clock = SimClock()
        assert clock.run_until(100.0) == 0
        assert clock.now == 100.0

    def test_equal_times_dispatch_in_insertion_order(self):
        clock = SimClock()
        seen = []
        clock.on(EventKind.METRIC_SAMPLE, lambda e: seen.append(e.payload))
        for tag in ("first", "second", "third"):
            clock.schedule(5.0, EventKind.METRIC_SAMPLE, tag)
        clock.run_until(10.0)
        assert seen == ["first", "second", "third"]

    def test_past_scheduling_rejected(self):
        clock = SimClock()
        clock.schedule(5.0, EventKind.METRIC_SAMPLE)
        clock.run_until(5.0)
        with pytest.raises(SchedulingError):
            clock.schedule(4.0, EventKind.METRIC_SAMPLE)

    def test_run_until_only_dispatches_due_events(self):
        clock = SimClock()
        clock.schedule(1.0, EventKind.METRIC_SAMPLE)
        clock.schedule(2.0, EventKind.METRIC_SAMPLE)
        assert clock.run_until(1.5) == 1
        assert clock.run_until(2.5) == 1

    def test_handlers_can_schedule_followups(self):
        clock = SimClock()
        fired = []

        def chain(event):
            fired.append(event.time)
            if event.time < 3.0:
                clock.schedule(event.time + 1.0, EventKind.METRIC_SAMPLE)

        clock.on(EventKind.METRIC_SAMPLE, chain)
        clock.schedule(1.0, EventKind.METRIC_SAMPLE)
        clock.run_until(10.0)
        assert fired == [1.0, 2.0, 3.0]


class TestLoraLink:
    def test_serialization_delay(self):
        clock = SimClock()
        link = LoraLink(bitrate=5470.0, rng=substream(1, "l"))
        event = lora_send(clock, link, 100)
        assert event.kind is EventKind.FRAME_ARRIVAL
        assert event.payload[0] is True
        assert event.time == pytest.approx(800.0 / 5470.0, abs=1e-9)

    def test_queue_wait_accumulates(self):
        link = LoraLink(bitrate=1000.0, rng=substream(1, "l"))
        first = link.offer(0.0, 125)   # 1 s airtime
        second = link.offer(0.0, 125)
        assert first.time == pytest.approx(1.0)
        assert second.time == pytest.approx(2.0)

    def test_full_queue_drops_with_congestion_cause(self):
        link = LoraLink(bitrate=1000.0, queue_bytes=200, rng=substream(1, "l"))
        assert link.offer(0.0, 125).delivered
        out = link.offer(0.0, 125)
        assert not out.delivered
        assert out.cause is DropCause.CONGESTION

    def test_error_probability_one_always_channel_drops(self):
        link = LoraLink(error_p=1.0, rng=substream(1, "l"))
        for _ in range(20):
            out = link.offer(0.0, 50)
            assert not out.delivered
            assert out.cause is DropCause.CHANNEL

    def test_duty_cycle_throttles_but_keeps_airtime(self):
        link = LoraLink(bitrate=1000.0, duty_cycle=0.1, rng=substream(1, "l"))
        first = link.offer(0.0, 125)
        second = link.offer(0.0, 125)
        assert first.time == pytest.approx(1.0)   # airs immediately
        assert second.time == pytest.approx(11.0)  # waits out the silence

    def test_backlog_drains_with_time(self):
        link = LoraLink(bitrate=1000.0, queue_bytes=250, rng=substream(1, "l"))
        link.offer(0.0, 125)
        link.offer(0.0, 125)
        assert link.backlog_bytes(1.0) == pytest.approx(125.0)
        assert link.offer(1.0, 125).delivered

    def test_burst_matches_sequential_offers(self):
        a = LoraLink(bitrate=1000.0, queue_bytes=500, rng=substream(1, "a"))
        b = LoraLink(bitrate=1000.0, queue_bytes=500, rng=substream(1, "a"))
        singles = [a.offer(2.0, 100) for _ in range(6)]
        delivered, times = b.offer_burst(2.0, 6, 100)
        for i, single in enumerate(singles):
            assert delivered[i] == single.delivered
            if single.delivered:
                assert times[i] == pytest.approx(single.time)
        assert a.counters == b.counters

    def test_burst_congestion_cutoff(self):
        link = LoraLink(bitrate=1000.0, queue_bytes=300, rng=substream(1, "l"))
        delivered, _ = link.offer_burst(0.0, 10, 100)
        assert delivered.sum() == 3
        assert link.counters.dropped_congestion == 7

    def test_conservation_counters(self):
        link = LoraLink(bitrate=1000.0, queue_bytes=400, error_p=0.3,
                        rng=substream(3, "l"))
        for i in range(200):
            link.offer(i * 0.5, 100)
        c = link.counters
        assert c.sent == 200
        assert c.sent == c.delivered + c.dropped_congestion + c.dropped_channel
        assert c.in_flight() == 0


class TestReservation:
    def test_first_flow_admitted(self):
        link = LoraLink(bitrate=1000.0)
        adm = reserve_bandwidth(link, "control", 400.0)
        assert adm == Admission(True, 600.0)

    def test_oversubscription_rejected_with_residual(self):
        link = LoraLink(bitrate=1000.0)
        reserve_bandwidth(link, "a", 700.0)
        adm = reserve_bandwidth(link, "b", 500.0)
        assert not adm.admitted
        assert adm.residual == pytest.approx(300.0)

    def test_reserved_frames_never_congestion_dropped(self):
        link = LoraLink(bitrate=1000.0, queue_bytes=200, rng=substream(1, "l"))
        reserve_bandwidth(link, "control", 100.0)
        # saturate the data plane far beyond the queue
        link.offer_burst(0.0, 50, 100)
        out = link.offer(0.0, 50, reserved=True)
        assert out.delivered
        assert link.counters.dropped_congestion == 48

    def test_duty_cycle_budget_bounds_reservation(self):
        link = LoraLink(bitrate=1000.0, duty_cycle=0.01)
        adm = reserve_bandwidth(link, "control", 5.0)
        assert adm.admitted
        assert not reserve_bandwidth(link, "more", 6.0).admitted


class TestNvis:
    def test_p_up_one_never_leaves_up(self):
        clock = SimClock()
        link = NvisLink(p_up=1.0, rng=substream(1, "n"))
        wire_nvis(clock, link)
        clock.run_until(400 * DAY)
        assert link.is_up
        assert nvis_up_fraction(link, clock.now) == 1.0

    def test_down_sojourn_scaled_from_p_up(self):
        link = NvisLink(p_up=0.7, mean_up_s=7 * 3600.0)
        assert link.mean_down_s == pytest.approx(3 * 3600.0)

    @pytest.mark.parametrize("p_up", [0.7, 0.85])
    def test_long_run_up_fraction(self, p_up):
        clock = SimClock()
        link = NvisLink(p_up=p_up, mean_up_s=7 * 3600.0, rng=substream(11, "n", p_up))
        wire_nvis(clock, link)
        clock.run_until(400 * DAY)
        assert nvis_up_fraction(link, clock.now) == pytest.approx(p_up, abs=0.02)

    def test_p_up_out_of_range(self):
        with pytest.raises(ValueError):
            NvisLink(p_up=1.5)

    def test_alternating_transitions(self):
        clock = SimClock()
        link = NvisLink(p_up=0.5, mean_up_s=100.0, rng=substream(2, "n"))
        states = []
        clock.on(EventKind.LINK_STATE_CHANGE, lambda e: (
            nvis_step(clock, e.payload), states.append(e.payload.is_up)))
        link.start(clock)
        clock.run_until(5000.0)
        assert states[:6] == [False, True, False, True, False, True]


class TestDtn:
    def test_pass_through_when_always_up(self):
        clock = SimClock()
        link = NvisLink(bitrate=3000.0, p_up=1.0, rng=substream(1, "n"))
        wire_nvis(clock, link)
        deliveries = []
        buf = DtnBuffer(link, on_deliver=lambda b, t: deliveries.append((b, t)))
        clock.run_until(100.0)
        dtn_store(clock, buf, Bundle(origin_time=100.0, nbytes=300))
        assert len(deliveries) == 1
        assert deliveries[0][1] == pytest.approx(100.0 + 2400.0 / 3000.0)

    def test_stored_while_down_released_at_up(self):
        clock = SimClock()
        link = NvisLink(bitrate=3000.0, p_up=0.5, mean_up_s=1000.0,
                        rng=substream(4, "n"))
        deliveries = []
        buf = DtnBuffer(link, on_deliver=lambda b, t: deliveries.append(t))

        def on_change(event):
            nvis_step(clock, event.payload)
            dtn_flush_on_up(clock, buf)

        clock.on(EventKind.LINK_STATE_CHANGE, on_change)
        link.start(clock)
        # advance into the first DOWN window
        clock.run_until(link.window_end + 1.0)
        assert not link.is_up
        down_end = link.window_end
        dtn_store(clock, buf, Bundle(origin_time=clock.now, nbytes=300))
        assert not deliveries
        clock.run_until(down_end + 1.0)
        assert deliveries and deliveries[0] >= down_end

    def test_never_releases_while_down(self):
        clock = SimClock()
        link = NvisLink(bitrate=3000.0, p_up=0.6, mean_up_s=500.0,
                        rng=substream(5, "n"))
        up_at_delivery = []
        buf = DtnBuffer(
            link, on_deliver=lambda b, t: up_at_delivery.append(t <= link.window_end))

        def on_change(event):
            nvis_step(clock, event.payload)
            dtn_flush_on_up(clock, buf)

        clock.on(EventKind.LINK_STATE_CHANGE, on_change)
        link.start(clock)

        rng = substream(5, "arrivals")
        t = 0.0
        for _ in range(300):
            t += float(rng.exponential(60.0))
            clock.run_until(t)
            dtn_store(clock, buf, Bundle(origin_time=t, nbytes=200))
        clock.run_until(t + 50000.0)
        assert all(up_at_delivery)
        assert len(up_at_delivery) + link.counters.dropped_channel == 300

    def test_overflow_drops_oldest(self):
        clock = SimClock()
        link = NvisLink(bitrate=3000.0, p_up=0.5, mean_up_s=1000.0,
                        rng=substream(6, "n"))
        buf = DtnBuffer(link, capacity_bytes=250)

        def on_change(event):
            nvis_step(clock, event.payload)
            dtn_flush_on_up(clock, buf)

        clock.on(EventKind.LINK_STATE_CHANGE, on_change)
        link.start(clock)
        clock.run_until(link.window_end + 1.0)  # now DOWN
        dtn_store(clock, buf, Bundle(origin_time=clock.now, nbytes=200, payload="old"))
        dtn_store(clock, buf, Bundle(origin_time=clock.now, nbytes=200, payload="new"))
        assert buf.dropped_overflow == 1
        assert buf.queue[buf._head].payload == "new"
        assert link.counters.dropped_congestion == 1


class TestDeterminism:
    def run_trace(self, seed):
        clock = SimClock()
        lora = LoraLink(bitrate=2000.0, error_p=0.2, queue_bytes=1000,
                        rng=substream(seed, "lora"))
        nvis = NvisLink(bitrate=3000.0, p_up=0.8, mean_up_s=2000.0, error_p=0.1,
                        rng=substream(seed, "nvis"))
        deliveries = []
        buf = DtnBuffer(nvis, on_deliver=lambda b, t: deliveries.append(round(t, 9)))

        def on_change(event):
            nvis_step(clock, event.payload)
            dtn_flush_on_up(clock, buf)

        clock.on(EventKind.LINK_STATE_CHANGE, on_change)
        nvis.start(clock)
        arrivals = substream(seed, "workload")
        t = 0.0
        outcomes = []
        for _ in range(500):
            t += float(arrivals.exponential(30.0))
            clock.run_until(t)
            out = lora.offer(t, 100)
            outcomes.append((out.delivered, round(out.time, 9)))
            if out.delivered:
                dtn_store(clock, buf, Bundle(origin_time=out.time, nbytes=100))
        clock.run_until(t + 100000.0)
        return outcomes, deliveries, lora.counters, nvis.counters

    def test_same_seed_identical_traces(self):
        assert self.run_trace(123) == self.run_trace(123)

    def test_different_seed_differs(self):
        assert self.run_trace(123) != self.run_trace(124)
