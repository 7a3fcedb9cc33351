"""Deterministic discrete-event kernel and classical channel models.

The kernel dispatches events in (time, insertion order), so a run is a
pure function of (config, seed).  Channel models: a shared LoRa medium
as a bounded FIFO with an optional duty-cycle budget, an intermittent
backbone link as a two-state availability process, a store-and-forward
buffer that releases only while the backbone is up, and preventive
bandwidth reservation for control-plane flows.

LoRa frames can be offered one at a time (scheduling delivery/drop
events) or as a burst whose outcomes are computed arithmetically with
identical queue semantics; bursts keep consensus-heavy runs tractable.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

import numpy as np


class SchedulingError(ValueError):
    """Event scheduled in the past or with invalid parameters."""


class EventKind(Enum):
    FRAME_ARRIVAL = "frame-arrival"
    LINK_STATE_CHANGE = "link-state-change"
    SENSOR_READING = "sensor-reading"
    CONSENSUS_ROUND = "consensus-round"
    TRUST_UPDATE = "trust-update"
    METRIC_SAMPLE = "metric-sample"


@dataclass(order=True)
class SimEvent:
    time: float
    seq: int
    kind: EventKind = field(compare=False)
    payload: object = field(compare=False, default=None)


class SimClock:
    """Virtual-time event queue with per-kind handlers."""

    def __init__(self):
        self.now = 0.0
        self._heap: list[tuple] = []  # (time, seq, event); tuples compare in C
        self._seq = 0
        self._handlers: dict[EventKind, Callable[[SimEvent], None]] = {}
        self.dispatched = 0
        self.trace: Optional[list] = None

    def on(self, kind: EventKind, handler: Callable[[SimEvent], None]) -> None:
        self._handlers[kind] = handler

    def schedule(self, time: float, kind: EventKind, payload=None) -> SimEvent:
        if time < self.now:
            raise SchedulingError(f"cannot schedule at {time} before now={self.now}")
        event = SimEvent(time, self._seq, kind, payload)
        heapq.heappush(self._heap, (time, self._seq, event))
        self._seq += 1
        return event

    def run_until(self, t_end: float) -> int:
        """Dispatch every event with time <= t_end; returns the dispatch count."""
        dispatched = 0
        heap = self._heap
        handlers = self._handlers
        while heap and heap[0][0] <= t_end:
            time, _, event = heapq.heappop(heap)
            self.now = time
            if self.trace is not None:
                self.trace.append(event)
            handler = handlers.get(event.kind)
            if handler is not None:
                handler(event)
            dispatched += 1
        self.now = max(self.now, t_end)
        self.dispatched += dispatched
        return dispatched


@dataclass
class LinkCounters:
    sent: int = 0
    delivered: int = 0
    dropped_congestion: int = 0
    dropped_channel: int = 0

    def in_flight(self) -> int:
        return self.sent - self.delivered - self.dropped_congestion - self.dropped_channel


class DropCause(Enum):
    CONGESTION = "congestion"
    CHANNEL = "channel"


@dataclass
class FrameOutcome:
    delivered: bool
    time: float  # delivery time, or the offer time for drops
    cause: Optional[DropCause] = None


class LoraLink:
    """Shared access medium: single-server FIFO over a duty-cycled budget.

    A frame airs at ``bitrate`` for 8*bytes/bitrate seconds and then holds
    the channel budget for airtime/duty_cycle, which models regulatory
    duty-cycle silence.  Frames are congestion-dropped only when the
    queued backlog would exceed the byte capacity; channel errors consume
    airtime but deliver nothing.  Reserved (admitted control-plane) frames
    bypass the capacity check and are never congestion-dropped.
    """

    def __init__(self, bitrate: float = 5470.0, error_p: float = 0.0,
                 queue_bytes: int = 65536, duty_cycle: float = 1.0,
                 rng: Optional[np.random.Generator] = None, name: str = "lora"):
        if not 0.0 <= error_p <= 1.0:
            raise ValueError("error_p must be in [0, 1]")
        if not 0.0 < duty_cycle <= 1.0:
            raise ValueError("duty_cycle must be in (0, 1]")
        self.bitrate = float(bitrate)
        self.error_p = float(error_p)
        self.queue_bytes = int(queue_bytes)
        self.duty_cycle = float(duty_cycle)
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.name = name
        self.free_at = 0.0
        self.counters = LinkCounters()
        self.reservations: dict[str, float] = {}

    @property
    def budget_rate(self) -> float:
        """Sustained drain rate of the medium in bits/s."""
        return self.bitrate * self.duty_cycle

    def airtime(self, nbytes: int) -> float:
        return 8.0 * nbytes / self.bitrate

    def backlog_bytes(self, t: float) -> float:
        return max(0.0, self.free_at - t) * self.budget_rate / 8.0

    def offer(self, t: float, nbytes: int, reserved: bool = False) -> FrameOutcome:
        """Offer one frame at time t; returns its delivery or drop outcome."""
        if nbytes <= 0:
            raise ValueError("frame must have positive size")
        self.counters.sent += 1
        if not reserved and self.backlog_bytes(t) + nbytes > self.queue_bytes:
            self.counters.dropped_congestion += 1
            return FrameOutcome(False, t, DropCause.CONGESTION)
        start = max(t, self.free_at)
        air = self.airtime(nbytes)
        self.free_at = start + air / self.duty_cycle
        if self.error_p > 0.0 and self.rng.random() < self.error_p:
            self.counters.dropped_channel += 1
            return FrameOutcome(False, t, DropCause.CHANNEL)
        self.counters.delivered += 1
        return FrameOutcome(True, start + air)

    def offer_burst(self, t: float, count: int, nbytes: int,
                    reserved: bool = False) -> tuple[np.ndarray, np.ndarray]:
        """Offer ``count`` equal-size frames at time t.

        Returns (delivered mask, delivery times); dropped frames carry the
        offer time.  Semantics match ``count`` sequential offers.
        """
        self.counters.sent += count
        if reserved:
            admitted = count
        else:
            room = self.queue_bytes - self.backlog_bytes(t)
            admitted = min(count, max(0, int(room // nbytes)))
        self.counters.dropped_congestion += count - admitted
        if admitted == 0:
            return np.zeros(count, dtype=bool), np.full(count, t)
        air = self.airtime(nbytes)
        slot = air / self.duty_cycle
        start0 = max(t, self.free_at)
        self.free_at = start0 + admitted * slot
        first = start0 + air
        if self.error_p > 0.0:
            ok = self.rng.random(admitted) >= self.error_p
            n_ok = int(ok.sum())
        else:
            ok = np.ones(admitted, dtype=bool)
            n_ok = admitted
        self.counters.dropped_channel += admitted - n_ok
        self.counters.delivered += n_ok
        times = first + slot * np.arange(count, dtype=float)
        if admitted < count:
            delivered = np.zeros(count, dtype=bool)
            delivered[:admitted] = ok
            times[admitted:] = t
        else:
            delivered = ok
        if n_ok < admitted:
            times[:admitted][~ok] = t
        return delivered, times

    def offer_burst_last_time(self, t: float, count: int, nbytes: int,
                              reserved: bool = False) -> float:
        """Offer a burst where only the completion time matters.

        Same medium occupancy and counters as ``offer_burst``, without
        building per-frame outcome arrays; returns the delivery time of
        the burst's last frame (``t`` when nothing is admitted).
        """
        self.counters.sent += count
        if reserved:
            admitted = count
        else:
            room = self.queue_bytes - self.backlog_bytes(t)
            admitted = min(count, max(0, int(room // nbytes)))
        self.counters.dropped_congestion += count - admitted
        if admitted == 0:
            return t
        air = self.airtime(nbytes)
        slot = air / self.duty_cycle
        start0 = max(t, self.free_at)
        self.free_at = start0 + admitted * slot
        if self.error_p > 0.0:
            errs = int(np.count_nonzero(self.rng.random(admitted) < self.error_p))
        else:
            errs = 0
        self.counters.dropped_channel += errs
        self.counters.delivered += admitted - errs
        return start0 + (admitted - 1) * slot + air

    def reserve(self, flow: str, max_rate: float) -> "Admission":
        return reserve_bandwidth(self, flow, max_rate)


@dataclass(frozen=True)
class Admission:
    admitted: bool
    residual: float


def reserve_bandwidth(link: LoraLink, flow: str, max_rate: float) -> Admission:
    """Admit a flow iff total reserved rate stays within the link budget.

    Admitted flows send with ``reserved=True`` and are never
    congestion-dropped; rejection reports the residual capacity.
    """
    if max_rate < 0:
        raise ValueError("max_rate must be non-negative")
    used = sum(rate for name, rate in link.reservations.items() if name != flow)
    residual = link.budget_rate - used
    if max_rate > residual:
        return Admission(False, residual)
    link.reservations[flow] = max_rate
    return Admission(True, residual - max_rate)


def lora_send(clock: SimClock, link: LoraLink, frame_bytes: int,
              payload=None, reserved: bool = False) -> SimEvent:
    """Send one frame, scheduling its delivery or drop as a frame-arrival event.

    The event payload is (delivered, cause, original payload); drops are
    modeled outcomes, not errors.
    """
    outcome = link.offer(clock.now, frame_bytes, reserved=reserved)
    if outcome.delivered:
        return clock.schedule(outcome.time, EventKind.FRAME_ARRIVAL,
                              (True, None, payload))
    return clock.schedule(clock.now, EventKind.FRAME_ARRIVAL,
                          (False, outcome.cause, payload))


class NvisLink:
    """Backbone link whose availability alternates UP/DOWN sojourns.

    Sojourns are exponential with means chosen so the stationary UP
    fraction equals ``p_up``; ``p_up == 1`` never leaves UP.
    """

    def __init__(self, bitrate: float = 3000.0, p_up: float = 1.0,
                 mean_up_s: float = 25200.0, error_p: float = 0.0,
                 rng: Optional[np.random.Generator] = None, name: str = "nvis"):
        if not 0.0 <= p_up <= 1.0:
            raise ValueError("p_up must be in [0, 1]")
        if p_up == 0.0:
            raise ValueError("a permanently-down link carries no traffic")
        self.bitrate = float(bitrate)
        self.p_up = float(p_up)
        self.mean_up_s = float(mean_up_s)
        self.mean_down_s = mean_up_s * (1.0 - p_up) / p_up if p_up < 1.0 else 0.0
        self.error_p = float(error_p)
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.name = name
        self.is_up = True
        self.window_end = float("inf")  # end of the current sojourn
        self.up_seconds = 0.0
        self._last_transition = 0.0
        self.counters = LinkCounters()

    def serialization(self, nbytes: int) -> float:
        return 8.0 * nbytes / self.bitrate

    def start(self, clock: SimClock) -> Optional[SimEvent]:
        """Draw the first sojourn and schedule the first transition."""
        self._last_transition = clock.now
        if self.p_up >= 1.0:
            self.window_end = float("inf")
            return None
        sojourn = self.rng.exponential(self.mean_up_s)
        self.window_end = clock.now + sojourn
        return clock.schedule(self.window_end, EventKind.LINK_STATE_CHANGE, self)


def nvis_step(clock: SimClock, link: NvisLink) -> Optional[SimEvent]:
    """Toggle the link state and schedule the next state-change event."""
    now = clock.now
    if link.is_up:
        link.up_seconds += now - link._last_transition
    link._last_transition = now
    link.is_up = not link.is_up
    mean = link.mean_up_s if link.is_up else link.mean_down_s
    if mean <= 0.0:
        link.window_end = float("inf")
        return None
    sojourn = link.rng.exponential(mean)
    link.window_end = now + sojourn
    return clock.schedule(link.window_end, EventKind.LINK_STATE_CHANGE, link)


def nvis_up_fraction(link: NvisLink, now: float, since: float = 0.0) -> float:
    """Observed UP fraction over [since, now]."""
    up = link.up_seconds
    if link.is_up:
        up += now - link._last_transition
    return up / (now - since) if now > since else 1.0


@dataclass
class Bundle:
    origin_time: float
    nbytes: int
    payload: object = None


class DtnBuffer:
    """Store-and-forward buffer in front of an intermittent backbone link.

    Bundles flush FIFO and only while the link is UP; when stored bytes
    would exceed capacity the oldest bundle is dropped, keeping the
    freshest telemetry.
    """

    def __init__(self, link: NvisLink, capacity_bytes: int = 524288,
                 on_deliver: Optional[Callable[[Bundle, float], None]] = None):
        self.link = link
        self.capacity_bytes = int(capacity_bytes)
        self.queue: list[Bundle] = []
        self.stored_bytes = 0
        self.tx_free_at = 0.0
        self.dropped_overflow = 0
        self.on_deliver = on_deliver
        self._head = 0  # pop index; queue compacted lazily

    def __len__(self) -> int:
        return len(self.queue) - self._head

    def _pop(self) -> Bundle:
        bundle = self.queue[self._head]
        self._head += 1
        self.stored_bytes -= bundle.nbytes
        if self._head > 4096:
            del self.queue[: self._head]
            self._head = 0
        return bundle

    def store(self, clock: SimClock, bundle: Bundle) -> None:
        dtn_store(clock, self, bundle)

    def flush(self, clock: SimClock) -> int:
        return dtn_flush_on_up(clock, self)


def dtn_store(clock: SimClock, buffer: DtnBuffer, bundle: Bundle) -> None:
    """Queue a bundle, dropping the oldest stored ones if it does not fit."""
    if bundle.nbytes > buffer.capacity_bytes:
        raise ValueError("bundle larger than the whole buffer")
    while buffer.stored_bytes + bundle.nbytes > buffer.capacity_bytes and len(buffer):
        buffer._pop()
        buffer.dropped_overflow += 1
        buffer.link.counters.sent += 1
        buffer.link.counters.dropped_congestion += 1
    buffer.queue.append(bundle)
    buffer.stored_bytes += bundle.nbytes
    dtn_flush_on_up(clock, buffer)


def dtn_flush_on_up(clock: SimClock, buffer: DtnBuffer) -> int:
    """Transmit stored bundles FIFO while the link is UP; returns releases.

    A bundle whose serialization would cross the end of the current UP
    window stays stored and is retried at the next UP transition.
    """
    link = buffer.link
    released = 0
    if not link.is_up:
        return 0
    while len(buffer):
        head = buffer.queue[buffer._head]
        start = max(clock.now, buffer.tx_free_at)
        end = start + link.serialization(head.nbytes)
        if end > link.window_end:
            break
        buffer._pop()
        buffer.tx_free_at = end
        link.counters.sent += 1
        if link.error_p > 0.0 and link.rng.random() < link.error_p:
            link.counters.dropped_channel += 1
            continue
        link.counters.delivered += 1
        released += 1
        clock.schedule(end, EventKind.FRAME_ARRIVAL, (True, None, head))
        if buffer.on_deliver is not None:
            buffer.on_deliver(head, end)
    return released
