"""One deterministic end-to-end telemetry run.

Spots produce one transaction per reading period: their redundant
sensors sense the ground state (possibly faulting), reading frames ride
the cluster's shared LoRa medium, the concentrator applies the operation
mode (trust filtering, voting rounds, entangled-coin rounds, or plain
primary-sensor forwarding) and forwards the decided value over the
store-and-forward backbone.  A transaction succeeds when the control
center receives the correct value within the deadline.

Event granularity: one event per transaction, per consensus round, per
probe and per backbone state change; frame-level outcomes inside a burst
are computed arithmetically by the link models with identical queue
semantics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .engine import (
    Bundle,
    DtnBuffer,
    EventKind,
    LoraLink,
    NvisLink,
    SimClock,
    dtn_flush_on_up,
    dtn_store,
    nvis_step,
    nvis_up_fraction,
    reserve_bandwidth,
)
from .qcore import DecayRates
from .qlink import EntanglementAttempt, QuantumNetwork, establish_session
from .rng import substream
from .scenario import ConfigError, ScenarioConfig
from .trustnet import (
    ByzantineProfile,
    ConsensusGroup,
    EntangledCoinRounds,
    FaultKind,
    Reading,
    SessionTemplate,
    TrustLedger,
    VoteRounds,
    sense,
    tolerated_faults,
)

YEAR_S = 365.25 * 86400.0


@dataclass
class RunLog:
    """Aggregated event log of one run; ratios are computed by the KPI layer."""

    spots: int
    redundancy: int
    mode: str
    p_b0: float
    seed: int
    duration_days: float
    warmup_days: float
    transactions: int = 0
    successes: int = 0
    sense_attempts: int = 0
    sense_values: int = 0
    sense_faulty: int = 0
    frames_sent: int = 0
    frames_delivered: int = 0
    frames_dropped_congestion: int = 0
    frames_dropped_channel: int = 0
    dtn_overflow: int = 0
    agreements: int = 0
    agreements_achieved: int = 0
    vote_messages: int = 0
    announce_messages: int = 0
    control_messages: int = 0
    bell_pairs: int = 0
    quantum_rounds: int = 0
    nvis_up_fraction: float = 1.0
    per_sensor_frames: dict = field(default_factory=dict)
    trust_series: list = field(default_factory=list)

    @property
    def tolerated_fraction(self) -> float:
        return tolerated_faults(self.redundancy) / self.redundancy


@dataclass
class _Cluster:
    index: int
    lora: LoraLink
    nvis: NvisLink
    dtn: DtnBuffer


@dataclass
class _Spot:
    index: int
    cluster: _Cluster
    profiles: list
    rngs: list
    ledger: TrustLedger | None = None
    rounds_rng: object = None
    excluded_pairs: frozenset = frozenset()


def _ground_truth(t: float) -> Reading:
    return Reading(frozen=True, temperature=-8.0 + 5.0 * math.sin(2 * math.pi * t / YEAR_S))


def build_session_template(cfg: ScenarioConfig) -> SessionTemplate:
    """Cost of one sensor-to-sensor session on a spot's star-shaped plane.

    All member pairs route through the concentrator hub, so one template
    covers every pair; the round-trip budget is how long the control
    exchange may take before decoherence drops the pair below target.
    """
    q = cfg.quantum
    rates = DecayRates(q.gamma_x, q.gamma_y, q.gamma_z)
    net = QuantumNetwork(f_target=q.f_target, rates=rates,
                         max_purify_rounds=q.max_purify_rounds,
                         control_frame_bytes=q.control_frame_bytes)
    att = EntanglementAttempt("spot-link", q.p_ent, q.attempt_period_s, q.f0)
    for u, v in (("a", "hub"), ("hub", "a"), ("b", "hub"), ("hub", "b")):
        net.add_link(u, v, att)
    session = establish_session(net, "a", "b")
    transverse = q.gamma_y + q.gamma_z
    if transverse > 0.0:
        budget = math.log((session.end_fidelity - 0.5) / (q.f_target - 0.5)) \
            / (2.0 * transverse)
    else:
        budget = None
    return SessionTemplate(pairs=session.pairs_consumed,
                           messages=session.classical_control_messages,
                           frame_bytes=q.control_frame_bytes,
                           rtt_budget_s=budget)


class TelemetryRun:
    """Builds the network from a scenario config and runs it to completion."""

    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        self.mode = cfg.operation_mode
        self.clock = SimClock()
        self.log = RunLog(spots=cfg.spots, redundancy=cfg.redundancy, mode=cfg.mode,
                          p_b0=cfg.p_b0, seed=cfg.seed,
                          duration_days=cfg.duration_days, warmup_days=cfg.warmup_days)
        self._frame_snapshot = (0, 0, 0, 0, 0)
        self.clusters = [self._build_cluster(c) for c in range(cfg.concentrators)]
        self.session_template = build_session_template(cfg) if self.mode.uses_quantum else None
        if self.mode.uses_quantum:
            self._reserve_control_plane()
        self.spots = [self._build_spot(s) for s in range(cfg.spots)]
        self.clock.on(EventKind.SENSOR_READING, self._on_reading)
        self.clock.on(EventKind.CONSENSUS_ROUND, self._on_consensus)
        self.clock.on(EventKind.TRUST_UPDATE, self._on_probe)
        self.clock.on(EventKind.LINK_STATE_CHANGE, self._on_link_change)
        self.clock.on(EventKind.METRIC_SAMPLE, self._on_warmup_snapshot)

    # -- construction -------------------------------------------------

    def _build_cluster(self, index: int) -> _Cluster:
        cfg = self.cfg
        lora = LoraLink(bitrate=cfg.lora.bitrate_bps, error_p=cfg.lora.error_p,
                        queue_bytes=cfg.lora.queue_bytes, duty_cycle=cfg.lora.duty_cycle,
                        rng=substream(cfg.seed, "lora", index), name=f"lora{index}")
        nvis = NvisLink(bitrate=cfg.nvis.bitrate_bps, p_up=cfg.nvis.p_up,
                        mean_up_s=cfg.nvis.mean_up_s, error_p=cfg.nvis.error_p,
                        rng=substream(cfg.seed, "nvis", index), name=f"nvis{index}")
        dtn = DtnBuffer(nvis, capacity_bytes=cfg.dtn.capacity_bytes,
                        on_deliver=self._on_backbone_delivery)
        return _Cluster(index, lora, nvis, dtn)

    def _cluster_spot_count(self, cluster_index: int) -> int:
        base = self.cfg.spots // self.cfg.concentrators
        extra = self.cfg.spots % self.cfg.concentrators
        return base + (1 if cluster_index < extra else 0)

    def _reserve_control_plane(self) -> None:
        cfg = self.cfg
        n = cfg.redundancy
        template = self.session_template
        sessions_per_tx = n * (n - 1) // 2 * cfg.consensus.pairs_per_round
        mean_rounds = 1.0 / cfg.consensus.quantum_round_success_p
        bytes_per_tx = sessions_per_tx * template.messages * template.frame_bytes * mean_rounds
        for cluster in self.clusters:
            spots_here = self._cluster_spot_count(cluster.index)
            declared = 1.25 * spots_here * bytes_per_tx * 8.0 / cfg.reading_period_s
            ceiling = cfg.quantum.reserved_fraction * cluster.lora.budget_rate
            if declared > ceiling:
                raise ConfigError(
                    f"quantum control plane needs {declared:.1f} bps on cluster "
                    f"{cluster.index} but only {ceiling:.1f} bps may be reserved")
            admission = reserve_bandwidth(cluster.lora, "quantum-control", declared)
            if not admission.admitted:
                raise ConfigError(
                    f"quantum control plane rejected on cluster {cluster.index}: "
                    f"residual {admission.residual:.1f} bps")

    def _build_spot(self, index: int) -> _Spot:
        cfg = self.cfg
        cluster = self.clusters[index % cfg.concentrators]
        profiles = []
        override = cfg.fault_override
        for i in range(cfg.redundancy):
            if override is not None and override.spot == index and override.sensor == i:
                profiles.append(ByzantineProfile(override.p_b0,
                                                 FaultKind(override.fault_kind)))
            else:
                profiles.append(ByzantineProfile(cfg.p_b0, cfg.fault))
        rngs = [substream(cfg.seed, "sense", index, i) for i in range(cfg.redundancy)]
        spot = _Spot(index=index, cluster=cluster, profiles=profiles, rngs=rngs)
        if self.mode.uses_social:
            spot.ledger = TrustLedger(list(range(cfg.redundancy)),
                                      weight=cfg.trust.weight,
                                      theta_ost=cfg.trust.theta_ost,
                                      hysteresis=cfg.trust.hysteresis,
                                      probe_period_s=cfg.trust.probe_period_s)
            excluded = set()
            if cfg.trust.exclude_observer is not None and override is not None \
                    and override.spot == index:
                d, bad = cfg.trust.exclude_observer, override.sensor
                excluded = {(d, bad), (bad, d)}
            spot.excluded_pairs = frozenset(excluded)
        if self.mode.uses_quantum:
            spot.rounds_rng = substream(cfg.seed, "qrounds", index)
        return spot

    # -- event handlers -----------------------------------------------

    def _on_link_change(self, event) -> None:
        link = event.payload
        nvis_step(self.clock, link)
        for cluster in self.clusters:
            if cluster.nvis is link:
                dtn_flush_on_up(self.clock, cluster.dtn)
                break

    def _on_warmup_snapshot(self, event) -> None:
        self._frame_snapshot = self._frame_totals()

    def _frame_totals(self) -> tuple:
        sent = delivered = congestion = channel = overflow = 0
        for cluster in self.clusters:
            for counters in (cluster.lora.counters, cluster.nvis.counters):
                sent += counters.sent
                delivered += counters.delivered
                congestion += counters.dropped_congestion
                channel += counters.dropped_channel
            overflow += cluster.dtn.dropped_overflow
        return sent, delivered, congestion, channel, overflow

    def _on_backbone_delivery(self, bundle: Bundle, delivered_at: float) -> None:
        t0, correct = bundle.payload
        if t0 >= self.cfg.warmup_s and correct \
                and delivered_at - t0 <= self.cfg.deadline_s:
            self.log.successes += 1

    def _on_reading(self, event) -> None:
        spot = self.spots[event.payload]
        cfg = self.cfg
        t0 = self.clock.now
        in_window = t0 >= cfg.warmup_s
        if in_window:
            self.log.transactions += 1
        truth = _ground_truth(t0)
        active = spot.ledger.active_members() if spot.ledger is not None \
            else list(range(cfg.redundancy))
        reports = {}
        for i in active:
            r = sense(spot.profiles[i], truth, spot.rngs[i])
            reports[i] = r
            if in_window:
                self.log.sense_attempts += 1
                if r is not None:
                    self.log.sense_values += 1
                    if r.frozen is not truth.frozen:
                        self.log.sense_faulty += 1
        alive = [i for i in active if reports[i] is not None]
        arrived = {}
        if alive:
            delivered, times = spot.cluster.lora.offer_burst(
                t0, len(alive), cfg.reading_bytes)
            horizon = t0 + cfg.consensus.collect_timeout_s
            for i, d, tm in zip(alive, delivered, times):
                key = (spot.index, i)
                self.log.per_sensor_frames[key] = self.log.per_sensor_frames.get(key, 0) + 1
                if d and tm <= horizon:
                    arrived[i] = tm

        if self.mode.uses_consensus and len(active) >= 4:
            self._start_agreement(spot, t0, truth, active, reports, arrived)
        elif self.mode.uses_social:
            self._social_decide(spot, t0, truth, active, reports, arrived)
        else:
            self._standard_decide(spot, t0, truth, reports, arrived)

        t_next = t0 + cfg.reading_period_s
        if t_next < cfg.duration_s:
            self.clock.schedule(t_next, EventKind.SENSOR_READING, spot.index)

    def _standard_decide(self, spot, t0, truth, reports, arrived) -> None:
        if 0 in arrived:
            value = reports[0]
            self._schedule_send(spot, t0, truth, value, arrived[0])

    def _social_pick(self, spot, arrived_reports: dict):
        if not arrived_reports:
            return None
        ledger = spot.ledger
        standings = ledger._standings()
        best = max(arrived_reports,
                   key=lambda i: (ledger.aggregate(i, standings), -i))
        return arrived_reports[best]

    def _social_decide(self, spot, t0, truth, active, reports, arrived) -> None:
        t_dec = t0 + self.cfg.consensus.collect_timeout_s
        values = {i: reports[i] for i in arrived}
        spot.ledger.record_exchange(values, participants=active,
                                    excluded_pairs=spot.excluded_pairs)
        self._sample_trust(spot, t_dec)
        value = self._social_pick(spot, values)
        if value is not None:
            self._schedule_send(spot, t0, truth, value, t_dec)

    def _start_agreement(self, spot, t0, truth, active, reports, arrived) -> None:
        cfg = self.cfg
        group = ConsensusGroup(members=active,
                               protocol="quantum" if self.mode.uses_quantum else "classical")
        if self.mode.uses_quantum:
            machine = EntangledCoinRounds(
                group, reports, cfg.consensus.quantum_frame_bytes,
                cfg.consensus.round_timeout_s, cfg.consensus.quantum_round_success_p,
                cfg.consensus.pairs_per_round, spot.rounds_rng)
        else:
            machine = VoteRounds(group, reports, cfg.consensus.vote_bytes,
                                 cfg.consensus.round_timeout_s)
        for r in range(machine.total_rounds):
            self.clock.schedule(t0 + r * cfg.consensus.round_timeout_s,
                                EventKind.CONSENSUS_ROUND, ("round", spot, machine))
        t_dec = t0 + machine.total_rounds * cfg.consensus.round_timeout_s
        self.clock.schedule(t_dec, EventKind.CONSENSUS_ROUND,
                            ("decide", spot, machine, t0, truth, arrived, reports))

    def _on_consensus(self, event) -> None:
        tag = event.payload[0]
        if tag == "round":
            _, spot, machine = event.payload
            if isinstance(machine, EntangledCoinRounds):
                if machine.failure is None:
                    machine.offer_round(spot.cluster.lora, self.clock.now,
                                        session_cost=self.session_template)
            else:
                machine.offer_round(spot.cluster.lora, self.clock.now)
            return
        if tag == "send":
            _, spot, t0, correct = event.payload
            dtn_store(self.clock, spot.cluster.dtn,
                      Bundle(origin_time=t0, nbytes=self.cfg.dtn.bundle_bytes,
                             payload=(t0, correct)))
            return
        _, spot, machine, t0, truth, arrived, reports = event.payload
        now = self.clock.now
        if isinstance(machine, EntangledCoinRounds):
            result = machine.result(spot.cluster.lora, now)
            self._account_quantum(t0, result)
        else:
            result = machine.result(now)
            if t0 >= self.cfg.warmup_s:
                self.log.vote_messages += result.messages_sent
        if t0 >= self.cfg.warmup_s:
            self.log.agreements += 1
            if result.achieved:
                self.log.agreements_achieved += 1
        value = result.value
        if spot.ledger is not None:
            spot.ledger.record_exchange(result.votes, participants=machine.group.members,
                                        excluded_pairs=spot.excluded_pairs)
            self._sample_trust(spot, now)
            if value is None:
                value = self._social_pick(spot, {i: reports[i] for i in arrived})
        if value is not None:
            dtn_store(self.clock, spot.cluster.dtn,
                      Bundle(origin_time=t0, nbytes=self.cfg.dtn.bundle_bytes,
                             payload=(t0, value.frozen is truth.frozen)))

    def _account_quantum(self, t0, result) -> None:
        if t0 < self.cfg.warmup_s:
            return
        self.log.announce_messages += result.messages_sent
        self.log.control_messages += result.control_messages
        self.log.bell_pairs += result.pairs_consumed
        self.log.quantum_rounds += result.rounds

    def _schedule_send(self, spot, t0, truth, value, t_dec) -> None:
        correct = value.frozen is truth.frozen
        self.clock.schedule(t_dec, EventKind.CONSENSUS_ROUND,
                            ("send", spot, t0, correct))

    def _on_probe(self, event) -> None:
        spot = self.spots[event.payload]
        cfg = self.cfg
        ledger = spot.ledger
        now = self.clock.now
        if ledger.ostracized:
            truth = _ground_truth(now)
            ostracized = sorted(ledger.ostracized)
            delivered, _ = spot.cluster.lora.offer_burst(
                now, 2 * len(ostracized), cfg.reading_bytes)
            values = {}
            participants = ledger.active_members() + ostracized
            for i in participants:
                values[i] = sense(spot.profiles[i], truth, spot.rngs[i])
            for k, i in enumerate(ostracized):
                if not delivered[2 * k + 1]:  # probe response lost
                    values[i] = None
            ledger.record_exchange(values, participants=participants,
                                   excluded_pairs=spot.excluded_pairs)
            self._sample_trust(spot, now)
        t_next = now + cfg.trust.probe_period_s
        if t_next < cfg.duration_s:
            self.clock.schedule(t_next, EventKind.TRUST_UPDATE, spot.index)

    def _sample_trust(self, spot, t: float) -> None:
        if not self.cfg.trust.series:
            return
        ledger = spot.ledger
        standings = ledger._standings()
        for m in ledger.members:
            self.log.trust_series.append(
                (t / 86400.0, spot.index, m, ledger.aggregate(m, standings)))

    # -- run ------------------------------------------------------------

    def run(self) -> RunLog:
        cfg = self.cfg
        for cluster in self.clusters:
            cluster.nvis.start(self.clock)
        for spot in self.spots:
            offset = cfg.reading_period_s * (spot.index + 1) / (cfg.spots + 1)
            self.clock.schedule(offset, EventKind.SENSOR_READING, spot.index)
            if self.mode.uses_social:
                self.clock.schedule(offset + cfg.trust.probe_period_s,
                                    EventKind.TRUST_UPDATE, spot.index)
        self.clock.schedule(cfg.warmup_s, EventKind.METRIC_SAMPLE, "warmup")
        self.clock.run_until(cfg.duration_s + cfg.deadline_s + 7200.0)
        totals = self._frame_totals()
        base = self._frame_snapshot
        (self.log.frames_sent, self.log.frames_delivered,
         self.log.frames_dropped_congestion, self.log.frames_dropped_channel,
         self.log.dtn_overflow) = tuple(t - b for t, b in zip(totals, base))
        self.log.nvis_up_fraction = sum(
            nvis_up_fraction(c.nvis, self.clock.now) for c in self.clusters) \
            / len(self.clusters)
        return self.log


def run_scenario(cfg: ScenarioConfig) -> RunLog:
    return TelemetryRun(cfg).run()
