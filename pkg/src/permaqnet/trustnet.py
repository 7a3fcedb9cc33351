"""Trustworthiness layers: faults, social trust, and byzantine agreement.

Redundant sensors at a measuring spot can crash or report wrong values.
The social layer keeps a pairwise reputation ledger: peers whose values
disagree mark each other down, so a persistently faulty member drags its
neighbours' scores until it is ostracized, after which the others
recover and only periodic probes include it again.

Two agreement protocols share one decision rule (quorum of delivered
votes, then majority): a synchronous voting protocol running f+1
all-to-all rounds whose message count grows as (f+1)*n*(n-1), and a
constant-expected-round protocol that coordinates through shared
entangled pairs and injects only O(n) classical frames per agreement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from .engine import LoraLink
from .qlink import QuantumNetwork, SessionError, establish_session


class FaultKind(Enum):
    CRASH = "crash"
    SOFT = "soft"


class OperationMode(Enum):
    STANDARD = "standard"
    SOCIAL = "social"
    CONSENSUS = "consensus"
    QUANTUM_CONSENSUS = "quantum-consensus"
    SOCIAL_CONSENSUS = "social-consensus"
    SOCIAL_QUANTUM_CONSENSUS = "social-quantum-consensus"

    @property
    def uses_social(self) -> bool:
        return self in (OperationMode.SOCIAL, OperationMode.SOCIAL_CONSENSUS,
                        OperationMode.SOCIAL_QUANTUM_CONSENSUS)

    @property
    def uses_consensus(self) -> bool:
        return self in (OperationMode.CONSENSUS, OperationMode.QUANTUM_CONSENSUS,
                        OperationMode.SOCIAL_CONSENSUS,
                        OperationMode.SOCIAL_QUANTUM_CONSENSUS)

    @property
    def uses_quantum(self) -> bool:
        return self in (OperationMode.QUANTUM_CONSENSUS,
                        OperationMode.SOCIAL_QUANTUM_CONSENSUS)


@dataclass(frozen=True)
class ByzantineProfile:
    """Per-transaction fault behaviour of one sensor."""

    p_b0: float
    fault_kind: FaultKind = FaultKind.SOFT

    def __post_init__(self):
        if not 0.0 <= self.p_b0 <= 1.0:
            raise ValueError("fault probability must be in [0, 1]")


@dataclass(frozen=True)
class Reading:
    """One permafrost measurement: ground state plus temperature."""

    frozen: bool
    temperature: float


def sense(profile: ByzantineProfile, true_value: Reading,
          rng: np.random.Generator) -> Optional[Reading]:
    """Produce this sensor's stored value; None models a crash."""
    if profile.p_b0 > 0.0 and rng.random() < profile.p_b0:
        if profile.fault_kind is FaultKind.CRASH:
            return None
        return Reading(frozen=not true_value.frozen,
                       temperature=true_value.temperature + 10.0)
    return true_value


def tolerated_faults(n: int) -> int:
    return (n - 1) // 3


@dataclass
class ConsensusGroup:
    """Redundant sensors of one measuring spot."""

    members: list
    protocol: str = "classical"  # or "quantum"

    def __post_init__(self):
        if not 1 <= len(self.members) <= 10:
            raise ValueError("group size must be in 1..10")
        if self.protocol not in ("classical", "quantum"):
            raise ValueError(f"unknown protocol {self.protocol!r}")

    @property
    def f_max(self) -> int:
        return tolerated_faults(len(self.members))


class TrustLedger:
    """Pairwise reputation scores with ostracism and probe recovery.

    Scores move by an exponential moving average toward 1 on agreeing
    transactions and toward 0 otherwise.  A member's visible trust pools
    the opinions of the trusted members plus whoever took part in the
    most recent exchange, each weighted by the observer's own standing:
    a misbehaving member therefore drags its peers down only while it
    still carries weight, peers recover once it is ostracized, and the
    periodic probes that re-admit it for a single exchange leave a small
    bounded ripple.  Rehabilitation needs the aggregate to climb back
    above threshold plus hysteresis.
    """

    def __init__(self, members, weight: float = 0.1, theta_ost: float = 0.5,
                 hysteresis: float = 0.1, probe_period_s: float = 86400.0):
        if not 0.0 < weight < 1.0:
            raise ValueError("weight must be in (0, 1)")
        self.members = list(members)
        self.weight = weight
        self.theta_ost = theta_ost
        self.hysteresis = hysteresis
        self.probe_period_s = probe_period_s
        self.scores = {(i, j): 1.0
                       for i in self.members for j in self.members if i != j}
        self.ostracized: set = set()
        self._last_participants: set = set(self.members)

    def update(self, observer, subject, transaction_ok: bool) -> float:
        w = self.weight
        new = (1.0 - w) * self.scores[(observer, subject)] + (w if transaction_ok else 0.0)
        self.scores[(observer, subject)] = new
        return new

    def standing(self, member) -> float:
        """Plain mean opinion of the trusted observers; weighs opinions."""
        vals = [self.scores[(i, member)] for i in self.members
                if i != member and i not in self.ostracized]
        return sum(vals) / len(vals) if vals else 1.0

    def _standings(self) -> dict:
        return {m: self.standing(m) for m in self.members}

    def aggregate(self, subject, _standings: dict | None = None) -> float:
        """Visible trust: standing-weighted opinions of the relevant observers."""
        standings = self._standings() if _standings is None else _standings
        observers = (set(self.active_members()) | self._last_participants) - {subject}
        num = den = 0.0
        for i in observers:
            w = standings[i]
            num += w * self.scores[(i, subject)]
            den += w
        return num / den if den > 0 else 1.0

    def active_members(self) -> list:
        return [m for m in self.members if m not in self.ostracized]

    def refresh_ostracism(self) -> None:
        scores = self.scores
        ostracized = self.ostracized
        standings = {}
        for m in self.members:
            total = count = 0.0
            for i in self.members:
                if i != m and i not in ostracized:
                    total += scores[(i, m)]
                    count += 1
            standings[m] = total / count if count else 1.0
        observers = set(m for m in self.members if m not in ostracized)
        observers |= self._last_participants
        for m in self.members:
            num = den = 0.0
            for i in observers:
                if i == m:
                    continue
                w = standings[i]
                num += w * scores[(i, m)]
                den += w
            agg = num / den if den > 0 else 1.0
            if m in ostracized:
                if agg > self.theta_ost + self.hysteresis:
                    ostracized.discard(m)
            elif agg < self.theta_ost:
                ostracized.add(m)

    def record_exchange(self, values: dict, participants=None,
                        excluded_pairs: frozenset = frozenset()) -> None:
        """Cross-compare one round of delivered values.

        ``values`` maps member -> Reading for everything that arrived;
        participants lists who took part (defaults to the trusted set).
        Observers that delivered a value judge every other participant:
        agreement on the ground state counts as a good transaction,
        disagreement or a missing value counts against the subject.
        ``excluded_pairs`` suppresses both opinions of a pair, which
        isolates chosen observers from chosen subjects entirely.
        """
        group = self.active_members() if participants is None else list(participants)
        self._last_participants = set(group)
        scores = self.scores
        keep = 1.0 - self.weight
        w = self.weight
        for observer in group:
            mine = values.get(observer)
            if mine is None:
                continue
            for subject in group:
                if subject == observer or (observer, subject) in excluded_pairs:
                    continue
                theirs = values.get(subject)
                ok = theirs is not None and theirs.frozen == mine.frozen
                key = (observer, subject)
                scores[key] = keep * scores[key] + (w if ok else 0.0)
        self.refresh_ostracism()


def update_trust(ledger: TrustLedger, observer, subject, transaction_ok: bool) -> float:
    score = ledger.update(observer, subject, transaction_ok)
    ledger.refresh_ostracism()
    return score


@dataclass(frozen=True)
class SessionTemplate:
    """Precomputed cost of one member-pair session on a spot's quantum plane.

    ``rtt_budget_s`` bounds how long the control exchange may take before
    decoherence drags the pair below the fidelity target.
    """

    pairs: int
    messages: int
    frame_bytes: int = 8
    rtt_budget_s: Optional[float] = None


@dataclass
class AgreementResult:
    value: Optional[Reading]
    achieved: bool
    reason: Optional[str]
    messages_sent: int
    rounds: int
    pairs_consumed: int = 0
    control_messages: int = 0
    decide_time: float = 0.0
    votes: dict = field(default_factory=dict)


def _majority(values: list[Reading]) -> Optional[Reading]:
    frozen_votes = sum(1 for v in values if v.frozen)
    thawed_votes = len(values) - frozen_votes
    if frozen_votes == thawed_votes:
        return None
    frozen = frozen_votes > thawed_votes
    temps = sorted(v.temperature for v in values if v.frozen == frozen)
    return Reading(frozen=frozen, temperature=temps[len(temps) // 2])


class VoteRounds:
    """Synchronous byzantine voting driven round by round.

    Every round, each live member sends its message to the n-1 others
    over the shared medium; a sender counts as heard when a majority of
    its copies arrive within the round window.  The agreement needs
    every round to hear at least n - f_max senders (quorum), and decides
    by majority over the first round's delivered values.
    """

    def __init__(self, group: ConsensusGroup, reports: dict,
                 vote_bytes: int, round_timeout_s: float):
        self.group = group
        self.reports = reports
        self.vote_bytes = vote_bytes
        self.round_timeout_s = round_timeout_s
        self.n = len(group.members)
        self.f_max = group.f_max
        self.total_rounds = self.f_max + 1
        self.live = [m for m in group.members if reports.get(m) is not None]
        self.heard_every_round: set = set(self.live)
        self.first_round_heard: set = set()
        self.messages_sent = 0
        self.rounds_run = 0

    def offer_round(self, link: LoraLink, t: float) -> None:
        """Inject one round of votes as real traffic and tally arrivals.

        A sender is heard when a majority of its copies arrive within the
        round window; all of the round's frames share one burst on the
        medium, attributed to senders in member order.
        """
        self.rounds_run += 1
        copies = self.n - 1
        if not self.live:
            self.heard_every_round = set()
            return
        self.messages_sent += len(self.live) * copies
        delivered, times = link.offer_burst(t, len(self.live) * copies, self.vote_bytes)
        in_time = (delivered & (times <= t + self.round_timeout_s))
        counts = in_time.reshape(len(self.live), copies).sum(axis=1)
        heard = {sender for sender, c in zip(self.live, counts) if 2 * int(c) >= copies}
        if self.rounds_run == 1:
            self.first_round_heard = heard
        self.heard_every_round &= heard

    def result(self, decide_time: float) -> AgreementResult:
        quorum = self.n - self.f_max
        votes = {m: self.reports[m] for m in self.first_round_heard}
        if len(self.heard_every_round) < quorum:
            return AgreementResult(None, False, "no-quorum", self.messages_sent,
                                   self.rounds_run, decide_time=decide_time,
                                   votes=votes)
        agreed = _majority(list(votes.values()))
        if agreed is None:
            return AgreementResult(None, False, "tie", self.messages_sent,
                                   self.rounds_run, decide_time=decide_time,
                                   votes=votes)
        return AgreementResult(agreed, True, None, self.messages_sent,
                               self.rounds_run, decide_time=decide_time,
                               votes=votes)


class EntangledCoinRounds:
    """Constant-expected-round agreement over shared entangled pairs.

    Each round consumes sessions between member pairs (their control
    exchanges ride the reserved flow) and succeeds with a fixed
    probability, so the expected round count does not depend on group
    size.  Values travel as one repeated announcement per member plus a
    final decision broadcast: O(n) classical frames per agreement.
    """

    ANNOUNCE_REPEATS = 2

    def __init__(self, group: ConsensusGroup, reports: dict, frame_bytes: int,
                 round_timeout_s: float, round_success_p: float,
                 pairs_per_round: int, rng: np.random.Generator):
        if len(group.members) < 4:
            raise ValueError("quantum agreement needs at least 4 members")
        if not 0.0 < round_success_p <= 1.0:
            raise ValueError("round success probability must be in (0, 1]")
        self.group = group
        self.reports = reports
        self.frame_bytes = frame_bytes
        self.round_timeout_s = round_timeout_s
        self.pairs_per_round = pairs_per_round
        self.n = len(group.members)
        self.f_max = group.f_max
        self.live = [m for m in group.members if reports.get(m) is not None]
        self.total_rounds = int(rng.geometric(round_success_p))
        self.heard: set = set()
        self.messages_sent = 0
        self.rounds_run = 0
        self.pairs_consumed = 0
        self.control_messages = 0
        self.failure: Optional[str] = None

    def offer_round(self, link: LoraLink, t: float,
                    plane: Optional[QuantumNetwork] = None,
                    session_cost: Optional[SessionTemplate] = None) -> None:
        """Run one round: consume pair sessions, announce values once."""
        self.rounds_run += 1
        n_pairs = self.n * (self.n - 1) // 2 * self.pairs_per_round
        if session_cost is not None:
            self.pairs_consumed += n_pairs * session_cost.pairs
            self.control_messages += n_pairs * session_cost.messages
            burst = n_pairs * session_cost.messages
            if burst:
                done = link.offer_burst_last_time(t, burst, session_cost.frame_bytes,
                                                  reserved=True)
                if session_cost.rtt_budget_s is not None \
                        and done - t > session_cost.rtt_budget_s:
                    self.failure = "quantum-plane: control latency exceeds decoherence budget"
                    return
        elif plane is not None:
            members = self.group.members
            try:
                for i, a in enumerate(members):
                    for b in members[i + 1:]:
                        for _ in range(self.pairs_per_round):
                            session = establish_session(net=plane, src=a, dst=b)
                            self.pairs_consumed += session.pairs_consumed
                            self.control_messages += session.classical_control_messages
                            link.offer_burst(t, session.classical_control_messages,
                                             plane.control_frame_bytes, reserved=True)
            except SessionError as exc:
                self.failure = f"quantum-plane: {exc}"
                return
        if self.rounds_run == 1 and self.live:
            reps = self.ANNOUNCE_REPEATS
            self.messages_sent += len(self.live) * reps
            delivered, times = link.offer_burst(
                t, len(self.live) * reps, self.frame_bytes)
            in_time = (delivered & (times <= t + self.round_timeout_s))
            counts = in_time.reshape(len(self.live), reps).sum(axis=1)
            self.heard = {sender for sender, c in zip(self.live, counts) if c > 0}

    def result(self, link: LoraLink, decide_time: float) -> AgreementResult:
        votes = {m: self.reports[m] for m in self.heard}
        if self.failure is not None:
            return AgreementResult(None, False, self.failure, self.messages_sent,
                                   self.rounds_run, self.pairs_consumed,
                                   self.control_messages, decide_time, votes)
        quorum = self.n - self.f_max
        if len(self.heard) < quorum:
            return AgreementResult(None, False, "no-quorum", self.messages_sent,
                                   self.rounds_run, self.pairs_consumed,
                                   self.control_messages, decide_time, votes)
        agreed = _majority(list(votes.values()))
        if agreed is None:
            return AgreementResult(None, False, "tie", self.messages_sent,
                                   self.rounds_run, self.pairs_consumed,
                                   self.control_messages, decide_time, votes)
        # decision broadcast
        self.messages_sent += 1
        link.offer_burst(decide_time, 1, self.frame_bytes)
        return AgreementResult(agreed, True, None, self.messages_sent,
                               self.rounds_run, self.pairs_consumed,
                               self.control_messages, decide_time, votes)


def classical_agreement(group: ConsensusGroup, reports: dict, link: LoraLink,
                        t0: float = 0.0, vote_bytes: int = 220,
                        round_timeout_s: float = 1800.0) -> AgreementResult:
    """Run the full voting protocol with fixed round boundaries."""
    machine = VoteRounds(group, reports, vote_bytes, round_timeout_s)
    t = t0
    for _ in range(machine.total_rounds):
        machine.offer_round(link, t)
        t += round_timeout_s
    return machine.result(t)


def quantum_agreement(group: ConsensusGroup, reports: dict, link: LoraLink,
                      rng: np.random.Generator,
                      plane: Optional[QuantumNetwork] = None,
                      session_cost: Optional[SessionTemplate] = None,
                      t0: float = 0.0, frame_bytes: int = 24,
                      round_timeout_s: float = 1800.0,
                      round_success_p: float = 0.75,
                      pairs_per_round: int = 1) -> AgreementResult:
    """Run the entangled-coin protocol with fixed round boundaries."""
    machine = EntangledCoinRounds(group, reports, frame_bytes, round_timeout_s,
                                  round_success_p, pairs_per_round, rng)
    t = t0
    for _ in range(machine.total_rounds):
        machine.offer_round(link, t, plane, session_cost=session_cost)
        if machine.failure:
            break
        t += round_timeout_s
    return machine.result(link, t)
