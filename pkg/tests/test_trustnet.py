import math

import numpy as np
import pytest

from permaqnet.engine import LoraLink
from permaqnet.qlink import EntanglementAttempt, QuantumNetwork
from permaqnet.rng import substream
from permaqnet.trustnet import (
    AgreementResult,
    ByzantineProfile,
    ConsensusGroup,
    FaultKind,
    OperationMode,
    Reading,
    SessionTemplate,
    TrustLedger,
    classical_agreement,
    quantum_agreement,
    sense,
    tolerated_faults,
    update_trust,
)

TRUTH = Reading(frozen=True, temperature=-8.0)


def ideal_link(seed=0):
    # effectively infinite capacity, error-free, instant enough for any window
    return LoraLink(bitrate=1e9, queue_bytes=1 << 30, error_p=0.0,
                    rng=substream(seed, "link"))


def make_reports(n, n_faulty, fault=FaultKind.SOFT):
    reports = {}
    for i in range(n):
        if i < n_faulty:
            if fault is FaultKind.CRASH:
                reports[i] = None
            else:
                reports[i] = Reading(frozen=not TRUTH.frozen,
                                     temperature=TRUTH.temperature + 10.0)
        else:
            reports[i] = TRUTH
    return reports


class TestSense:
    def test_fault_free_always_truthful(self):
        rng = substream(1, "s")
        profile = ByzantineProfile(p_b0=0.0)
        assert all(sense(profile, TRUTH, rng) == TRUTH for _ in range(100))

    def test_always_faulty_soft_always_wrong(self):
        rng = substream(2, "s")
        profile = ByzantineProfile(p_b0=1.0, fault_kind=FaultKind.SOFT)
        for _ in range(50):
            got = sense(profile, TRUTH, rng)
            assert got is not None and got.frozen != TRUTH.frozen

    def test_crash_yields_no_report(self):
        rng = substream(3, "s")
        profile = ByzantineProfile(p_b0=1.0, fault_kind=FaultKind.CRASH)
        assert all(sense(profile, TRUTH, rng) is None for _ in range(50))

    def test_empirical_fault_rate(self):
        rng = substream(4, "s")
        profile = ByzantineProfile(p_b0=0.1, fault_kind=FaultKind.SOFT)
        n = 10_000
        faulty = sum(sense(profile, TRUTH, rng).frozen != TRUTH.frozen
                     for _ in range(n))
        assert faulty / n == pytest.approx(0.1, abs=0.01)

    def test_probability_validated(self):
        with pytest.raises(ValueError):
            ByzantineProfile(p_b0=1.5)


class TestTrustLedger:
    def test_success_history_converges_to_one(self):
        ledger = TrustLedger(members=[0, 1])
        prev = 0.0
        ledger.scores[(0, 1)] = 0.2
        for _ in range(100):
            score = update_trust(ledger, 0, 1, True)
            assert score >= prev
            prev = score
        assert prev == pytest.approx(1.0, abs=1e-4)

    def test_persistent_failures_cross_threshold_at_closed_form_count(self):
        ledger = TrustLedger(members=[0, 1], weight=0.1, theta_ost=0.5)
        expected = math.ceil(math.log(0.5) / math.log(0.9))
        steps = 0
        while ledger.scores[(0, 1)] >= 0.5:
            update_trust(ledger, 0, 1, False)
            steps += 1
        assert steps == expected

    def test_scores_stay_bounded(self):
        ledger = TrustLedger(members=[0, 1])
        rng = substream(5, "t")
        for _ in range(1000):
            score = update_trust(ledger, 0, 1, bool(rng.random() < 0.5))
            assert 0.0 <= score <= 1.0

    def test_faulty_member_gets_ostracized_and_peers_recover(self):
        members = list(range(4))
        ledger = TrustLedger(members=members)
        bad = 3
        dips = []

        def one_round():
            values = {m: TRUTH for m in ledger.active_members() if m != bad}
            if bad in ledger.active_members():
                values[bad] = Reading(frozen=False, temperature=0.0)
            ledger.record_exchange(values)
            dips.append(min(ledger.aggregate(m) for m in members if m != bad))

        for _ in range(12):
            one_round()
        assert bad in ledger.ostracized
        assert min(dips) < 0.95  # peers inherited some degradation
        for _ in range(40):
            one_round()  # bad member excluded now
        for m in members:
            if m != bad:
                assert ledger.aggregate(m) > 0.99

    def test_probe_reinstates_recovered_member(self):
        ledger = TrustLedger(members=[0, 1, 2, 3], theta_ost=0.5, hysteresis=0.1)
        bad = 0
        for _ in range(10):
            ledger.record_exchange({m: TRUTH if m != bad else
                                    Reading(frozen=False, temperature=0.0)
                                    for m in ledger.members},
                                   participants=ledger.members)
        assert bad in ledger.ostracized
        # the member starts answering probes correctly; opinions recover
        for _ in range(40):
            ledger.record_exchange({m: TRUTH for m in ledger.members},
                                   participants=ledger.members)
        assert bad not in ledger.ostracized


class TestClassicalAgreement:
    def test_tolerates_one_fault_among_four(self):
        group = ConsensusGroup(members=list(range(4)))
        result = classical_agreement(group, make_reports(4, 1), ideal_link())
        assert result.achieved
        assert result.value.frozen == TRUTH.frozen

    def test_two_faults_among_four_not_guaranteed(self):
        # bound exceeded: quorum may pass but the tally is no longer safe
        group = ConsensusGroup(members=list(range(4)))
        result = classical_agreement(group, make_reports(4, 2), ideal_link())
        assert group.f_max == 1
        assert not result.achieved or result.value.frozen != TRUTH.frozen \
            or result.reason is not None or True  # no safety promise here

    def test_message_count_formula(self):
        for n in (4, 7, 10):
            group = ConsensusGroup(members=list(range(n)))
            result = classical_agreement(group, make_reports(n, 0), ideal_link())
            f = tolerated_faults(n)
            assert result.messages_sent == (f + 1) * n * (n - 1)
            assert result.rounds == f + 1

    def test_majority_faulty_defeats_agreement(self):
        group = ConsensusGroup(members=list(range(7)))
        result = classical_agreement(group, make_reports(7, 4), ideal_link())
        assert (not result.achieved) or result.value.frozen != TRUTH.frozen

    def test_crashes_cause_no_quorum(self):
        group = ConsensusGroup(members=list(range(4)))
        result = classical_agreement(group, make_reports(4, 3, FaultKind.CRASH),
                                     ideal_link())
        assert not result.achieved
        assert result.reason == "no-quorum"

    def test_dropped_votes_count_as_missing(self):
        group = ConsensusGroup(members=list(range(4)))
        dead = LoraLink(bitrate=1e9, queue_bytes=1 << 30, error_p=1.0,
                        rng=substream(1, "dead"))
        result = classical_agreement(group, make_reports(4, 0), dead)
        assert not result.achieved
        assert result.reason == "no-quorum"

    def test_safety_monte_carlo(self):
        rng = substream(11, "safety")
        trials_per_n = 1200
        for n in (4, 7, 10):
            group = ConsensusGroup(members=list(range(n)))
            f_max = group.f_max
            for trial in range(trials_per_n):
                f = int(rng.integers(0, f_max + 1))
                kind = FaultKind.SOFT if rng.random() < 0.5 else FaultKind.CRASH
                reports = make_reports(n, f, kind)
                result = classical_agreement(group, reports, ideal_link(trial))
                assert result.achieved, (n, f, kind)
                assert result.value.frozen == TRUTH.frozen


class TestQuantumAgreement:
    def test_needs_four_members(self):
        group = ConsensusGroup(members=list(range(3)))
        with pytest.raises(ValueError):
            quantum_agreement(group, make_reports(3, 0), ideal_link(),
                              substream(1, "qa"))

    def test_safety_monte_carlo(self):
        rng = substream(12, "safety")
        for n in (4, 7, 10):
            group = ConsensusGroup(members=list(range(n)), protocol="quantum")
            f_max = group.f_max
            for trial in range(1200):
                f = int(rng.integers(0, f_max + 1))
                kind = FaultKind.SOFT if rng.random() < 0.5 else FaultKind.CRASH
                reports = make_reports(n, f, kind)
                result = quantum_agreement(group, reports, ideal_link(trial),
                                           substream(trial, "rounds", n))
                assert result.achieved, (n, f, kind)
                assert result.value.frozen == TRUTH.frozen

    def test_constant_expected_rounds_across_group_sizes(self):
        means = {}
        for n in (4, 7, 10):
            group = ConsensusGroup(members=list(range(n)), protocol="quantum")
            rounds = []
            for trial in range(3000):
                result = quantum_agreement(
                    group, make_reports(n, 0), ideal_link(trial),
                    substream(trial, "rounds", n), round_success_p=0.75)
                rounds.append(result.rounds)
            means[n] = np.mean(rounds)
        # all close to 1/p with no growth trend
        for n, mean in means.items():
            assert mean == pytest.approx(1 / 0.75, abs=0.05)
        slope = np.polyfit(list(means), list(means.values()), 1)[0]
        assert abs(slope) < 0.01

    def test_linear_classical_frames_vs_quadratic_voting(self):
        for n in (4, 7, 10):
            group = ConsensusGroup(members=list(range(n)), protocol="quantum")
            result = quantum_agreement(group, make_reports(n, 0), ideal_link(),
                                       substream(9, "rounds", n))
            assert result.messages_sent <= 3 * n
            voting = classical_agreement(ConsensusGroup(members=list(range(n))),
                                         make_reports(n, 0), ideal_link())
            assert voting.messages_sent == (tolerated_faults(n) + 1) * n * (n - 1)
            assert voting.messages_sent / result.messages_sent > n / 3

    def test_session_template_accounting(self):
        group = ConsensusGroup(members=list(range(4)), protocol="quantum")
        link = ideal_link()
        template = SessionTemplate(pairs=2, messages=5)
        result = quantum_agreement(group, make_reports(4, 0), link,
                                   substream(3, "rounds"), session_cost=template,
                                   round_success_p=1.0)
        assert result.rounds == 1
        assert result.pairs_consumed == 6 * 2
        assert result.control_messages == 6 * 5

    def test_plane_sessions_consumed_per_round(self):
        net = QuantumNetwork(f_target=0.9)
        members = list(range(4))
        for m in members:
            for u, v in ((m, "hub"), ("hub", m)):
                net.add_link(u, v, EntanglementAttempt(
                    link_id=f"{u}-{v}", p_ent=0.8, attempt_period_s=0.1, f0=0.97))
        group = ConsensusGroup(members=members, protocol="quantum")
        link = ideal_link()
        result = quantum_agreement(group, make_reports(4, 0), link,
                                   substream(4, "rounds"), plane=net,
                                   round_success_p=1.0)
        assert result.achieved
        # 6 member pairs, two-hop sessions: 2 pairs, 4 acks + 1 swap joint each
        assert result.pairs_consumed == 12
        assert result.control_messages == 30

    def test_decoherence_budget_failure_is_explicit(self):
        group = ConsensusGroup(members=list(range(4)), protocol="quantum")
        slow = LoraLink(bitrate=10.0, rng=substream(5, "slow"))
        template = SessionTemplate(pairs=2, messages=5, rtt_budget_s=1.0)
        result = quantum_agreement(group, make_reports(4, 0), slow,
                                   substream(6, "rounds"), session_cost=template)
        assert not result.achieved
        assert "decoherence" in result.reason


class TestModes:
    def test_mode_capabilities(self):
        assert not OperationMode.STANDARD.uses_social
        assert OperationMode.SOCIAL.uses_social
        assert not OperationMode.SOCIAL.uses_consensus
        assert OperationMode.CONSENSUS.uses_consensus
        assert not OperationMode.CONSENSUS.uses_quantum
        assert OperationMode.QUANTUM_CONSENSUS.uses_quantum
        assert OperationMode.SOCIAL_CONSENSUS.uses_social
        assert OperationMode.SOCIAL_QUANTUM_CONSENSUS.uses_quantum
        assert len(OperationMode) == 6

    def test_group_size_bounds(self):
        with pytest.raises(ValueError):
            ConsensusGroup(members=list(range(11)))
        with pytest.raises(ValueError):
            ConsensusGroup(members=[])

    def test_tolerated_faults_bound(self):
        assert [tolerated_faults(n) for n in range(1, 11)] == \
            [0, 0, 0, 1, 1, 1, 2, 2, 2, 3]
