"""Quantum management plane: pair generation, sessions and link labels.

Sessions distribute end-to-end entanglement along precomputed routes by
composing per-link pair fidelities through swapping and pumping; the
acknowledgement/swap/purification control exchanges are injected into
the classical network as real (bandwidth-reserved) frames.  There is no
quantum memory: a session is measured immediately and consumed, which
also bounds decoherence to the classical-control round trip.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import qcore, ralgebra
from .engine import LoraLink, SimClock
from .qcore import (
    BlochVector,
    DecayRates,
    EprKind,
    PurificationBudgetError,
    bloch_to_density,
    decohere,
    epr_pair,
)


class SessionError(RuntimeError):
    """Session could not be established or was used after consumption."""


@dataclass(frozen=True)
class EntanglementAttempt:
    """Per-link pair source: Bernoulli attempts at a fixed period."""

    link_id: str
    p_ent: float
    attempt_period_s: float
    f0: float

    def __post_init__(self):
        if not 0.0 < self.p_ent <= 1.0:
            raise ValueError("p_ent must be in (0, 1]")
        if self.attempt_period_s <= 0:
            raise ValueError("attempt period must be positive")
        if not 0.5 < self.f0 <= 1.0:
            raise ValueError("initial fidelity must be in (0.5, 1]")

    @property
    def pair_rate(self) -> float:
        """Generated Bell pairs per second."""
        return self.p_ent / self.attempt_period_s


@dataclass
class EprSession:
    """One end-to-end entangled pair, single-use."""

    path: list
    end_fidelity: float
    pairs_consumed: int
    classical_control_messages: int
    kind: EprKind = EprKind.PHI_PLUS
    consumed: bool = field(default=False)


def control_message_count(hops: int, pairs_consumed: int) -> int:
    """Acks per hop, one swap coordination per joint, two per extra pair."""
    return 2 * hops + max(0, hops - 1) + 2 * (pairs_consumed - hops)


def label_from_link(att: EntanglementAttempt, f_target: float,
                    control_overhead: float = 2.0,
                    max_purify_rounds: int = 32) -> ralgebra.LinkLabel:
    """Routing label for a pair source: pair rate and expected overhead.

    Overhead counts the pairs burned by pumping this link up to the
    global fidelity target plus a fixed per-hop control cost.
    """
    rounds = qcore.purification_rounds(att.f0, f_target, max_purify_rounds)
    pair_cost = 0 if rounds == 0 else 2 ** rounds
    return ralgebra.LinkLabel(
        bell_pairs_per_s=att.pair_rate,
        overhead=pair_cost + control_overhead,
    )


def decohered_fidelity(f: float, rtt_s: float, rates: DecayRates) -> float:
    """Fidelity after the pair idles for the control round trip.

    The pair's deviation from a perfect match is tracked as a single
    transverse Bloch component, so the decay follows the same law as a
    stored qubit's coherence.
    """
    if rtt_s <= 0.0:
        return f
    rho = bloch_to_density(BlochVector(x=2.0 * f - 1.0, y=0.0, z=0.0))
    aged = decohere(rho, rtt_s, rates)
    return 0.5 * (1.0 + qcore.density_to_bloch(aged).x)


class QuantumNetwork:
    """Pair sources on a topology, with routes fixed at construction."""

    def __init__(self, f_target: float, rates: DecayRates = DecayRates(0, 0, 0),
                 max_purify_rounds: int = 8, control_frame_bytes: int = 8):
        if not 0.5 < f_target < 1.0:
            raise ValueError("f_target must be in (0.5, 1)")
        self.f_target = float(f_target)
        self.rates = rates
        self.max_purify_rounds = int(max_purify_rounds)
        self.control_frame_bytes = int(control_frame_bytes)
        self.topo = ralgebra.QuantumTopology()
        self.attempts: dict[tuple, EntanglementAttempt] = {}
        self._routes: dict[tuple, tuple[list, int]] = {}

    def add_link(self, u, v, att: EntanglementAttempt) -> None:
        # labels carry the expected pumping cost; the per-session budget
        # (max_purify_rounds) is enforced only at establishment
        self.topo.add_link(u, v, label_from_link(att, self.f_target))
        self.attempts[(u, v)] = att

    def route(self, src, dst) -> list:
        cached = self._routes.get((src, dst))
        if cached is None:
            try:
                path, _ = ralgebra.best_path(self.topo, src, dst)
            except ralgebra.Unreachable as exc:
                raise SessionError(str(exc)) from exc
            self._routes[(src, dst)] = cached = path
        return cached

    def chain_fidelities(self, path: list) -> list[float]:
        return [self.attempts[(u, v)].f0 for u, v in zip(path, path[1:])]


def establish_session(
    net: QuantumNetwork,
    src,
    dst,
    f_target: float | None = None,
    clock: SimClock | None = None,
    control_link: LoraLink | None = None,
    control_flow: str = "qctl",
) -> EprSession:
    """Build one end-to-end pair between src and dst.

    Swapping composes the per-link fidelities along the precomputed
    route, pumping as needed to reach the target.  Every control message
    is offered to ``control_link`` as a reserved frame when an engine
    clock is attached; the pair then decays over the control exchange
    duration before it can be measured.  Raises :class:`SessionError`
    when no route exists or the purification budget runs out.
    """
    target = net.f_target if f_target is None else float(f_target)
    path = net.route(src, dst)
    hops = len(path) - 1
    if hops == 0:
        raise SessionError("session endpoints must differ")
    try:
        end_f, pairs = qcore.swap_chain_fidelity(
            net.chain_fidelities(path), target, net.max_purify_rounds)
    except PurificationBudgetError as exc:
        raise SessionError(str(exc)) from exc
    messages = control_message_count(hops, pairs)
    rtt = 0.0
    if clock is not None and control_link is not None:
        _, times = control_link.offer_burst(
            clock.now, messages, net.control_frame_bytes, reserved=True)
        rtt = max(0.0, float(times.max()) - clock.now)
    end_f = decohered_fidelity(end_f, rtt, net.rates)
    if end_f < target:
        raise SessionError(
            f"fidelity {end_f:.6f} decayed below target {target} over the control exchange")
    return EprSession(path=list(path), end_fidelity=end_f, pairs_consumed=pairs,
                      classical_control_messages=messages)


def md_measure(session: EprSession, basis: str,
               rng: np.random.Generator) -> tuple[int, int]:
    """Measure both ends of the pair immediately, yielding correlated bits.

    Sessions are single-use: a second measurement raises.
    """
    if session.consumed:
        raise SessionError("session already consumed")
    session.consumed = True
    state = epr_pair(session.kind)
    if basis == "x":
        state = qcore.apply_gate(state, "H", (0,))
        state = qcore.apply_gate(state, "H", (1,))
    elif basis != "z":
        raise ValueError(f"unsupported basis {basis!r}")
    outcome, _ = qcore.measure_qubits(state, (0, 1), rng)
    return outcome
