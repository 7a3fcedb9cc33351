"""Exact small-scale quantum state math.

Pure statevectors up to 4 qubits, single/two-qubit density matrices,
Bloch-vector conversions, exponential decoherence of Bloch components,
fidelity, Bell-pair teleportation circuits, pair purification and
repeater-chain fidelity composition.

Conventions: qubit 1 is the leftmost ket label and the most significant
bit of the amplitude index, so |abc> sits at index a*4 + b*2 + c.
State equality is defined up to global phase (compare via fidelity).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

NORM_TOL = 1e-12
PURITY_TOL = 1e-9

MAX_QUBITS = 4

SQRT_HALF = 1.0 / math.sqrt(2.0)

GATES_1Q = {
    "H": np.array([[1, 1], [1, -1]], dtype=complex) * SQRT_HALF,
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

# control on the first listed target, flip on the second
CNOT = np.array(
    [[1, 0, 0, 0],
     [0, 1, 0, 0],
     [0, 0, 0, 1],
     [0, 0, 1, 0]],
    dtype=complex,
)


class QuantumModelError(ValueError):
    """Invalid state, operator or parameter for the quantum model."""


class CapacityError(QuantumModelError):
    """Composite system would exceed the supported qubit count."""


class PurificationBudgetError(QuantumModelError):
    """Fidelity target unreachable within the purification round budget."""


class EprKind(Enum):
    """The four maximally entangled two-qubit pairs."""

    PSI_PLUS = "psi+"
    PSI_MINUS = "psi-"
    PHI_PLUS = "phi+"
    PHI_MINUS = "phi-"


@dataclass(frozen=True)
class QuantumState:
    """Normalized pure state of ``n_qubits`` qubits (n <= 4)."""

    amplitudes: np.ndarray
    n_qubits: int

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        object.__setattr__(self, "amplitudes", amps)
        if self.n_qubits < 1 or self.n_qubits > MAX_QUBITS:
            raise CapacityError(f"n_qubits must be in 1..{MAX_QUBITS}, got {self.n_qubits}")
        if amps.shape != (2 ** self.n_qubits,):
            raise QuantumModelError(
                f"expected {2 ** self.n_qubits} amplitudes, got {amps.shape}")
        norm = float(np.sum(np.abs(amps) ** 2))
        if abs(norm - 1.0) > 1e-9:
            raise QuantumModelError(f"state not normalized: |psi|^2 = {norm}")

    @classmethod
    def from_amplitudes(cls, amps: Sequence[complex]) -> "QuantumState":
        amps = np.asarray(amps, dtype=complex)
        n = int(round(math.log2(len(amps))))
        if 2 ** n != len(amps):
            raise QuantumModelError(f"amplitude count {len(amps)} is not a power of two")
        return cls(amps, n)

    @classmethod
    def qubit(cls, alpha: complex, beta: complex) -> "QuantumState":
        amps = np.array([alpha, beta], dtype=complex)
        amps = amps / np.linalg.norm(amps)
        return cls(amps, 1)

    @classmethod
    def zero(cls, n_qubits: int = 1) -> "QuantumState":
        amps = np.zeros(2 ** n_qubits, dtype=complex)
        amps[0] = 1.0
        return cls(amps, n_qubits)

    def probability(self, index: int) -> float:
        return float(abs(self.amplitudes[index]) ** 2)

    def density(self) -> "DensityMatrix":
        rho = np.outer(self.amplitudes, self.amplitudes.conj())
        return DensityMatrix(rho, self.n_qubits)

    def to_json(self) -> list:
        """Amplitudes as [re, im] pairs, for debug dumps."""
        return [[float(a.real), float(a.imag)] for a in self.amplitudes]


@dataclass(frozen=True)
class DensityMatrix:
    """Hermitian, unit-trace density operator (1 or 2 qubits)."""

    entries: np.ndarray
    n_qubits: int

    def __post_init__(self):
        rho = np.asarray(self.entries, dtype=complex)
        object.__setattr__(self, "entries", rho)
        dim = 2 ** self.n_qubits
        if rho.shape != (dim, dim):
            raise QuantumModelError(f"expected {dim}x{dim} matrix, got {rho.shape}")
        if not np.allclose(rho, rho.conj().T, atol=NORM_TOL):
            raise QuantumModelError("density matrix must be Hermitian")
        tr = complex(np.trace(rho))
        if abs(tr - 1.0) > 1e-9:
            raise QuantumModelError(f"density matrix trace must be 1, got {tr}")
        diag = np.diag(rho)
        if np.any(diag.real < -NORM_TOL) or np.any(np.abs(diag.imag) > NORM_TOL):
            raise QuantumModelError("diagonal entries must be real and non-negative")

    def purity(self) -> float:
        return float(np.trace(self.entries @ self.entries).real)

    def is_pure(self, tol: float = PURITY_TOL) -> bool:
        return abs(self.purity() - 1.0) <= tol

    @classmethod
    def maximally_mixed(cls, n_qubits: int) -> "DensityMatrix":
        dim = 2 ** n_qubits
        return cls(np.eye(dim, dtype=complex) / dim, n_qubits)

    def to_json(self) -> list:
        return [[[float(z.real), float(z.imag)] for z in row] for row in self.entries]


@dataclass(frozen=True)
class BlochVector:
    """Cartesian point in the unit ball; surface for pure states."""

    x: float
    y: float
    z: float

    def __post_init__(self):
        r2 = self.x ** 2 + self.y ** 2 + self.z ** 2
        if r2 > 1.0 + 1e-9:
            raise QuantumModelError(f"Bloch vector outside unit ball: |v|^2 = {r2}")


@dataclass(frozen=True)
class DecayRates:
    """Per-axis exponential decay rates, 1/second."""

    gamma_x: float
    gamma_y: float
    gamma_z: float

    def __post_init__(self):
        if self.gamma_x < 0 or self.gamma_y < 0 or self.gamma_z < 0:
            raise QuantumModelError("decay rates must be non-negative")


def epr_pair(kind: EprKind) -> QuantumState:
    """One of the four Bell pairs as a two-qubit state."""
    table = {
        EprKind.PSI_PLUS: [0, 1, 1, 0],
        EprKind.PSI_MINUS: [0, 1, -1, 0],
        EprKind.PHI_PLUS: [1, 0, 0, 1],
        EprKind.PHI_MINUS: [1, 0, 0, -1],
    }
    amps = np.array(table[kind], dtype=complex) * SQRT_HALF
    return QuantumState(amps, 2)


def tensor(a: QuantumState, b: QuantumState) -> QuantumState:
    """Composite state of two subsystems, a's qubits first."""
    n = a.n_qubits + b.n_qubits
    if n > MAX_QUBITS:
        raise CapacityError(f"{n} qubits exceeds the {MAX_QUBITS}-qubit capacity")
    return QuantumState(np.kron(a.amplitudes, b.amplitudes), n)


def _expand_1q(matrix: np.ndarray, target: int, n: int) -> np.ndarray:
    ops = [np.eye(2, dtype=complex)] * n
    ops[target] = matrix
    full = ops[0]
    for op in ops[1:]:
        full = np.kron(full, op)
    return full


def _expand_cnot(control: int, target: int, n: int) -> np.ndarray:
    dim = 2 ** n
    full = np.zeros((dim, dim), dtype=complex)
    for i in range(dim):
        bits = [(i >> (n - 1 - q)) & 1 for q in range(n)]
        if bits[control]:
            bits[target] ^= 1
        j = 0
        for b in bits:
            j = (j << 1) | b
        full[j, i] = 1.0
    return full


def apply_gate(state: QuantumState, gate: str, targets: Sequence[int]) -> QuantumState:
    """Apply H, X, Z or CNOT at the given qubit indices (0-based, CNOT = (control, target))."""
    targets = list(targets)
    n = state.n_qubits
    for t in targets:
        if not 0 <= t < n:
            raise QuantumModelError(f"target {t} out of range for {n} qubits")
    if len(set(targets)) != len(targets):
        raise QuantumModelError("targets must be distinct")
    if gate in GATES_1Q:
        if len(targets) != 1:
            raise QuantumModelError(f"{gate} takes one target")
        full = _expand_1q(GATES_1Q[gate], targets[0], n)
    elif gate == "CNOT":
        if len(targets) != 2:
            raise QuantumModelError("CNOT takes (control, target)")
        full = _expand_cnot(targets[0], targets[1], n)
    else:
        raise QuantumModelError(f"unknown gate {gate!r}")
    return QuantumState(full @ state.amplitudes, n)


def outcome_probabilities(state: QuantumState, qubits: Sequence[int]) -> dict[tuple[int, ...], float]:
    """Born probabilities of measuring the given qubits, by outcome bits."""
    n = state.n_qubits
    probs: dict[tuple[int, ...], float] = {}
    for i, amp in enumerate(state.amplitudes):
        bits = tuple((i >> (n - 1 - q)) & 1 for q in qubits)
        probs[bits] = probs.get(bits, 0.0) + float(abs(amp) ** 2)
    return probs


def measure_qubits(
    state: QuantumState,
    qubits: Sequence[int],
    rng: np.random.Generator,
    forced: tuple[int, ...] | None = None,
) -> tuple[tuple[int, ...], QuantumState]:
    """Measure the listed qubits in the computational basis.

    Outcomes are drawn with Born probabilities from ``rng`` unless
    ``forced`` injects a specific outcome (used for exhaustive branch
    tests; the outcome must have non-zero probability).  The returned
    state is collapsed and renormalized.
    """
    qubits = list(qubits)
    n = state.n_qubits
    for q in qubits:
        if not 0 <= q < n:
            raise QuantumModelError(f"qubit {q} out of range")
    probs = outcome_probabilities(state, qubits)
    if forced is not None:
        outcome = tuple(forced)
        if probs.get(outcome, 0.0) <= NORM_TOL:
            raise QuantumModelError(f"forced outcome {outcome} has zero probability")
    else:
        outcomes = sorted(probs)
        weights = [probs[o] for o in outcomes]
        idx = int(rng.choice(len(outcomes), p=np.array(weights) / sum(weights)))
        outcome = outcomes[idx]
    new = state.amplitudes.copy()
    for i in range(len(new)):
        bits = tuple((i >> (n - 1 - q)) & 1 for q in qubits)
        if bits != outcome:
            new[i] = 0.0
    new /= math.sqrt(probs[outcome])
    return outcome, QuantumState(new, n)


def bloch_to_density(v: BlochVector) -> DensityMatrix:
    """Single-qubit density operator 1/2 * [[1+z, x-iy], [x+iy, 1-z]]."""
    rho = 0.5 * np.array(
        [[1 + v.z, v.x - 1j * v.y],
         [v.x + 1j * v.y, 1 - v.z]],
        dtype=complex,
    )
    return DensityMatrix(rho, 1)


def density_to_bloch(rho: DensityMatrix) -> BlochVector:
    if rho.n_qubits != 1:
        raise QuantumModelError("Bloch conversion is defined for single qubits")
    m = rho.entries
    return BlochVector(
        x=2.0 * m[0, 1].real,
        y=2.0 * m[1, 0].imag,
        z=(m[0, 0] - m[1, 1]).real,
    )


def decohere(rho: DensityMatrix, t: float, rates: DecayRates) -> DensityMatrix:
    """Evolve a single-qubit state for ``t`` seconds of exponential Bloch decay.

    Each Bloch component decays at twice the sum of the other two axes'
    rates, so the diagonal survives and coherences die off.
    """
    if rho.n_qubits != 1:
        raise QuantumModelError("decoherence model is single-qubit only")
    if t < 0:
        raise QuantumModelError("negative evolution time")
    v = density_to_bloch(rho)
    decayed = BlochVector(
        x=v.x * math.exp(-2.0 * t * (rates.gamma_y + rates.gamma_z)),
        y=v.y * math.exp(-2.0 * t * (rates.gamma_x + rates.gamma_z)),
        z=v.z * math.exp(-2.0 * t * (rates.gamma_x + rates.gamma_y)),
    )
    return bloch_to_density(decayed)


def fidelity(psi: QuantumState, rho: DensityMatrix) -> float:
    """Overlap <psi|rho|psi> between a target pure state and a realized state."""
    if psi.n_qubits != rho.n_qubits:
        raise QuantumModelError("state and density matrix dimensions differ")
    val = complex(psi.amplitudes.conj() @ rho.entries @ psi.amplitudes)
    if abs(val.imag) > NORM_TOL:
        raise QuantumModelError(f"fidelity has imaginary residue {val.imag}")
    return float(val.real)


def state_fidelity(a: QuantumState, b: QuantumState) -> float:
    """|<a|b>|^2; 1 iff the states are equal up to global phase."""
    return float(abs(a.amplitudes.conj() @ b.amplitudes) ** 2)


def purify(f_in: float) -> float:
    """Fidelity after distilling two pairs of fidelity ``f_in`` into one."""
    if not 0.0 < f_in <= 1.0:
        raise QuantumModelError(f"input fidelity must be in (0, 1], got {f_in}")
    return f_in ** 2 / (f_in ** 2 + (1.0 - f_in) ** 2)


# Correction sequences keyed by the two measured bits; gates are applied
# to the received qubit in list order.
_CORRECTIONS_PHI_PLUS = {
    (0, 0): [],
    (0, 1): ["X"],
    (1, 0): ["Z"],
    (1, 1): ["X", "Z"],
}
_CORRECTIONS_PSI_MINUS = {
    (1, 1): [],
    (1, 0): ["X"],
    (0, 1): ["Z"],
    (0, 0): ["X", "Z"],
}


def teleport_circuit_states(data: QuantumState, pair: EprKind) -> list[QuantumState]:
    """Joint three-qubit states at each step of the teleportation circuit.

    The first entry is the data qubit joined with the shared pair; each
    following entry is the state after one more gate.  Only the phi+ and
    psi- pairs have a modeled circuit.
    """
    if data.n_qubits != 1:
        raise QuantumModelError("teleportation carries a single data qubit")
    joint = tensor(data, epr_pair(pair))
    if pair is EprKind.PHI_PLUS:
        steps = [("CNOT", (0, 1)), ("H", (0,))]
    elif pair is EprKind.PSI_MINUS:
        # X on both pair qubits, Bell-basis rotation on the middle,
        # entangling the data qubit, then local rotations at both ends.
        states = [joint]
        joint = apply_gate(joint, "X", (1,))
        joint = apply_gate(joint, "X", (2,))
        states.append(joint)
        for gate, targets in [("H", (1,)), ("CNOT", (1, 2)), ("CNOT", (0, 1)), ("H", (0,)), ("H", (2,))]:
            joint = apply_gate(joint, gate, targets)
            states.append(joint)
        return states
    else:
        raise QuantumModelError(f"no teleportation circuit for {pair}")
    states = [joint]
    for gate, targets in steps:
        joint = apply_gate(joint, gate, targets)
        states.append(joint)
    return states


def teleport(
    data: QuantumState,
    pair: EprKind,
    rng: np.random.Generator,
    forced_outcome: tuple[int, int] | None = None,
) -> tuple[QuantumState, tuple[int, int], list[str]]:
    """Teleport ``data`` over a shared Bell pair.

    Returns the corrected received qubit (equal to ``data`` up to global
    phase), the two measured classical bits and the correction gates that
    were applied.  ``forced_outcome`` selects a measurement branch for
    exhaustive testing.
    """
    final = teleport_circuit_states(data, pair)[-1]
    outcome, collapsed = measure_qubits(final, (0, 1), rng, forced=forced_outcome)
    # extract the destination qubit: amplitudes where the measured bits match
    base = outcome[0] * 4 + outcome[1] * 2
    received = QuantumState(
        np.array([collapsed.amplitudes[base], collapsed.amplitudes[base + 1]]), 1)
    corrections = (_CORRECTIONS_PHI_PLUS if pair is EprKind.PHI_PLUS
                   else _CORRECTIONS_PSI_MINUS)[outcome]
    for gate in corrections:
        received = apply_gate(received, gate, (0,))
    return received, outcome, list(corrections)


def purification_rounds(f_start: float, f_target: float, max_rounds: int) -> int:
    """Pumping rounds needed to lift ``f_start`` to ``f_target``.

    Raises when the target cannot be reached within the budget (the map
    only improves fidelities above 1/2).
    """
    f = f_start
    rounds = 0
    while f < f_target:
        if rounds >= max_rounds or f <= 0.5:
            raise PurificationBudgetError(
                f"cannot reach fidelity {f_target} from {f_start} in {max_rounds} rounds")
        f = purify(f)
        rounds += 1
    return rounds


def swap_chain_fidelity(
    link_fidelities: Sequence[float],
    purify_target: float,
    max_rounds: int,
) -> tuple[float, int]:
    """End-to-end fidelity and Bell-pair cost of a repeater chain.

    Swapping composes link fidelities multiplicatively; pair pumping is
    applied greedily at the weakest elementary link (one round turns two
    pairs of the link's current fidelity into one better pair) until the
    chain product reaches ``purify_target`` or the round budget runs out.
    Returns (end fidelity, total elementary pairs consumed).
    """
    fids = [float(f) for f in link_fidelities]
    if not fids:
        raise QuantumModelError("chain needs at least one link")
    for f in fids:
        if not 0.5 < f <= 1.0:
            raise QuantumModelError(f"link fidelity must be in (0.5, 1], got {f}")
    if not 0.5 < purify_target < 1.0:
        raise QuantumModelError(f"target must be in (0.5, 1), got {purify_target}")
    rounds_per_link = [0] * len(fids)
    rounds_used = 0
    while True:
        end = math.prod(fids)
        if end >= purify_target:
            pairs = sum(2 ** r for r in rounds_per_link)
            return end, pairs
        if rounds_used >= max_rounds:
            raise PurificationBudgetError(
                f"end-to-end fidelity {end:.6f} below target {purify_target} "
                f"after {max_rounds} purification rounds")
        weakest = min(range(len(fids)), key=lambda i: (fids[i], i))
        fids[weakest] = purify(fids[weakest])
        rounds_per_link[weakest] += 1
        rounds_used += 1
