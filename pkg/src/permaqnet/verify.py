"""Built-in analytic self-checks of the quantum math and routing algebra.

Each check recomputes a closed-form quantity (teleportation branch
recovery and branch probabilities, purification values and fixed points,
Bloch axis-point round trips, decoherence closed form, fidelity anchors,
solver-vs-enumeration routing minima) and compares at tight tolerance.
Run via the ``verify`` CLI subcommand; any failing check is a build or
environment defect.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import qcore, ralgebra
from .qcore import BlochVector, DecayRates, DensityMatrix, EprKind, QuantumState

TOL = 1e-12


@dataclass(frozen=True)
class CheckResult:
    category: str
    name: str
    passed: bool
    detail: str = ""


def _random_qubit(rng) -> QuantumState:
    raw = rng.normal(size=2) + 1j * rng.normal(size=2)
    return QuantumState.qubit(raw[0], raw[1])


def check_teleportation(samples: int = 200) -> list[CheckResult]:
    rng = np.random.default_rng(20231)
    results = []
    for pair in (EprKind.PHI_PLUS, EprKind.PSI_MINUS):
        worst = 1.0
        probs_ok = True
        for _ in range(samples):
            data = _random_qubit(rng)
            pre = qcore.teleport_circuit_states(data, pair)[-1]
            for outcome, p in qcore.outcome_probabilities(pre, (0, 1)).items():
                if abs(p - 0.25) > TOL:
                    probs_ok = False
                received, _, _ = qcore.teleport(data, pair, rng, forced_outcome=outcome)
                worst = min(worst, qcore.state_fidelity(received, data))
        results.append(CheckResult(
            "teleport", f"{pair.value} branch recovery",
            worst >= 1.0 - TOL, f"worst fidelity {worst:.15f}"))
        results.append(CheckResult(
            "teleport", f"{pair.value} outcome uniformity",
            probs_ok, "every branch probability is 1/4"))
    return results


def check_purification() -> list[CheckResult]:
    value = qcore.purify(0.8)
    anchors = (
        ("pumping value at 0.8", abs(value - 0.9411764705882353) <= TOL,
         f"got {value!r}"),
        ("fixed point at 1.0", abs(qcore.purify(1.0) - 1.0) <= TOL, ""),
        ("fixed point at 0.5", abs(qcore.purify(0.5) - 0.5) <= TOL, ""),
    )
    results = [CheckResult("purify", name, ok, detail) for name, ok, detail in anchors]
    grid = [0.001 + 0.998 * i / 999 for i in range(1000)]
    vals = [qcore.purify(f) for f in grid]
    monotone = all(a < b for a, b in zip(vals, vals[1:]))
    results.append(CheckResult("purify", "monotone on 1000-point grid", monotone))
    return results


_AXIS_POINTS = [
    ((1, 0, 0), [1, 1]),
    ((-1, 0, 0), [1, -1]),
    ((0, 1, 0), [1, 1j]),
    ((0, -1, 0), [1, -1j]),
    ((0, 0, 1), [1, 0]),
    ((0, 0, -1), [0, 1]),
]


def check_bloch() -> list[CheckResult]:
    results = []
    ok = True
    detail = ""
    for coords, ket in _AXIS_POINTS:
        vec = np.array(ket, dtype=complex)
        vec = vec / np.linalg.norm(vec)
        rho = qcore.bloch_to_density(BlochVector(*coords))
        if not np.allclose(rho.entries, np.outer(vec, vec.conj()), atol=TOL):
            ok, detail = False, f"density mismatch at {coords}"
        back = qcore.density_to_bloch(rho)
        if max(abs(back.x - coords[0]), abs(back.y - coords[1]),
               abs(back.z - coords[2])) > TOL:
            ok, detail = False, f"round trip mismatch at {coords}"
    results.append(CheckResult("bloch", "axis points round-trip", ok, detail))
    center = qcore.bloch_to_density(BlochVector(0, 0, 0))
    results.append(CheckResult(
        "bloch", "sphere center is maximally mixed",
        bool(np.allclose(center.entries, np.eye(2) / 2, atol=TOL))))
    return results


def check_decoherence() -> list[CheckResult]:
    rng = np.random.default_rng(777)
    ok = True
    detail = ""
    for _ in range(60):
        v = rng.normal(size=3)
        v = v / np.linalg.norm(v) * rng.uniform(0, 1)
        gx, gy, gz = rng.uniform(0, 1.5, size=3)
        t = rng.uniform(0, 4)
        out = qcore.decohere(qcore.bloch_to_density(BlochVector(*v)), t,
                             DecayRates(gx, gy, gz))
        x = v[0] * math.exp(-2 * t * (gy + gz))
        y = v[1] * math.exp(-2 * t * (gx + gz))
        z = v[2] * math.exp(-2 * t * (gx + gy))
        want = 0.5 * np.array([[1 + z, x - 1j * y], [x + 1j * y, 1 - z]])
        if not np.allclose(out.entries, want, atol=TOL):
            ok, detail = False, f"mismatch at t={t:.3f}"
            break
        if abs(complex(np.trace(out.entries)).real - 1.0) > TOL:
            ok, detail = False, "trace drifted"
            break
    return [CheckResult("decoherence", "closed-form evolution grid", ok, detail)]


def check_fidelity() -> list[CheckResult]:
    results = []
    psi = QuantumState.qubit(0.6, 0.8)
    results.append(CheckResult(
        "fidelity", "pure state overlap is 1",
        abs(qcore.fidelity(psi, psi.density()) - 1.0) <= TOL))
    ok = True
    for n in range(1, 5):
        f = qcore.fidelity(QuantumState.zero(n), DensityMatrix.maximally_mixed(n))
        if abs(f - 0.5 ** n) > TOL:
            ok = False
    results.append(CheckResult(
        "fidelity", "maximally mixed floor 2^-n for n=1..4", ok))
    return results


def check_routing(graphs: int = 60) -> list[CheckResult]:
    sig = ralgebra.extend(ralgebra.LinkLabel(3, 2), ralgebra.PathSignature(2, 5, 4))
    ok_extend = sig == ralgebra.PathSignature(3, 8, 6)
    results = [CheckResult("routing", "extension operator triple", ok_extend)]
    ok = True
    detail = ""
    for seed in range(graphs):
        rng = np.random.default_rng(9000 + seed)
        topo = ralgebra.QuantumTopology()
        names = [f"n{i}" for i in range(int(rng.integers(2, 9)))]
        for name in names:
            topo.add_node(name)
        for u in names:
            for v in names:
                if u != v and rng.random() < 0.4:
                    topo.add_link(u, v, ralgebra.LinkLabel(
                        float(rng.integers(1, 9)), float(rng.integers(0, 9))))
        try:
            want_path, want_sig = ralgebra.oracle_minimum(topo, names[0], names[-1])
        except ralgebra.Unreachable:
            try:
                ralgebra.best_path(topo, names[0], names[-1])
                ok, detail = False, f"solver found a path the oracle missed (seed {seed})"
            except ralgebra.Unreachable:
                pass
            continue
        path, got_sig = ralgebra.best_path(topo, names[0], names[-1])
        if got_sig.key() != want_sig.key() or path != want_path:
            ok, detail = False, f"solver/oracle mismatch at seed {seed}"
    results.append(CheckResult("routing", f"solver matches enumeration on {graphs} graphs",
                               ok, detail))
    return results


def run_all_checks() -> list[CheckResult]:
    checks = []
    checks += check_teleportation()
    checks += check_purification()
    checks += check_bloch()
    checks += check_decoherence()
    checks += check_fidelity()
    checks += check_routing()
    return checks
