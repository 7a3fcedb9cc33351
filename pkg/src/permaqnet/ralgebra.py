"""Routing algebra for the entanglement-distribution plane.

Path costs are triples (hop count, Bell pairs/s, overhead); extending a
path by a link adds one hop and accumulates the link's pair rate and
overhead.  Preference is strict lexicographic on the triple, which is
isotone under extension, so a generalized shortest-path search always
finds the most favorable path.  An exhaustive simple-path enumerator
serves as the correctness oracle for the solver.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path


class Unreachable(Exception):
    """No path exists between the requested endpoints."""


class TopologyError(ValueError):
    """Malformed topology description."""


@dataclass(frozen=True)
class LinkLabel:
    """Per-link cost: generated Bell pairs per second and total overhead."""

    bell_pairs_per_s: float
    overhead: float = 0.0

    def __post_init__(self):
        if self.bell_pairs_per_s <= 0:
            raise TopologyError("bell_pairs_per_s must be positive")
        if self.overhead < 0:
            raise TopologyError("overhead must be non-negative")


@dataclass(frozen=True)
class PathSignature:
    """Accumulated path cost triple."""

    hops: int = 0
    bell_pairs: float = 0.0
    overhead: float = 0.0

    def __post_init__(self):
        if self.hops < 0 or self.bell_pairs < 0 or self.overhead < 0:
            raise TopologyError("signature components must be non-negative")
        if self.hops == 0 and (self.bell_pairs != 0 or self.overhead != 0):
            raise TopologyError("the empty path has zero cost")

    def key(self) -> tuple:
        return (self.hops, self.bell_pairs, self.overhead)


EMPTY_SIGNATURE = PathSignature()


class Preference(Enum):
    A_MORE_PREFERRED = -1
    EQUAL = 0
    A_LESS_PREFERRED = 1


def extend(label: LinkLabel, sig: PathSignature) -> PathSignature:
    """Cost of a path grown by one link at its head."""
    return PathSignature(
        hops=sig.hops + 1,
        bell_pairs=label.bell_pairs_per_s + sig.bell_pairs,
        overhead=label.overhead + sig.overhead,
    )


def prefer(a: PathSignature, b: PathSignature) -> Preference:
    """Strict lexicographic comparison: hops, then pair rate, then overhead."""
    ka, kb = a.key(), b.key()
    if ka < kb:
        return Preference.A_MORE_PREFERRED
    if ka > kb:
        return Preference.A_LESS_PREFERRED
    return Preference.EQUAL


def fold_path(topo: "QuantumTopology", path: list) -> PathSignature:
    """Signature of an explicit node sequence, folded tail-first."""
    sig = EMPTY_SIGNATURE
    for u, v in zip(reversed(path[:-1]), reversed(path[1:])):
        sig = extend(topo.label(u, v), sig)
    return sig


@dataclass
class QuantumTopology:
    """Directed graph with a cost label on every link."""

    nodes: set = field(default_factory=set)
    links: dict = field(default_factory=dict)  # (u, v) -> LinkLabel

    def add_node(self, node) -> None:
        self.nodes.add(node)

    def add_link(self, u, v, label: LinkLabel) -> None:
        if u == v:
            raise TopologyError(f"self-loop at {u!r}")
        self.nodes.add(u)
        self.nodes.add(v)
        self.links[(u, v)] = label

    def label(self, u, v) -> LinkLabel:
        return self.links[(u, v)]

    def successors(self, u):
        for (a, b), label in self.links.items():
            if a == u:
                yield b, label

    @classmethod
    def from_dict(cls, data: dict) -> "QuantumTopology":
        topo = cls()
        try:
            for node in data["nodes"]:
                topo.add_node(node)
            for link in data["links"]:
                topo.add_link(
                    link["src"],
                    link["dst"],
                    LinkLabel(
                        bell_pairs_per_s=float(link["bell_pairs_per_s"]),
                        overhead=float(link.get("overhead", 0.0)),
                    ),
                )
        except (KeyError, TypeError) as exc:
            raise TopologyError(f"malformed topology: {exc}") from exc
        return topo

    @classmethod
    def from_json(cls, path) -> "QuantumTopology":
        with open(Path(path)) as fh:
            return cls.from_dict(json.load(fh))


def best_path(topo: QuantumTopology, src, dst) -> tuple[list, PathSignature]:
    """Most favorable loop-free path from src to dst.

    The search settles nodes in preference order; fully equal signatures
    are broken toward the lexicographically smaller node sequence so runs
    are reproducible.  Raises :class:`Unreachable` when no path exists.
    """
    if src not in topo.nodes or dst not in topo.nodes:
        raise TopologyError(f"unknown endpoint {src!r} or {dst!r}")
    if src == dst:
        return [src], EMPTY_SIGNATURE
    # grow paths from src; the algebra accumulates the same totals in
    # either direction, with hop-count settling making this Dijkstra-like
    heap = [(EMPTY_SIGNATURE.key(), [src])]
    settled = set()
    while heap:
        key, path = heapq.heappop(heap)
        node = path[-1]
        if node == dst:
            return path, PathSignature(*key)
        if node in settled:
            continue
        settled.add(node)
        for nxt, label in topo.successors(node):
            if nxt in path:
                continue
            sig = PathSignature(key[0] + 1, key[1] + label.bell_pairs_per_s,
                                key[2] + label.overhead)
            heapq.heappush(heap, (sig.key(), path + [nxt]))
    raise Unreachable(f"no path from {src!r} to {dst!r}")


def enumerate_paths_oracle(topo: QuantumTopology, src, dst,
                           max_nodes: int = 12) -> list[tuple[list, PathSignature]]:
    """Every simple path with its folded signature, by exhaustive search."""
    if len(topo.nodes) > max_nodes:
        raise TopologyError(f"oracle limited to {max_nodes} nodes")
    if src not in topo.nodes or dst not in topo.nodes:
        raise TopologyError(f"unknown endpoint {src!r} or {dst!r}")
    results = []

    def walk(path):
        node = path[-1]
        if node == dst and len(path) > 1 or (node == dst and src == dst):
            results.append((list(path), fold_path(topo, path)))
            return
        for nxt, _ in sorted(topo.successors(node), key=lambda t: str(t[0])):
            if nxt in path:
                continue
            path.append(nxt)
            walk(path)
            path.pop()

    if src == dst:
        return [([src], EMPTY_SIGNATURE)]
    walk([src])
    return results


def oracle_minimum(topo: QuantumTopology, src, dst) -> tuple[list, PathSignature]:
    """Preference-minimal entry of the exhaustive enumeration."""
    paths = enumerate_paths_oracle(topo, src, dst)
    if not paths:
        raise Unreachable(f"no path from {src!r} to {dst!r}")
    return min(paths, key=lambda item: (item[1].key(), item[0]))
