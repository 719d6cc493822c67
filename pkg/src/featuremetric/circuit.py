"""Circuit representation, text format, and circuit features.

A circuit is an ordered qubit list plus a sequence of layers. Every layer
acts on every circuit qubit exactly once; idle qubits carry an explicit
``C0``. Text format, one layer per line after a qubit header::

    Q: 0 1 2 3
    L0: C3 0; CX 1 2; C0 3
    L1: C0 0; C12 1; C5 2; C7 3
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import clifford

CX = 24


class DegenerateCircuit(ValueError):
    """Raised when densities are requested for a depth-0 circuit."""


class CircuitFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Gate:
    kind: int  # 0..23 single-qubit Clifford, CX = 24
    qubits: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))
        if self.kind == CX:
            if len(self.qubits) != 2 or self.qubits[0] == self.qubits[1]:
                raise ValueError(f"CX needs two distinct qubits, got {self.qubits}")
        elif 0 <= self.kind < clifford.N_CLIFFORDS:
            if len(self.qubits) != 1:
                raise ValueError(f"C{self.kind} acts on one qubit, got {self.qubits}")
        else:
            raise ValueError(f"unknown gate kind {self.kind}")

    @property
    def name(self) -> str:
        return "CX" if self.kind == CX else f"C{self.kind}"

    @property
    def is_two_qubit(self) -> bool:
        return self.kind == CX

    @property
    def is_identity(self) -> bool:
        return self.kind == clifford.IDENTITY

    def inverse(self) -> "Gate":
        if self.kind == CX:
            return self
        return Gate(clifford.inverse(self.kind), self.qubits)

    def __str__(self) -> str:
        return " ".join([self.name, *map(str, self.qubits)])


@dataclass(frozen=True)
class Layer:
    """A set of gates on pairwise-disjoint qubits, stored in canonical order."""

    gates: tuple[Gate, ...]

    def __post_init__(self):
        gates = tuple(sorted(self.gates, key=lambda g: min(g.qubits)))
        seen: set[int] = set()
        for g in gates:
            for q in g.qubits:
                if q in seen:
                    raise ValueError(f"qubit {q} appears in more than one gate of a layer")
                seen.add(q)
        object.__setattr__(self, "gates", gates)

    @property
    def qubits(self) -> frozenset[int]:
        return frozenset(q for g in self.gates for q in g.qubits)

    @classmethod
    def idle(cls, qubits: Iterable[int]) -> "Layer":
        return cls(tuple(Gate(clifford.IDENTITY, (q,)) for q in qubits))

    @classmethod
    def single_qubit(cls, qubits: Sequence[int], kinds: Sequence[int]) -> "Layer":
        return cls(tuple(Gate(int(k), (q,)) for q, k in zip(qubits, kinds)))

    def __str__(self) -> str:
        return "; ".join(str(g) for g in self.gates)


def invert_layer(layer: Layer) -> Layer:
    """Layer whose action undoes ``layer`` (gates are disjoint, so order is irrelevant)."""
    return Layer(tuple(g.inverse() for g in layer.gates))


@dataclass(frozen=True)
class Circuit:
    qubits: tuple[int, ...]
    layers: tuple[Layer, ...] = ()

    def __post_init__(self):
        qubits = tuple(int(q) for q in self.qubits)
        if len(set(qubits)) != len(qubits):
            raise ValueError("duplicate qubit in circuit qubit list")
        object.__setattr__(self, "qubits", qubits)
        object.__setattr__(self, "layers", tuple(self.layers))
        expected = frozenset(qubits)
        for k, layer in enumerate(self.layers):
            got = layer.qubits
            if got != expected:
                extra = sorted(got - expected)
                missing = sorted(expected - got)
                raise ValueError(f"layer {k}: foreign qubits {extra}, uncovered qubits {missing}")

    @property
    def width(self) -> int:
        return len(self.qubits)

    @property
    def depth(self) -> int:
        return len(self.layers)

    def gates(self) -> Iterable[Gate]:
        for layer in self.layers:
            yield from layer.gates

    def then(self, other: "Circuit") -> "Circuit":
        if other.qubits != self.qubits:
            raise ValueError("cannot concatenate circuits on different qubit lists")
        return Circuit(self.qubits, self.layers + other.layers)

    def serialize(self) -> str:
        lines = ["Q: " + " ".join(map(str, self.qubits))]
        lines += [f"L{k}: {layer}" for k, layer in enumerate(self.layers)]
        return "\n".join(lines) + "\n"

    @classmethod
    def parse(cls, text: str) -> "Circuit":
        lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
        if not lines or not lines[0].startswith("Q:"):
            raise CircuitFormatError("missing 'Q:' qubit header")
        try:
            qubits = tuple(int(t) for t in lines[0][2:].split())
        except ValueError as exc:
            raise CircuitFormatError(f"bad qubit header {lines[0]!r}") from exc
        layers = []
        for k, line in enumerate(lines[1:]):
            label, _, body = line.partition(":")
            if label != f"L{k}":
                raise CircuitFormatError(f"expected layer label L{k}, got {label!r}")
            gates = []
            for chunk in body.split(";"):
                toks = chunk.split()
                if not toks:
                    continue
                name, args = toks[0], toks[1:]
                try:
                    kind = CX if name == "CX" else int(name[1:]) if name.startswith("C") else -1
                    gates.append(Gate(kind, tuple(int(a) for a in args)))
                except ValueError as exc:
                    raise CircuitFormatError(f"L{k}: bad gate {chunk.strip()!r}: {exc}") from exc
            try:
                layers.append(Layer(tuple(gates)))
            except ValueError as exc:
                raise CircuitFormatError(f"L{k}: {exc}") from exc
        try:
            return cls(qubits, tuple(layers))
        except ValueError as exc:
            raise CircuitFormatError(str(exc)) from exc


@dataclass(frozen=True)
class ConnectivityGraph:
    vertices: tuple[int, ...]
    edges: frozenset[frozenset[int]] = field(default_factory=frozenset)

    def __post_init__(self):
        verts = tuple(sorted(set(int(v) for v in self.vertices)))
        edges = frozenset(frozenset(int(q) for q in e) for e in self.edges)
        for e in edges:
            if len(e) != 2:
                raise ValueError(f"self-loop or malformed edge {sorted(e)}")
            if not e <= set(verts):
                raise ValueError(f"edge {sorted(e)} references a missing vertex")
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "edges", edges)

    @classmethod
    def all_to_all(cls, n: int) -> "ConnectivityGraph":
        return cls(tuple(range(n)), frozenset(frozenset(p) for p in _pairs(range(n))))

    @classmethod
    def line(cls, n: int) -> "ConnectivityGraph":
        return cls(tuple(range(n)), frozenset(frozenset((q, q + 1)) for q in range(n - 1)))

    def subgraph_edges(self, qubits: Iterable[int]) -> list[tuple[int, int]]:
        """Edges with both endpoints in ``qubits``, as sorted pairs in sorted order."""
        qs = set(qubits)
        return sorted(tuple(sorted(e)) for e in self.edges if e <= qs)

    def connected(self, a: int, b: int) -> bool:
        return frozenset((a, b)) in self.edges


def _pairs(items):
    items = list(items)
    return [(a, b) for i, a in enumerate(items) for b in items[i + 1:]]


@dataclass(frozen=True)
class FeatureValues:
    w: int
    d: int
    n2q: int
    xi2q: float
    n1q: int
    xi1q: float
    active: tuple[bool, ...]


def compute_features(
    c: Circuit, system_qubits: Sequence[int] | None = None, depth: int | None = None
) -> FeatureValues:
    """Width, depth, gate counts and densities of ``c``.

    ``depth`` overrides the layer count as the density denominator; mirror
    circuits pass their benchmark depth here. ``active`` follows the order of
    ``system_qubits`` (defaults to the circuit's own qubits).
    """
    d = c.depth if depth is None else int(depth)
    if d < 1:
        raise DegenerateCircuit("depth-0 circuit has undefined gate densities")
    w = c.width
    n2q = sum(1 for g in c.gates() if g.is_two_qubit)
    n1q = sum(1 for g in c.gates() if not g.is_two_qubit and not g.is_identity)
    system = c.qubits if system_qubits is None else tuple(system_qubits)
    used = set(c.qubits)
    return FeatureValues(
        w=w,
        d=d,
        n2q=n2q,
        xi2q=2 * n2q / (w * d),
        n1q=n1q,
        xi1q=n1q / (w * d),
        active=tuple(q in used for q in system),
    )


def random_clifford_layer(qubits: Sequence[int], rng: np.random.Generator) -> Layer:
    kinds = rng.integers(0, clifford.N_CLIFFORDS, size=len(qubits))
    return Layer.single_qubit(qubits, kinds)


def random_pauli_layer(qubits: Sequence[int], rng: np.random.Generator) -> Layer:
    picks = rng.integers(0, 4, size=len(qubits))
    return Layer.single_qubit(qubits, [clifford.PAULI_INDICES[p] for p in picks])
