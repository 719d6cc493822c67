"""Circuit distributions for feature vectors (w, d, xi).

Two families:

* randomized mirror circuits, whose two-qubit density ``xi`` holds only in
  expectation (layers come from :func:`sample_edgegrab_layer`), and
* fixed-density random Clifford circuits, whose two-qubit gate count is
  exactly ``round(w*d*xi/2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import clifford
from .circuit import (
    CX,
    Circuit,
    ConnectivityGraph,
    Gate,
    Layer,
    invert_layer,
    random_clifford_layer,
    random_pauli_layer,
)


class NoEdges(ValueError):
    pass


class BadBenchmarkDepth(ValueError):
    pass


class DensityInfeasible(ValueError):
    pass


# stream purposes, used as the first spawn-key element
STREAM_CIRCUIT = 1
STREAM_SHOTS = 2
STREAM_SRDFE = 3
STREAM_BOOTSTRAP = 4


def stream_seed(master_seed: int, purpose: int, *keys: int) -> tuple[int, ...]:
    """Entropy tuple for an independent stream keyed by (purpose, *keys)."""
    return (int(master_seed), int(purpose), *map(int, keys))


def derive_rng(master_seed: int, purpose: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(list(stream_seed(master_seed, purpose, *keys))))


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def select_qubits(config_qubits: Sequence[int] | None, graph: ConnectivityGraph, w: int) -> tuple[int, ...]:
    """The explicit qubit set if given, else the first ``w`` vertices of the graph."""
    if config_qubits is not None:
        qs = tuple(config_qubits)
        if len(qs) < w:
            raise ValueError(f"qubit set has {len(qs)} qubits, width {w} requested")
        qs = qs[:w]
    else:
        if w > len(graph.vertices):
            raise ValueError(f"width {w} exceeds the {len(graph.vertices)}-qubit system")
        qs = graph.vertices[:w]
    missing = set(qs) - set(graph.vertices)
    if missing:
        raise ValueError(f"qubits {sorted(missing)} are not in the connectivity graph")
    return qs


def random_maximal_matching(edges: Sequence[tuple[int, int]], rng: np.random.Generator) -> list[tuple[int, int]]:
    """Greedy maximal matching over a uniformly shuffled edge list."""
    order = rng.permutation(len(edges))
    used: set[int] = set()
    matching = []
    for k in order:
        a, b = edges[k]
        if a not in used and b not in used:
            used.update((a, b))
            matching.append((a, b))
    return matching


def sample_edgegrab_layer(
    qubits: Sequence[int], xi: float, rng: np.random.Generator, graph: ConnectivityGraph
) -> Layer:
    """One random layer with expected two-qubit-gate count ``w * xi``.

    Each edge of a random maximal matching becomes a CX (random orientation)
    with probability ``min(1, w*xi/|matching|)``; every other qubit gets a
    uniformly random single-qubit Clifford.
    """
    if not 0.0 <= xi <= 1.0:
        raise ValueError(f"xi must lie in [0, 1], got {xi}")
    qubits = tuple(qubits)
    gates: list[Gate] = []
    busy: set[int] = set()
    if xi > 0:
        edges = graph.subgraph_edges(qubits)
        if not edges:
            raise NoEdges(f"no connectivity edges among qubits {list(qubits)}")
        matching = random_maximal_matching(edges, rng)
        p = min(1.0, len(qubits) * xi / len(matching))
        keep = rng.random(len(matching)) < p
        flips = rng.random(len(matching)) < 0.5
        for (a, b), k, f in zip(matching, keep, flips):
            if k:
                gates.append(Gate(CX, (b, a) if f else (a, b)))
                busy.update((a, b))
    rest = [q for q in qubits if q not in busy]
    gates.extend(random_clifford_layer(rest, rng).gates)
    return Layer(tuple(gates))


@dataclass(frozen=True)
class MirrorSamplerConfig:
    connectivity: ConnectivityGraph
    qubits: tuple[int, ...] | None = None  # None: first w vertices

    def __post_init__(self):
        if self.qubits is not None:
            missing = set(self.qubits) - set(self.connectivity.vertices)
            if missing:
                raise ValueError(f"qubits {sorted(missing)} are not in the connectivity graph")


@dataclass(frozen=True)
class FixedDensitySamplerConfig:
    connectivity: ConnectivityGraph
    qubits: tuple[int, ...] | None = None
    max_retries: int = field(default=100)


def sample_mirror_circuit(
    w: int, d: int, xi: float, config: MirrorSamplerConfig, rng: np.random.Generator
) -> Circuit:
    """Randomized mirror circuit of benchmark depth ``d`` (``d + 3`` physical layers)."""
    if d < 4 or d % 4:
        raise BadBenchmarkDepth(f"benchmark depth must be a positive multiple of 4, got {d}")
    if w < 2:
        raise ValueError(f"mirror circuits need width >= 2, got {w}")
    qs = select_qubits(config.qubits, config.connectivity, w)
    cap = random_clifford_layer(qs, rng)
    forward = [sample_edgegrab_layer(qs, xi, rng, config.connectivity) for _ in range(d // 4)]
    main = forward + [invert_layer(layer) for layer in reversed(forward)]
    layers = [cap]
    for layer in main:
        layers.append(random_pauli_layer(qs, rng))
        layers.append(layer)
    layers.append(random_pauli_layer(qs, rng))
    layers.append(invert_layer(cap))
    return Circuit(qs, tuple(layers))


def _slot_pairs(qs: Sequence[int], graph: ConnectivityGraph) -> list[tuple[int, int]]:
    return graph.subgraph_edges(qs)


def fixed_density_count(w: int, d: int, xi: float) -> int:
    return round_half_up(w * d * xi / 2)


def sample_fixed_density_circuit(
    w: int, d: int, xi: float, config: FixedDensitySamplerConfig, rng: np.random.Generator
) -> Circuit:
    """Width-``w``, ``d``-layer circuit with exactly ``round(w*d*xi/2)`` CX gates."""
    if d < 1 or w < 1:
        raise ValueError(f"need w >= 1 and d >= 1, got w={w}, d={d}")
    qs = select_qubits(config.qubits, config.connectivity, w)
    n2q = fixed_density_count(w, d, xi)
    if n2q > d * (w // 2):
        raise DensityInfeasible(f"{n2q} CX gates do not fit in {d} layers of width {w}")
    pairs = _slot_pairs(qs, config.connectivity)
    if n2q and not pairs:
        raise DensityInfeasible(f"no connectivity edges among qubits {list(qs)}")

    chosen: list[list[tuple[int, int]]] = []
    for _ in range(config.max_retries):
        chosen = [[] for _ in range(d)]
        busy = [set() for _ in range(d)]
        placed = 0
        if n2q:
            for slot in rng.permutation(d * len(pairs)):
                layer, pk = divmod(int(slot), len(pairs))
                a, b = pairs[pk]
                if a in busy[layer] or b in busy[layer]:
                    continue
                busy[layer].update((a, b))
                chosen[layer].append((a, b))
                placed += 1
                if placed == n2q:
                    break
        if placed == n2q:
            break
    else:
        raise DensityInfeasible(f"could not place {n2q} CX gates after {config.max_retries} shuffles")

    layers = []
    for layer_pairs in chosen:
        flips = rng.random(len(layer_pairs)) < 0.5
        gates = [Gate(CX, (b, a) if f else (a, b)) for (a, b), f in zip(layer_pairs, flips)]
        used = {q for g in gates for q in g.qubits}
        rest = [q for q in qs if q not in used]
        kinds = rng.integers(0, clifford.N_CLIFFORDS, size=len(rest))
        gates.extend(Gate(int(k), (q,)) for q, k in zip(rest, kinds))
        layers.append(Layer(tuple(gates)))
    return Circuit(qs, tuple(layers))
