"""Per-circuit capability estimators.

Success probability applies to definite-outcome circuits. For general
Clifford circuits the process fidelity is estimated by direct fidelity
estimation with a SPAM reference (SR-DFE): the circuit is sandwiched between
a random stabilizer-preparation layer and a layer rotating the evolved
stabilizer onto a Z-type Pauli, and a depth-0 reference circuit built from
the same preparation calibrates out state-preparation and measurement error.

The preparation Pauli is drawn from the non-identity Paulis, so the mean
measured ``<P3>`` estimates the process polarization ``gamma`` rather than
the fidelity; :func:`polarization_to_fidelity` converts.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import clifford
from .circuit import Circuit, Layer
from .stabilizer import PauliOperator, conjugate_pauli


class DegenerateReference(ValueError):
    pass


SUCCESS_PROB = "success_prob"
SRDFE = "srdfe"


@dataclass(frozen=True)
class CapabilityRecord:
    vector_index: int
    circuit_index: int
    estimate: float
    shots: int
    kind: str
    stderr: float | None = None

    @property
    def clamped(self) -> float:
        return min(1.0, max(0.0, self.estimate))


def _check_shots(counts: Mapping[str, int], shots: int | None) -> int:
    total = sum(counts.values())
    n = total if shots is None else int(shots)
    if n <= 0:
        raise ValueError("cannot estimate from zero shots")
    if total != n:
        raise ValueError(f"counts sum to {total}, expected {n}")
    return n


def estimate_success_probability(counts: Mapping[str, int], target: str, shots: int | None = None) -> float:
    n = _check_shots(counts, shots)
    return counts.get(target, 0) / n


# --- process polarization ----------------------------------------------------


def fidelity_to_polarization(f: float, n: int) -> float:
    d2 = 4.0**n
    return (d2 * f - 1.0) / (d2 - 1.0)


def polarization_to_fidelity(gamma: float, n: int) -> float:
    d2 = 4.0**n
    return (1.0 + (d2 - 1.0) * gamma) / d2


def srdfe_fidelity(fdfe_c: float, fdfe_null: float, n: int) -> float:
    """Divide out the reference in polarization space and map back to fidelity."""
    if n < 1:
        raise ValueError("need n >= 1")
    g_null = fidelity_to_polarization(fdfe_null, n)
    if g_null == 0:
        raise DegenerateReference("reference circuit has zero process polarization")
    return polarization_to_fidelity(fidelity_to_polarization(fdfe_c, n) / g_null, n)


# --- bundles ------------------------------------------------------------------


@dataclass(frozen=True)
class SrdfeBundle:
    circuit: Circuit  # the base circuit c
    p1: PauliOperator
    prep: Layer
    p2: PauliOperator
    measure: Layer
    p3: PauliOperator
    null_measure: Layer
    null_p3: PauliOperator

    @property
    def dfe_circuit(self) -> Circuit:
        return Circuit(self.circuit.qubits, (self.prep, *self.circuit.layers, self.measure))

    @property
    def null_circuit(self) -> Circuit:
        return Circuit(self.circuit.qubits, (self.prep, self.null_measure))


def random_nonidentity_pauli(n: int, rng: np.random.Generator) -> PauliOperator:
    k = int(rng.integers(1, 4**n))
    codes = [(k >> (2 * q)) & 3 for q in range(n)]
    return PauliOperator.from_codes(codes)


def _prep_layer(qubits: Sequence[int], p: PauliOperator, rng: np.random.Generator) -> Layer:
    kinds = []
    for code in p.codes:
        options = clifford.preparing(code) if code else range(clifford.N_CLIFFORDS)
        kinds.append(int(rng.choice(list(options))))
    return Layer.single_qubit(qubits, kinds)


def _measure_layer(qubits: Sequence[int], p: PauliOperator, rng: np.random.Generator) -> Layer:
    kinds = []
    for code in p.codes:
        options = clifford.diagonalizing(code, sign_preserving=True) if code else range(clifford.N_CLIFFORDS)
        kinds.append(int(rng.choice(list(options))))
    return Layer.single_qubit(qubits, kinds)


def build_srdfe_bundle(c: Circuit, rng: np.random.Generator, p1: PauliOperator | None = None) -> SrdfeBundle:
    """DFE circuit and its depth-0 reference for one random stabilizer.

    The reference reuses the preparation layer; its measurement layer
    diagonalizes ``p1`` itself, since the empty circuit leaves ``p1`` unchanged.
    """
    qs = c.qubits
    if p1 is None:
        p1 = random_nonidentity_pauli(c.width, rng)
    prep = _prep_layer(qs, p1, rng)
    p2 = conjugate_pauli(c, p1)
    measure = _measure_layer(qs, p2, rng)
    p3 = conjugate_pauli(Circuit(qs, (measure,)), p2)
    null_measure = _measure_layer(qs, p1, rng)
    null_p3 = conjugate_pauli(Circuit(qs, (null_measure,)), p1)
    return SrdfeBundle(c, p1, prep, p2, measure, p3, null_measure, null_p3)


def in_plus_eigenspace(bits: str, p3: PauliOperator) -> bool:
    """Whether P3|x> = +|x> for a Z-type P3."""
    parity = sum(int(bits[q]) for q in p3.support) % 2
    return (p3.sign > 0) == (parity == 0)


def estimate_p3_expectation(counts: Mapping[str, int], p3: PauliOperator, shots: int | None = None) -> float:
    if not p3.is_z_type():
        raise ValueError(f"{p3} is not Z-type")
    n = _check_shots(counts, shots)
    plus = sum(v for bits, v in counts.items() if in_plus_eigenspace(bits, p3))
    return (plus - (n - plus)) / n


def srdfe_estimates(p3_circuit: Sequence[float], p3_null: Sequence[float], n: int) -> np.ndarray:
    """Per-circuit SR-DFE estimates for the K circuits at one feature vector.

    Each circuit's ``<P3>`` is divided by the mean reference ``<P3>`` of all
    K references at the vector; results are unclamped.
    """
    ref = float(np.mean(p3_null))
    if ref == 0:
        raise DegenerateReference("mean reference <P3> is zero")
    return np.array([polarization_to_fidelity(v / ref, n) for v in p3_circuit])


def dfe_estimates(p3_values: Sequence[float], n: int) -> np.ndarray:
    """Plain (uncorrected) DFE fidelity estimate for each circuit."""
    return np.array([polarization_to_fidelity(v, n) for v in p3_values])


def bootstrap_stderr(values: Sequence[float], rng: np.random.Generator, resamples: int = 1000) -> float:
    """Standard deviation of the resampled mean."""
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        raise ValueError("bootstrap needs at least one value")
    if resamples < 100:
        raise ValueError("use at least 100 bootstrap resamples")
    if np.ptp(x) == 0:
        return 0.0
    idx = rng.integers(0, x.size, size=(resamples, x.size))
    return float(x[idx].mean(axis=1).std(ddof=1))
