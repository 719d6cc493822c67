"""Stabilizer tableau simulation of Clifford circuits.

The tableau follows Aaronson and Gottesman: rows ``0..n-1`` are
destabilizers, rows ``n..2n-1`` stabilizers, each row a signed Pauli in
``(x, z, r)`` form where ``x = z = 1`` denotes ``Y``.

Gates address tableau columns (positions ``0..n-1``). Circuit-level helpers
map a circuit's qubit labels to positions in qubit-list order, and bit
strings list outcomes in that same order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import clifford
from .circuit import CX, Circuit, Gate


class NotDefiniteOutcome(ValueError):
    """The circuit's output state is not a computational basis state."""


_CODE_FROM_CHAR = {"I": 0, "Z": 1, "X": 2, "Y": 3}


@dataclass(frozen=True)
class PauliOperator:
    """Signed Hermitian n-qubit Pauli operator."""

    x: tuple[int, ...]
    z: tuple[int, ...]
    sign: int = 1

    def __post_init__(self):
        if len(self.x) != len(self.z):
            raise ValueError("x and z parts differ in length")
        if self.sign not in (1, -1):
            raise ValueError(f"sign must be +1 or -1, got {self.sign}")
        object.__setattr__(self, "x", tuple(int(b) & 1 for b in self.x))
        object.__setattr__(self, "z", tuple(int(b) & 1 for b in self.z))

    @property
    def n(self) -> int:
        return len(self.x)

    @classmethod
    def from_label(cls, label: str) -> "PauliOperator":
        sign = 1
        if label[:1] in "+-":
            sign = -1 if label[0] == "-" else 1
            label = label[1:]
        codes = [_CODE_FROM_CHAR[ch] for ch in label]
        return cls(tuple(c >> 1 for c in codes), tuple(c & 1 for c in codes), sign)

    @classmethod
    def from_codes(cls, codes: Sequence[int], sign: int = 1) -> "PauliOperator":
        return cls(tuple(int(c) >> 1 for c in codes), tuple(int(c) & 1 for c in codes), sign)

    @property
    def codes(self) -> tuple[int, ...]:
        return tuple(2 * a + b for a, b in zip(self.x, self.z))

    @property
    def label(self) -> str:
        return ("+" if self.sign > 0 else "-") + "".join(clifford.PAULI_LABELS[c] for c in self.codes)

    @property
    def weight(self) -> int:
        return sum(1 for c in self.codes if c)

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(q for q, c in enumerate(self.codes) if c)

    def is_z_type(self) -> bool:
        return not any(self.x)

    def commutes_with(self, other: "PauliOperator") -> bool:
        s = sum(a * d + b * c for a, b, c, d in zip(self.x, self.z, other.x, other.z))
        return s % 2 == 0

    def __str__(self) -> str:
        return self.label


def _g(x1, z1, x2, z2):
    """Power of i picked up when multiplying Pauli (x1, z1) into (x2, z2)."""
    x1 = x1.astype(np.int64)
    z1 = z1.astype(np.int64)
    x2 = x2.astype(np.int64)
    z2 = z2.astype(np.int64)
    return np.where(
        (x1 == 1) & (z1 == 1),
        z2 - x2,
        np.where(x1 == 1, z2 * (2 * x2 - 1), np.where(z1 == 1, x2 * (1 - 2 * z2), 0)),
    )


class Tableau:
    """Mutable n-qubit stabilizer tableau initialised to |0...0>."""

    def __init__(self, n: int):
        self.n = int(n)
        self.x = np.zeros((2 * n, n), dtype=np.uint8)
        self.z = np.zeros((2 * n, n), dtype=np.uint8)
        self.r = np.zeros(2 * n, dtype=np.uint8)
        idx = np.arange(n)
        self.x[idx, idx] = 1
        self.z[n + idx, idx] = 1

    def copy(self) -> "Tableau":
        t = Tableau.__new__(Tableau)
        t.n, t.x, t.z, t.r = self.n, self.x.copy(), self.z.copy(), self.r.copy()
        return t

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Tableau)
            and self.n == other.n
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.z, other.z)
            and np.array_equal(self.r, other.r)
        )

    def apply_clifford1(self, kind: int, q: int) -> None:
        code = 2 * self.x[:, q] + self.z[:, q]
        self.r ^= clifford.SIGN[kind][code]
        out = clifford.IMAGE[kind][code]
        self.x[:, q] = out >> 1
        self.z[:, q] = out & 1

    def apply_cx(self, c: int, t: int) -> None:
        xc, zc, xt, zt = self.x[:, c], self.z[:, c], self.x[:, t], self.z[:, t]
        self.r ^= xc & zt & (xt ^ zc ^ 1)
        self.x[:, t] = xt ^ xc
        self.z[:, c] = zc ^ zt

    def apply(self, gate: Gate, positions: dict[int, int] | None = None) -> None:
        qs = gate.qubits if positions is None else tuple(positions[q] for q in gate.qubits)
        for q in qs:
            if not 0 <= q < self.n:
                raise IndexError(f"qubit {q} outside a {self.n}-qubit tableau")
        if gate.kind == CX:
            self.apply_cx(*qs)
        elif gate.kind != clifford.IDENTITY:
            self.apply_clifford1(gate.kind, qs[0])

    def stabilizers(self) -> list[PauliOperator]:
        n = self.n
        return [
            PauliOperator(tuple(self.x[i]), tuple(self.z[i]), -1 if self.r[i] else 1)
            for i in range(n, 2 * n)
        ]

    def symplectic_form_ok(self) -> bool:
        """Check the destabilizer/stabilizer commutation structure."""
        n = self.n
        xs, zs = self.x.astype(np.int64), self.z.astype(np.int64)
        omega = (xs @ zs.T + zs @ xs.T) % 2
        want = np.zeros((2 * n, 2 * n), dtype=np.int64)
        idx = np.arange(n)
        want[idx, n + idx] = 1
        want[n + idx, idx] = 1
        return bool(np.array_equal(omega, want))

    def outcome_support(self) -> tuple[np.ndarray, np.ndarray]:
        """Affine support of the Z-basis outcome distribution.

        Returns ``(x0, basis)``: outcomes are uniformly distributed over
        ``x0 XOR span(basis)``; ``basis`` has one row per random bit.
        """
        n = self.n
        x = self.x[n:].copy()
        z = self.z[n:].copy()
        r = self.r[n:].copy()

        def rowmult(h: int, i: int) -> None:
            phase = 2 * int(r[h]) + 2 * int(r[i]) + int(_g(x[i], z[i], x[h], z[h]).sum())
            r[h] = (phase % 4) // 2
            x[h] ^= x[i]
            z[h] ^= z[i]

        k = 0
        for col in range(n):
            rows = np.flatnonzero(x[k:, col]) + k
            if rows.size == 0:
                continue
            p = int(rows[0])
            if p != k:
                x[[k, p]] = x[[p, k]]
                z[[k, p]] = z[[p, k]]
                r[[k, p]] = r[[p, k]]
            for h in range(n):
                if h != k and x[h, col]:
                    rowmult(h, k)
            k += 1
        basis = x[:k].copy()
        # remaining rows are Z-type: parity z . x0 = r
        zc = z[k:].copy()
        rc = r[k:].copy()
        x0 = np.zeros(n, dtype=np.uint8)
        pivots = []
        m = 0
        for col in range(n):
            rows = np.flatnonzero(zc[m:, col]) + m
            if rows.size == 0:
                continue
            p = int(rows[0])
            if p != m:
                zc[[m, p]] = zc[[p, m]]
                rc[[m, p]] = rc[[p, m]]
            for h in range(zc.shape[0]):
                if h != m and zc[h, col]:
                    zc[h] ^= zc[m]
                    rc[h] ^= rc[m]
            pivots.append(col)
            m += 1
        for row, col in enumerate(pivots):
            x0[col] = rc[row]
        return x0, basis

    def sample(self, shots: int, rng: np.random.Generator) -> np.ndarray:
        """Ideal measurement outcomes, shape (shots, n)."""
        x0, basis = self.outcome_support()
        out = np.broadcast_to(x0, (shots, self.n)).copy()
        if len(basis):
            coeffs = rng.integers(0, 2, size=(shots, len(basis)), dtype=np.uint8)
            out ^= ((coeffs.astype(np.int64) @ basis.astype(np.int64)) % 2).astype(np.uint8)
        return out


def apply_gate(t: Tableau, g: Gate) -> Tableau:
    """Functional form of :meth:`Tableau.apply`; ``t`` is left untouched."""
    out = t.copy()
    out.apply(g)
    return out


def positions_of(c: Circuit) -> dict[int, int]:
    return {q: k for k, q in enumerate(c.qubits)}


def run_tableau(c: Circuit) -> Tableau:
    t = Tableau(c.width)
    pos = positions_of(c)
    for g in c.gates():
        t.apply(g, pos)
    return t


def conjugate_pauli(c: Circuit, p: PauliOperator) -> PauliOperator:
    """Return U P U^dag for the circuit unitary U."""
    if p.n != c.width:
        raise ValueError(f"Pauli on {p.n} qubits, circuit has width {c.width}")
    x = list(p.x)
    z = list(p.z)
    flip = 0
    pos = positions_of(c)
    for g in c.gates():
        if g.kind == CX:
            a, b = pos[g.qubits[0]], pos[g.qubits[1]]
            flip ^= x[a] & z[b] & (x[b] ^ z[a] ^ 1)
            x[b] ^= x[a]
            z[a] ^= z[b]
        elif g.kind != clifford.IDENTITY:
            q = pos[g.qubits[0]]
            code = 2 * x[q] + z[q]
            flip ^= int(clifford.SIGN[g.kind][code])
            out = int(clifford.IMAGE[g.kind][code])
            x[q], z[q] = out >> 1, out & 1
    return PauliOperator(tuple(x), tuple(z), -p.sign if flip else p.sign)


def bits_to_string(bits: Sequence[int]) -> str:
    return "".join("1" if b else "0" for b in bits)


def simulate_ideal_output(c: Circuit) -> str:
    """The deterministic output bit string of a definite-outcome circuit."""
    x0, basis = run_tableau(c).outcome_support()
    if len(basis):
        raise NotDefiniteOutcome(f"output has {len(basis)} uniformly random bits")
    return bits_to_string(x0)
