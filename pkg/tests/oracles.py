"""Independent reference implementations used only by the tests.

Dense statevector and density-matrix simulation rebuild every gate from its
H/S word with plain matrix products, sharing no tables with the package; the
GP oracle uses explicit inverses and slogdet instead of Cholesky solves.
"""

from __future__ import annotations

import itertools
from functools import lru_cache

import numpy as np

from featuremetric import clifford
from featuremetric.circuit import CX, Circuit

H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
S = np.diag([1, 1j])
I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.diag([1, -1]).astype(complex)
PAULI = {"I": I2, "X": X, "Y": Y, "Z": Z}


@lru_cache(maxsize=None)
def gate_unitary(kind: int) -> np.ndarray:
    """Unitary of C_kind from its word (letters applied left to right in time)."""
    u = I2.copy()
    for ch in clifford.WORDS[kind]:
        u = {"H": H, "S": S}[ch] @ u
    return u


def _embed1(u: np.ndarray, q: int, n: int) -> np.ndarray:
    ops = [I2] * n
    ops[q] = u
    out = np.array([[1]], dtype=complex)
    for o in ops:
        out = np.kron(out, o)
    return out


def _cx(c: int, t: int, n: int) -> np.ndarray:
    dim = 2**n
    m = np.zeros((dim, dim), dtype=complex)
    for b in range(dim):
        bits = [(b >> (n - 1 - k)) & 1 for k in range(n)]
        if bits[c]:
            bits[t] ^= 1
        m[sum(bit << (n - 1 - k) for k, bit in enumerate(bits)), b] = 1
    return m


def gate_matrix(kind: int, positions: tuple[int, ...], n: int) -> np.ndarray:
    """Full 2^n unitary; position 0 is the most significant (leftmost) bit."""
    if kind == CX:
        return _cx(positions[0], positions[1], n)
    return _embed1(gate_unitary(kind), positions[0], n)


def circuit_unitary(c: Circuit) -> np.ndarray:
    n = c.width
    pos = {q: k for k, q in enumerate(c.qubits)}
    u = np.eye(2**n, dtype=complex)
    for g in c.gates():
        u = gate_matrix(g.kind, tuple(pos[q] for q in g.qubits), n) @ u
    return u


def statevector(c: Circuit) -> np.ndarray:
    psi = np.zeros(2**c.width, dtype=complex)
    psi[0] = 1
    return circuit_unitary(c) @ psi


def basis_probabilities(c: Circuit) -> dict[str, float]:
    p = np.abs(statevector(c)) ** 2
    n = c.width
    return {format(b, f"0{n}b"): float(v) for b, v in enumerate(p) if v > 1e-12}


def pauli_matrix(label: str) -> np.ndarray:
    sign = -1 if label.startswith("-") else 1
    label = label.lstrip("+-")
    out = np.array([[1]], dtype=complex)
    for ch in label:
        out = np.kron(out, PAULI[ch])
    return sign * out


# --- noisy channels ------------------------------------------------------------


def _pauli_ops(k: int) -> list[np.ndarray]:
    """All non-identity k-qubit Paulis."""
    out = []
    for labels in itertools.product("IXYZ", repeat=k):
        if set(labels) != {"I"}:
            out.append(pauli_matrix("".join(labels)))
    return out


def _error_channel_on(rho: np.ndarray, e: float, positions: tuple[int, ...], n: int) -> np.ndarray:
    if e == 0:
        return rho
    k = len(positions)
    ops = _pauli_ops(k)
    acc = np.zeros_like(rho)
    for p in ops:
        full = _embed_k(p, positions, n)
        acc += full @ rho @ full.conj().T
    return (1 - e) * rho + e / len(ops) * acc


def _embed_k(p: np.ndarray, positions: tuple[int, ...], n: int) -> np.ndarray:
    """Embed a k-qubit operator on the given positions (in that order)."""
    k = len(positions)
    dim = 2**n
    out = np.zeros((dim, dim), dtype=complex)
    for b in range(dim):
        bits = [(b >> (n - 1 - j)) & 1 for j in range(n)]
        sub = sum(bits[q] << (k - 1 - m) for m, q in enumerate(positions))
        for sub_out in range(2**k):
            amp = p[sub_out, sub]
            if amp == 0:
                continue
            nb = list(bits)
            for m, q in enumerate(positions):
                nb[q] = (sub_out >> (k - 1 - m)) & 1
            out[sum(bit << (n - 1 - j) for j, bit in enumerate(nb)), b] += amp
    return out


def noisy_channel_apply(c: Circuit, rho: np.ndarray, e1: dict, e2: dict) -> np.ndarray:
    """Each non-identity gate followed by a uniform non-identity Pauli error w.p. e."""
    n = c.width
    pos = {q: k for k, q in enumerate(c.qubits)}
    for g in c.gates():
        if g.is_identity:
            continue
        p = tuple(pos[q] for q in g.qubits)
        u = gate_matrix(g.kind, p, n)
        rho = u @ rho @ u.conj().T
        e = e2[frozenset(g.qubits)] if g.kind == CX else e1[g.qubits[0]]
        rho = _error_channel_on(rho, e, p, n)
    return rho


def noisy_output_distribution(c: Circuit, e1: dict, e2: dict, p10: dict | None = None, p01: dict | None = None) -> np.ndarray:
    n = c.width
    rho = np.zeros((2**n, 2**n), dtype=complex)
    rho[0, 0] = 1
    probs = np.real(np.diag(noisy_channel_apply(c, rho, e1, e2))).copy()
    if p10 or p01:
        for k, q in enumerate(c.qubits):
            a, b = (p10 or {}).get(q, 0.0), (p01 or {}).get(q, 0.0)
            new = np.zeros_like(probs)
            for idx, pr in enumerate(probs):
                bit = (idx >> (n - 1 - k)) & 1
                flip = a if bit else b
                new[idx] += pr * (1 - flip)
                new[idx ^ (1 << (n - 1 - k))] += pr * flip
            probs = new
    return probs


def process_fidelity(c: Circuit, e1: dict, e2: dict) -> float:
    """Entanglement fidelity of the noisy circuit with its ideal unitary."""
    n = c.width
    d = 2**n
    U = circuit_unitary(c)
    total = 0.0
    # F = (1/d^2) sum_{ij} <i|U^dag Lambda(|i><j|) U|j>
    for i in range(d):
        for j in range(d):
            E = np.zeros((d, d), dtype=complex)
            E[i, j] = 1
            out = noisy_channel_apply(c, E, e1, e2)
            total += (U.conj().T @ out @ U)[i, j]
    return float(np.real(total)) / d**2


# --- GP oracle ---------------------------------------------------------------


def se_kernel(A: np.ndarray, B: np.ndarray, eta: float, rho) -> np.ndarray:
    rho = np.asarray(rho, dtype=float)
    K = np.empty((len(A), len(B)))
    for i, a in enumerate(A):
        for j, b in enumerate(B):
            K[i, j] = eta**2 * np.exp(-0.5 * np.sum(((a - b) / rho) ** 2))
    return K


def gp_posterior(X, y, Xs, eta, rho, sigma):
    K = se_kernel(X, X, eta, rho) + sigma**2 * np.eye(len(X))
    Ki = np.linalg.inv(K)
    Ks = se_kernel(Xs, X, eta, rho)
    mean = Ks @ Ki @ y
    var = eta**2 - np.einsum("ij,jk,ik->i", Ks, Ki, Ks)
    return mean, var


def gp_log_ml(X, y, eta, rho, sigma):
    K = se_kernel(X, X, eta, rho) + sigma**2 * np.eye(len(X))
    _, logdet = np.linalg.slogdet(K)
    return float(-0.5 * y @ np.linalg.solve(K, y) - 0.5 * logdet - 0.5 * len(y) * np.log(2 * np.pi))


def fd_first(x, x2, g, eta, rho, h=1e-5):
    """Central difference of k(x, x2) in x_g."""
    e = np.zeros_like(x)
    e[g] = h
    k = lambda a: se_kernel(a[None], x2[None], eta, rho)[0, 0]
    return (k(x + e) - k(x - e)) / (2 * h)


def fd_second(x, x2, g, hdim, eta, rho, h=1e-4):
    """Central mixed difference of k(x, x2) in x_g and x2_h."""
    eg = np.zeros_like(x)
    eg[g] = h
    eh = np.zeros_like(x2)
    eh[hdim] = h
    k = lambda a, b: se_kernel(a[None], b[None], eta, rho)[0, 0]
    return (k(x + eg, x2 + eh) - k(x + eg, x2 - eh) - k(x - eg, x2 + eh) + k(x - eg, x2 - eh)) / (4 * h * h)
