"""The 24-element single-qubit Clifford group.

Elements are enumerated from words over the generators ``H`` and ``S`` in
shortlex order (shorter words first, then lexicographic with ``H < S``); the
first word reaching a new element (up to global phase) names it. Words are
read in time order, so ``"HS"`` means apply ``H`` then ``S``.

The resulting table fixes ``C0`` as the identity. The Pauli gates land at
``I = C0``, ``Z = C5``, ``X = C12`` and ``Y = C23``.

Single-qubit Paulis are encoded by a 2-bit code ``2*x + z``:
``0 = I``, ``1 = Z``, ``2 = X``, ``3 = Y``.
"""

from __future__ import annotations

import itertools

import numpy as np

N_CLIFFORDS = 24

_H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
_S = np.array([[1, 0], [0, 1j]], dtype=complex)
_GENERATORS = {"H": _H, "S": _S}

PAULI_MATRICES = {
    0: np.eye(2, dtype=complex),
    1: np.array([[1, 0], [0, -1]], dtype=complex),
    2: np.array([[0, 1], [1, 0]], dtype=complex),
    3: np.array([[0, -1j], [1j, 0]], dtype=complex),
}
PAULI_LABELS = "IZXY"


def _phase_key(u: np.ndarray) -> tuple:
    """Hashable key of a unitary modulo global phase."""
    flat = u.flatten()
    k = int(np.flatnonzero(np.abs(flat) > 1e-9)[0])
    v = flat * (abs(flat[k]) / flat[k])
    return tuple(np.round(v.real, 8)) + tuple(np.round(v.imag, 8))


def _word_unitary(word: str) -> np.ndarray:
    u = np.eye(2, dtype=complex)
    for letter in word:
        u = _GENERATORS[letter] @ u
    return u


def _enumerate() -> tuple[list[str], list[np.ndarray]]:
    words: list[str] = []
    mats: list[np.ndarray] = []
    seen: set[tuple] = set()
    length = 0
    while len(words) < N_CLIFFORDS:
        for letters in itertools.product("HS", repeat=length):
            w = "".join(letters)
            u = _word_unitary(w)
            key = _phase_key(u)
            if key not in seen:
                seen.add(key)
                words.append(w)
                mats.append(u)
        length += 1
    return words, mats


WORDS, UNITARIES = _enumerate()
_INDEX = {_phase_key(u): i for i, u in enumerate(UNITARIES)}


def index_of(u: np.ndarray) -> int:
    """Clifford index of a 2x2 unitary (any global phase)."""
    try:
        return _INDEX[_phase_key(np.asarray(u, dtype=complex))]
    except KeyError:
        raise ValueError("matrix is not a single-qubit Clifford") from None


def _conjugation_tables():
    # IMAGE[c, code] = code of U P U^dag; SIGN[c, code] = 1 if that image is negated
    image = np.zeros((N_CLIFFORDS, 4), dtype=np.uint8)
    sign = np.zeros((N_CLIFFORDS, 4), dtype=np.uint8)
    for c, u in enumerate(UNITARIES):
        for code in range(1, 4):
            m = u @ PAULI_MATRICES[code] @ u.conj().T
            for out in range(1, 4):
                if np.allclose(m, PAULI_MATRICES[out]):
                    image[c, code] = out
                    break
                if np.allclose(m, -PAULI_MATRICES[out]):
                    image[c, code] = out
                    sign[c, code] = 1
                    break
            else:  # pragma: no cover - group closure guarantees a match
                raise RuntimeError("conjugation left the Pauli group")
    return image, sign


IMAGE, SIGN = _conjugation_tables()

INVERSE = np.array([index_of(u.conj().T) for u in UNITARIES], dtype=np.int64)
# COMPOSE[a, b]: apply C_a, then C_b
COMPOSE = np.array(
    [[index_of(UNITARIES[b] @ UNITARIES[a]) for b in range(N_CLIFFORDS)] for a in range(N_CLIFFORDS)],
    dtype=np.int64,
)

IDENTITY = 0
PAULI_GATES = {label: index_of(PAULI_MATRICES[code]) for code, label in enumerate(PAULI_LABELS)}
PAULI_INDICES = tuple(PAULI_GATES[p] for p in "IXYZ")


def inverse(i: int) -> int:
    return int(INVERSE[i])


def compose(a: int, b: int) -> int:
    """Index of the Clifford 'apply C_a, then C_b'."""
    return int(COMPOSE[a, b])


def preparing(code: int) -> list[int]:
    """Cliffords U with U Z U^dag = +P for the Pauli with the given code.

    Applied to |0>, each yields the +1 eigenstate of P.
    """
    return [c for c in range(N_CLIFFORDS) if IMAGE[c, 1] == code and SIGN[c, 1] == 0]


def diagonalizing(code: int, sign_preserving: bool = False) -> list[int]:
    """Cliffords V with V P V^dag = +-Z for the Pauli with the given code.

    With ``sign_preserving`` only those giving +Z (four of the eight).
    """
    return [
        c for c in range(N_CLIFFORDS) if IMAGE[c, code] == 1 and not (sign_preserving and SIGN[c, code])
    ]
