"""Stochastic Pauli noise, calibration-table ingestion, and execution backends.

Noisy shots are simulated with Pauli frames: the ideal output distribution
comes from the stabilizer tableau, and each shot carries a Pauli frame that
is pushed through the remaining gates. Frames are stored column-wise as
Python ints with one bit per shot, so every gate costs a handful of bitwise
operations regardless of the shot count.

Calibration files are CSV with two header-led sections mirroring the device
tables: per-qubit calibration (``qubit, T1 (us), T2 (us), frequency (GHz),
anharmonicity (GHz), readout error, Pr(prep 1, measure 0), Pr(prep 0,
measure 1), readout length (ns)``) and gate errors (``qubit, Single Qubit
Error (%), Gate Length (ns), qubits, Two Qubit Error (%), Gate Length
(ns)``). Lines starting with ``#`` are comments.
"""

from __future__ import annotations

import csv
import io
import os
import re
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Protocol, Sequence

import numpy as np

from . import clifford
from .circuit import CX, Circuit, ConnectivityGraph
from .stabilizer import run_tableau


class IncompleteNoiseModel(ValueError):
    pass


class CalibrationFormatError(ValueError):
    pass


QUBIT_COLUMNS = (
    "qubit",
    "T1 (us)",
    "T2 (us)",
    "frequency (GHz)",
    "anharmonicity (GHz)",
    "readout error",
    "Pr(prep 1, measure 0)",
    "Pr(prep 0, measure 1)",
    "readout length (ns)",
)
GATE_COLUMNS = (
    "qubit",
    "Single Qubit Error (%)",
    "Gate Length (ns)",
    "qubits",
    "Two Qubit Error (%)",
    "Gate Length (ns)",
)


@dataclass
class CalibrationTable:
    qubits: dict[str, dict[str, float]]
    one_qubit_error_pct: dict[str, float]
    one_qubit_gate_ns: dict[str, float]
    two_qubit_error_pct: dict[tuple[str, str], float]
    two_qubit_gate_ns: dict[tuple[str, str], float]


def qubit_index(label: str) -> int:
    m = re.fullmatch(r"Q?(\d+)", label.strip())
    if not m:
        raise CalibrationFormatError(f"bad qubit label {label!r}")
    return int(m.group(1))


def _float(cell: str, where: str) -> float:
    try:
        return float(cell)
    except ValueError:
        raise CalibrationFormatError(f"{where}: non-numeric value {cell!r}") from None


def parse_calibration(text: str) -> CalibrationTable:
    rows = [r for r in csv.reader(io.StringIO(text)) if r and not r[0].lstrip().startswith("#")]
    sections: list[list[list[str]]] = []
    for r in rows:
        if r[0].strip() == "qubit":
            sections.append([r])
        elif sections:
            sections[-1].append(r)
        else:
            raise CalibrationFormatError(f"data row before any header: {r}")
    qsec = next((s for s in sections if "readout error" in [c.strip() for c in s[0]]), None)
    gsec = next((s for s in sections if "Single Qubit Error (%)" in [c.strip() for c in s[0]]), None)
    if qsec is None:
        raise CalibrationFormatError("missing per-qubit calibration section")
    if gsec is None:
        raise IncompleteNoiseModel("missing gate error section")

    header = [c.strip() for c in qsec[0]]
    for col in QUBIT_COLUMNS:
        if col not in header:
            raise CalibrationFormatError(f"per-qubit section is missing column {col!r}")
    qubits: dict[str, dict[str, float]] = {}
    for k, r in enumerate(qsec[1:], start=1):
        where = f"per-qubit row {k} ({r[0] if r else ''})"
        if len(r) != len(header):
            raise CalibrationFormatError(f"{where}: expected {len(header)} cells, got {len(r)}")
        label = r[0].strip()
        if label in qubits:
            raise CalibrationFormatError(f"{where}: duplicate qubit {label}")
        qubit_index(label)
        qubits[label] = {h: _float(v, where) for h, v in zip(header[1:], r[1:])}

    gheader = [c.strip() for c in gsec[0]]
    if gheader[:3] != list(GATE_COLUMNS[:3]):
        raise CalibrationFormatError(f"gate section header {gheader} does not start with {GATE_COLUMNS[:3]}")
    if gheader[3:6] != list(GATE_COLUMNS[3:]):
        raise IncompleteNoiseModel("gate section has no two-qubit error columns")
    e1: dict[str, float] = {}
    t1q: dict[str, float] = {}
    e2: dict[tuple[str, str], float] = {}
    t2q: dict[tuple[str, str], float] = {}
    for k, r in enumerate(gsec[1:], start=1):
        where = f"gate row {k}"
        r = r + [""] * (6 - len(r))
        label = r[0].strip()
        if label:
            if label in e1:
                raise CalibrationFormatError(f"{where}: duplicate qubit {label}")
            e1[label] = _float(r[1], where)
            t1q[label] = _float(r[2], where)
        pair = r[3].strip()
        if pair:
            m = re.fullmatch(r"\(\s*(\w+)\s*,\s*(\w+)\s*\)", pair)
            if not m:
                raise CalibrationFormatError(f"{where}: bad qubit pair {pair!r}")
            key = (m.group(1), m.group(2))
            if key in e2 or key[::-1] in e2:
                raise CalibrationFormatError(f"{where}: duplicate pair {pair}")
            e2[key] = _float(r[4], where)
            t2q[key] = _float(r[5], where)
    for name, table in (("one-qubit", e1), ("two-qubit", e2)):
        for key, v in table.items():
            if v < 0:
                raise CalibrationFormatError(f"negative {name} error for {key}")
    if not e2:
        raise IncompleteNoiseModel("gate section lists no two-qubit pairs")
    return CalibrationTable(qubits, e1, t1q, e2, t2q)


@dataclass
class NoiseModel:
    """Per-gate Pauli-error probabilities and per-qubit readout confusion.

    ``p10[q]`` is Pr(prep 1, measure 0) and ``p01[q]`` is Pr(prep 0, measure 1).
    """

    e1: dict[int, float]
    e2: dict[frozenset, float]
    p10: dict[int, float]
    p01: dict[int, float]
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.e2 = {frozenset(k): v for k, v in self.e2.items()}
        for name in ("e1", "e2", "p10", "p01"):
            for key, v in getattr(self, name).items():
                if not 0.0 <= v <= 1.0:
                    raise ValueError(f"{name}[{key}] = {v} is not a probability")

    @classmethod
    def uniform(
        cls,
        qubits: Iterable[int],
        e1: float = 0.0,
        e2: float = 0.0,
        readout: float | tuple[float, float] = 0.0,
        connectivity: ConnectivityGraph | None = None,
    ) -> "NoiseModel":
        qs = list(qubits)
        p10, p01 = readout if isinstance(readout, tuple) else (readout, readout)
        graph = connectivity or ConnectivityGraph.all_to_all(max(qs) + 1)
        return cls(
            e1={q: e1 for q in qs},
            e2={e: e2 for e in graph.edges if e <= set(qs)},
            p10={q: p10 for q in qs},
            p01={q: p01 for q in qs},
        )

    @classmethod
    def noiseless(cls, qubits: Iterable[int], connectivity: ConnectivityGraph | None = None) -> "NoiseModel":
        return cls.uniform(qubits, connectivity=connectivity)

    def connectivity(self) -> ConnectivityGraph:
        verts = set(self.e1) | set(self.p10) | {q for e in self.e2 for q in e}
        return ConnectivityGraph(tuple(verts), frozenset(self.e2))


# Pauli-error probability per unit of average gate infidelity: (d + 1) / d
_INFIDELITY_TO_PAULI = {1: 1.5, 2: 1.25}


def noise_from_calibration(table: CalibrationTable, conversion: str = "direct") -> NoiseModel:
    """Map calibration rates to a stochastic Pauli model.

    ``conversion="direct"`` uses each tabulated error rate as the
    per-application Pauli-error probability; ``"infidelity"`` treats it as an
    average gate infidelity and rescales by (d+1)/d.
    """
    if conversion not in ("direct", "infidelity"):
        raise ValueError(f"unknown conversion {conversion!r}")
    f1 = _INFIDELITY_TO_PAULI[1] if conversion == "infidelity" else 1.0
    f2 = _INFIDELITY_TO_PAULI[2] if conversion == "infidelity" else 1.0
    e1 = {qubit_index(k): min(1.0, f1 * v / 100) for k, v in table.one_qubit_error_pct.items()}
    e2 = {
        frozenset((qubit_index(a), qubit_index(b))): min(1.0, f2 * v / 100)
        for (a, b), v in table.two_qubit_error_pct.items()
    }
    p10 = {qubit_index(k): row["Pr(prep 1, measure 0)"] for k, row in table.qubits.items()}
    p01 = {qubit_index(k): row["Pr(prep 0, measure 1)"] for k, row in table.qubits.items()}
    return NoiseModel(e1, e2, p10, p01, provenance={"conversion": conversion})


def ingest_calibration(source: str | os.PathLike, conversion: str = "direct") -> NoiseModel:
    """Read a calibration CSV (path, or bundled name such as ``"ibmq_algiers"``)."""
    return noise_from_calibration(parse_calibration(read_calibration_text(source)), conversion)


def read_calibration_text(source: str | os.PathLike) -> str:
    path = Path(source)
    if path.exists():
        return path.read_text(encoding="utf-8")
    name = str(source)
    bundled = resources.files("featuremetric") / "data" / f"{name}.csv"
    if bundled.is_file():
        return bundled.read_text(encoding="utf-8")
    raise FileNotFoundError(f"no calibration file or bundled device named {name!r}")


def _bits_to_int(mask: np.ndarray) -> int:
    return int.from_bytes(np.packbits(mask, bitorder="little").tobytes(), "little")


def _int_to_bits(value: int, shots: int) -> np.ndarray:
    raw = value.to_bytes((shots + 7) // 8, "little")
    return np.unpackbits(np.frombuffer(raw, dtype=np.uint8), bitorder="little")[:shots]


# For each Clifford, which input Pauli codes (Z, X, Y) map to an output with x=1 / z=1.
_FRAME_X = [tuple(bool(clifford.IMAGE[c][code] >> 1) for code in (1, 2, 3)) for c in range(24)]
_FRAME_Z = [tuple(bool(clifford.IMAGE[c][code] & 1) for code in (1, 2, 3)) for c in range(24)]


def _error_sites(c: Circuit, noise: NoiseModel | None) -> list[tuple[int, float]]:
    """Per-gate (position in c.gates(), error probability), validating coverage."""
    if noise is None:
        return []
    sites = []
    for k, g in enumerate(c.gates()):
        if g.kind == CX:
            key = frozenset(g.qubits)
            if key not in noise.e2:
                raise IncompleteNoiseModel(f"no two-qubit error rate for pair {sorted(key)}")
            e = noise.e2[key]
        elif g.kind == clifford.IDENTITY:
            continue
        else:
            if g.qubits[0] not in noise.e1:
                raise IncompleteNoiseModel(f"no single-qubit error rate for qubit {g.qubits[0]}")
            e = noise.e1[g.qubits[0]]
        if e > 0:
            sites.append((k, e))
    for q in c.qubits:
        if q not in noise.p10 or q not in noise.p01:
            raise IncompleteNoiseModel(f"no readout error for qubit {q}")
    return sites


def sample_shots(
    c: Circuit, noise: NoiseModel | None, shots: int, rng: np.random.Generator
) -> np.ndarray:
    """Simulated measurement outcomes, shape (shots, width), columns in qubit-list order."""
    if shots < 1:
        raise ValueError("need at least one shot")
    sites = _error_sites(c, noise)
    full = (1 << shots) - 1
    n = c.width
    pos = {q: k for k, q in enumerate(c.qubits)}

    # pre-draw every error event so the stream layout is fixed per circuit
    events: dict[int, list[tuple[int, int]]] = {}
    if sites:
        counts = rng.binomial(shots, [e for _, e in sites])
        gates = list(c.gates())
        for (k, _), m in zip(sites, counts):
            if m == 0:
                continue
            who = rng.choice(shots, size=int(m), replace=False)
            span = 16 if gates[k].kind == CX else 4
            what = rng.integers(1, span, size=int(m))
            events[k] = list(zip(who.tolist(), what.tolist()))

    fx = [0] * n
    fz = [0] * n
    if events:
        for k, g in enumerate(c.gates()):
            if g.kind == CX:
                a, b = pos[g.qubits[0]], pos[g.qubits[1]]
                fx[b] ^= fx[a]
                fz[a] ^= fz[b]
            elif g.kind != clifford.IDENTITY:
                q = pos[g.qubits[0]]
                x, z = fx[q], fz[q]
                only_z, only_x, both = ~x & z & full, x & ~z & full, x & z
                tx, tz = _FRAME_X[g.kind], _FRAME_Z[g.kind]
                fx[q] = (only_z if tx[0] else 0) | (only_x if tx[1] else 0) | (both if tx[2] else 0)
                fz[q] = (only_z if tz[0] else 0) | (only_x if tz[1] else 0) | (both if tz[2] else 0)
            for shot, p in events.get(k, ()):
                bit = 1 << shot
                if g.kind == CX:
                    a, b = pos[g.qubits[0]], pos[g.qubits[1]]
                    ca, cb = p >> 2, p & 3
                    if ca >> 1:
                        fx[a] ^= bit
                    if ca & 1:
                        fz[a] ^= bit
                    if cb >> 1:
                        fx[b] ^= bit
                    if cb & 1:
                        fz[b] ^= bit
                else:
                    q = pos[g.qubits[0]]
                    if p >> 1:
                        fx[q] ^= bit
                    if p & 1:
                        fz[q] ^= bit

    out = run_tableau(c).sample(shots, rng)
    for q in range(n):
        if fx[q]:
            out[:, q] ^= _int_to_bits(fx[q], shots)
    if noise is not None:
        for k, q in enumerate(c.qubits):
            p10, p01 = noise.p10[q], noise.p01[q]
            if p10 == 0 and p01 == 0:
                continue
            u = rng.random(shots)
            col = out[:, k]
            flip = np.where(col == 1, u < p10, u < p01)
            out[:, k] = col ^ flip
    return out


def histogram(outcomes: np.ndarray) -> dict[str, int]:
    """Counts of bit strings (qubit-list order, first qubit leftmost), sorted by string."""
    counts = Counter("".join("1" if b else "0" for b in row) for row in outcomes)
    return dict(sorted(counts.items()))


def simulate_noisy_shots(
    c: Circuit, noise: NoiseModel | None, shots: int, rng: np.random.Generator
) -> dict[str, int]:
    return histogram(sample_shots(c, noise, shots, rng))


# --- backends ---------------------------------------------------------------


@dataclass(frozen=True)
class Job:
    """One circuit execution request; ``seed`` is a SeedSequence entropy tuple."""

    vector_index: int
    circuit_index: int
    role: str
    circuit: Circuit
    seed: tuple[int, ...]


class Backend(Protocol):
    name: str

    def run(self, jobs: Sequence[Job], shots: int) -> list[dict[str, int]]: ...


def default_workers() -> int:
    return max(1, int(os.environ.get("FEATUREMETRIC_WORKERS", "1")))


def _run_one(args) -> dict[str, int]:
    job, noise, shots = args
    rng = np.random.default_rng(np.random.SeedSequence(list(job.seed)))
    return simulate_noisy_shots(job.circuit, noise, shots, rng)


@dataclass
class SimulatorBackend:
    noise: NoiseModel | None = None
    workers: int = field(default_factory=default_workers)

    @property
    def name(self) -> str:
        return "noiseless" if self.noise is None else "noisy"

    def run(self, jobs: Sequence[Job], shots: int) -> list[dict[str, int]]:
        args = [(job, self.noise, shots) for job in jobs]
        if self.workers <= 1 or len(jobs) < 2:
            return [_run_one(a) for a in args]
        with ProcessPoolExecutor(max_workers=self.workers) as pool:
            return list(pool.map(_run_one, args, chunksize=max(1, len(args) // (4 * self.workers))))


def NoiselessBackend(workers: int | None = None) -> SimulatorBackend:
    return SimulatorBackend(None, workers or default_workers())


def NoisyBackend(noise: NoiseModel, workers: int | None = None) -> SimulatorBackend:
    return SimulatorBackend(noise, workers or default_workers())


COUNTS_COLUMNS = ("vector_index", "circuit_index", "bitstring", "count", "role")


def write_counts(path: str | os.PathLike, jobs: Sequence[Job], counts: Sequence[Mapping[str, int]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COUNTS_COLUMNS)
        for job, hist in zip(jobs, counts):
            for bits, n in sorted(hist.items()):
                w.writerow([job.vector_index, job.circuit_index, bits, n, job.role])


def read_counts(path: str | os.PathLike) -> dict[tuple[int, int, str], dict[str, int]]:
    """Counts keyed by (vector index, circuit index, role); a missing role column means ``main``."""
    out: dict[tuple[int, int, str], dict[str, int]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = {"vector_index", "circuit_index", "bitstring", "count"} - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: counts file lacks columns {sorted(missing)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                key = (int(row["vector_index"]), int(row["circuit_index"]), row.get("role") or "main")
                bits, n = row["bitstring"].strip(), int(row["count"])
            except (TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: bad counts row {row}") from exc
            if not set(bits) <= {"0", "1"} or n < 0:
                raise ValueError(f"{path}:{lineno}: bad counts row {row}")
            hist = out.setdefault(key, {})
            hist[bits] = hist.get(bits, 0) + n
    return out


@dataclass
class ReplayBackend:
    """Serves recorded counts (e.g. imported device data) instead of simulating."""

    counts: dict[tuple[int, int, str], dict[str, int]]
    name: str = "replay"

    @classmethod
    def from_file(cls, path: str | os.PathLike) -> "ReplayBackend":
        return cls(read_counts(path))

    def run(self, jobs: Sequence[Job], shots: int) -> list[dict[str, int]]:
        out = []
        for job in jobs:
            key = (job.vector_index, job.circuit_index, job.role)
            if key not in self.counts:
                raise KeyError(f"replay data has no counts for vector {key[0]}, circuit {key[1]}, role {key[2]}")
            hist = self.counts[key]
            widths = {len(b) for b in hist}
            if widths != {job.circuit.width}:
                raise ValueError(f"replay counts for {key} have bit-string widths {sorted(widths)}")
            out.append(dict(sorted(hist.items())))
        return out
