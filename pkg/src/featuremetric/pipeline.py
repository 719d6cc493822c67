"""Sample, execute and estimate every circuit of a design."""

from __future__ import annotations

import csv
import hashlib
import math
import os
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .circuit import Circuit, ConnectivityGraph
from .design import DesignPlan
from .estimators import (
    SRDFE,
    SUCCESS_PROB,
    CapabilityRecord,
    build_srdfe_bundle,
    estimate_p3_expectation,
    estimate_success_probability,
    srdfe_estimates,
)
from .noise import Backend, Job
from .sampling import (
    STREAM_CIRCUIT,
    STREAM_SHOTS,
    STREAM_SRDFE,
    BadBenchmarkDepth,
    DensityInfeasible,
    FixedDensitySamplerConfig,
    MirrorSamplerConfig,
    NoEdges,
    derive_rng,
    sample_fixed_density_circuit,
    sample_mirror_circuit,
    stream_seed,
)
from .stabilizer import simulate_ideal_output

MIRROR = "mirror"
FIXED_DENSITY = "fixed-density"


@dataclass(frozen=True)
class RunConfig:
    circuits: str = MIRROR
    estimator: str = SUCCESS_PROB
    shots: int = 1024
    connectivity: ConnectivityGraph | None = None
    seed: int | None = None  # defaults to the design seed

    def __post_init__(self):
        if self.circuits not in (MIRROR, FIXED_DENSITY):
            raise ValueError(f"unknown circuit family {self.circuits!r}")
        if self.estimator not in (SUCCESS_PROB, SRDFE):
            raise ValueError(f"unknown estimator {self.estimator!r}")
        if self.estimator == SUCCESS_PROB and self.circuits != MIRROR:
            raise ValueError("success probability needs definite-outcome (mirror) circuits")
        if self.shots < 1:
            raise ValueError("shots must be positive")


@dataclass
class RunOutput:
    jobs: list[Job]
    counts: list[dict[str, int]]
    records: list[CapabilityRecord]
    errors: list[tuple[int, int, str]] = field(default_factory=list)
    targets: dict[tuple[int, int], str] = field(default_factory=dict)

    @property
    def failed_vectors(self) -> list[int]:
        return sorted({i for i, _, _ in self.errors})


def _feature(design: DesignPlan, v, name: str, default=None):
    names = design.space.names
    if name in names:
        return v[names.index(name)]
    if default is None:
        raise ValueError(f"design has no {name!r} axis")
    return default


def sample_design_circuits(design: DesignPlan, cfg: RunConfig):
    """Yield (i, j, circuit or None, error message or None) for every design slot."""
    seed = design.seed if cfg.seed is None else cfg.seed
    graph = cfg.connectivity
    if graph is None:
        w_max = int(max(_feature(design, v, "w") for v in design.vectors))
        graph = ConnectivityGraph.all_to_all(w_max)
    for i, v in enumerate(design.vectors):
        w = int(_feature(design, v, "w"))
        d = int(_feature(design, v, "d"))
        xi = float(_feature(design, v, "xi", 0.0))
        for j in range(design.k):
            rng = derive_rng(seed, STREAM_CIRCUIT, i, j)
            try:
                if cfg.circuits == MIRROR:
                    c = sample_mirror_circuit(w, d, xi, MirrorSamplerConfig(graph), rng)
                else:
                    c = sample_fixed_density_circuit(w, d, xi, FixedDensitySamplerConfig(graph), rng)
            except (DensityInfeasible, BadBenchmarkDepth, NoEdges, ValueError) as exc:
                yield i, j, None, f"{type(exc).__name__}: {exc}"
                continue
            yield i, j, c, None


def run_design(design: DesignPlan, backend: Backend, cfg: RunConfig) -> RunOutput:
    seed = design.seed if cfg.seed is None else cfg.seed
    jobs: list[Job] = []
    errors: list[tuple[int, int, str]] = []
    targets: dict[tuple[int, int], str] = {}
    p3: dict[tuple[int, int], tuple] = {}
    for i, j, c, err in sample_design_circuits(design, cfg):
        if err is not None:
            errors.append((i, j, err))
            continue
        if cfg.estimator == SUCCESS_PROB:
            targets[(i, j)] = simulate_ideal_output(c)
            jobs.append(Job(i, j, "main", c, stream_seed(seed, STREAM_SHOTS, i, j, 0)))
        else:
            bundle = build_srdfe_bundle(c, derive_rng(seed, STREAM_SRDFE, i, j))
            p3[(i, j)] = (bundle.p3, bundle.null_p3, c.width)
            jobs.append(Job(i, j, "main", bundle.dfe_circuit, stream_seed(seed, STREAM_SHOTS, i, j, 0)))
            jobs.append(Job(i, j, "null", bundle.null_circuit, stream_seed(seed, STREAM_SHOTS, i, j, 1)))
    # a vector with any failed circuit is dropped whole
    bad = {i for i, _, _ in errors}
    jobs = [job for job in jobs if job.vector_index not in bad]
    counts = backend.run(jobs, cfg.shots)
    records: list[CapabilityRecord] = []
    if cfg.estimator == SUCCESS_PROB:
        for job, hist in zip(jobs, counts):
            n = sum(hist.values())
            p = estimate_success_probability(hist, targets[(job.vector_index, job.circuit_index)], n)
            records.append(CapabilityRecord(job.vector_index, job.circuit_index, p, n, SUCCESS_PROB, math.sqrt(p * (1 - p) / n)))
    else:
        per_vector: dict[int, dict[int, dict[str, float]]] = defaultdict(dict)
        shots_of: dict[tuple[int, int], int] = {}
        for job, hist in zip(jobs, counts):
            key = (job.vector_index, job.circuit_index)
            op = p3[key][0] if job.role == "main" else p3[key][1]
            per_vector[job.vector_index].setdefault(job.circuit_index, {})[job.role] = estimate_p3_expectation(hist, op)
            if job.role == "main":
                shots_of[key] = sum(hist.values())
        for i in sorted(per_vector):
            js = sorted(per_vector[i])
            n = int(p3[(i, js[0])][2])
            est = srdfe_estimates([per_vector[i][j]["main"] for j in js], [per_vector[i][j]["null"] for j in js], n)
            for j, e in zip(js, est):
                records.append(CapabilityRecord(i, j, float(e), shots_of[(i, j)], SRDFE, None))
    return RunOutput(jobs, counts, records, errors, targets)


# --- artifacts ---------------------------------------------------------------


def file_digest(path: str | os.PathLike) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def write_circuits(path: str | os.PathLike, jobs: list[Job], design_digest: str, targets=None) -> None:
    """Circuit batch: a design header, then one block per circuit."""
    targets = targets or {}
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# design-sha256 {design_digest}\n")
        for job in jobs:
            tgt = targets.get((job.vector_index, job.circuit_index))
            extra = f" target={tgt}" if tgt is not None and job.role == "main" else ""
            fh.write(f"## vector={job.vector_index} circuit={job.circuit_index} role={job.role}{extra}\n")
            fh.write(job.circuit.serialize())
            if not job.circuit.serialize().endswith("\n"):
                fh.write("\n")


def read_circuits(path: str | os.PathLike) -> list[tuple[dict, Circuit]]:
    out = []
    header, lines = None, []

    def flush():
        if header is not None:
            out.append((header, Circuit.parse("\n".join(lines))))

    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            line = raw.rstrip("\n")
            if line.startswith("## "):
                flush()
                header = dict(kv.split("=", 1) for kv in line[3:].split())
                lines = []
            elif line.startswith("# ") or not line.strip():
                continue
            else:
                lines.append(line)
    flush()
    return out


def write_errors(path: str | os.PathLike, errors: list[tuple[int, int, str]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["vector_index", "circuit_index", "error"])
        for row in sorted(errors):
            w.writerow(row)


def read_errors(path: str | os.PathLike) -> list[tuple[int, int, str]]:
    if not os.path.exists(path):
        return []
    with open(path, newline="", encoding="utf-8") as fh:
        return [(int(r["vector_index"]), int(r["circuit_index"]), r["error"]) for r in csv.DictReader(fh)]
