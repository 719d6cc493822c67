"""Capability datasets, monotonicity and prediction-error metrics, heatmaps."""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .design import LOG2, DesignPlan, FeatureSpace
from .estimators import CapabilityRecord, bootstrap_stderr
from .sampling import STREAM_BOOTSTRAP, derive_rng


class MissingRecords(ValueError):
    def __init__(self, gaps: list[tuple[int, int]]):
        shown = ", ".join(f"({i},{j})" for i, j in gaps[:20])
        more = f" and {len(gaps) - 20} more" if len(gaps) > 20 else ""
        super().__init__(f"no result for (vector, circuit) {shown}{more}")
        self.gaps = gaps


# --- results files -----------------------------------------------------------

RESULTS_COLUMNS = ("vector_index", "circuit_index", "estimator", "estimate", "shots", "stderr")


def _fmt(x: float) -> str:
    return repr(float(x))


def write_results(path: str | os.PathLike, records: Iterable[CapabilityRecord]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULTS_COLUMNS)
        for r in sorted(records, key=lambda r: (r.vector_index, r.circuit_index)):
            se = "" if r.stderr is None else _fmt(r.stderr)
            w.writerow([r.vector_index, r.circuit_index, r.kind, _fmt(r.estimate), r.shots, se])


def read_results(path: str | os.PathLike) -> list[CapabilityRecord]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = set(RESULTS_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: results file lacks columns {sorted(missing)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                se = row["stderr"].strip()
                out.append(
                    CapabilityRecord(
                        int(row["vector_index"]),
                        int(row["circuit_index"]),
                        float(row["estimate"]),
                        int(row["shots"]),
                        row["estimator"],
                        float(se) if se else None,
                    )
                )
            except (TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: bad results row {row}") from exc
    return out


# --- dataset -----------------------------------------------------------------


@dataclass(frozen=True)
class VectorRecord:
    index: int
    vector: tuple[float, ...]
    estimates: tuple[float, ...]
    mean: float
    stderr: float


@dataclass
class CapabilityDataset:
    space: FeatureSpace
    records: list[VectorRecord]
    kind: str
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        ks = {len(r.estimates) for r in self.records}
        if len(ks) > 1:
            raise ValueError(f"vectors have differing circuit counts {sorted(ks)}")

    @property
    def n(self) -> int:
        return len(self.records)

    @property
    def X(self) -> np.ndarray:
        return np.array([r.vector for r in self.records], dtype=float)

    @property
    def means(self) -> np.ndarray:
        return np.array([r.mean for r in self.records])

    @property
    def stderrs(self) -> np.ndarray:
        return np.array([r.stderr for r in self.records])

    @property
    def indices(self) -> list[int]:
        return [r.index for r in self.records]

    def subset(self, positions: Sequence[int]) -> "CapabilityDataset":
        return CapabilityDataset(self.space, [self.records[p] for p in positions], self.kind, dict(self.extra))


def assemble_dataset(
    design: DesignPlan,
    records: Iterable[CapabilityRecord],
    resamples: int = 1000,
    skip_vectors: Iterable[int] = (),
) -> CapabilityDataset:
    """Group per-circuit estimates by vector; means plus bootstrap stderrs.

    Vectors in ``skip_vectors`` (e.g. infeasible ones) are left out.
    """
    skip = set(skip_vectors)
    table: dict[tuple[int, int], CapabilityRecord] = {}
    kinds = set()
    for r in records:
        key = (r.vector_index, r.circuit_index)
        if key in table:
            raise ValueError(f"duplicate result for vector {key[0]}, circuit {key[1]}")
        if not (0 <= r.vector_index < design.m and 0 <= r.circuit_index < design.k):
            raise ValueError(f"result for ({key[0]},{key[1]}) lies outside the design")
        table[key] = r
        kinds.add(r.kind)
    if len(kinds) > 1:
        raise ValueError(f"mixed estimator kinds {sorted(kinds)}")
    gaps = [(i, j) for i in range(design.m) if i not in skip for j in range(design.k) if (i, j) not in table]
    if gaps:
        raise MissingRecords(gaps)
    out = []
    for i, v in enumerate(design.vectors):
        if i in skip:
            continue
        vals = tuple(table[(i, j)].estimate for j in range(design.k))
        rng = derive_rng(design.seed, STREAM_BOOTSTRAP, i)
        out.append(VectorRecord(i, tuple(v), vals, float(np.mean(vals)), bootstrap_stderr(vals, rng, resamples)))
    if not out:
        raise ValueError("dataset is empty")
    return CapabilityDataset(design.space, out, kinds.pop() if kinds else "", {"skipped": sorted(skip)})


def write_dataset(path: str | os.PathLike, ds: CapabilityDataset) -> None:
    """Per-vector means, stderrs and the raw per-circuit estimates (for histograms)."""
    k = len(ds.records[0].estimates)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["vector_index", *ds.space.names, "mean", "stderr", *[f"s{j}" for j in range(k)]])
        for r in ds.records:
            w.writerow([r.index, *r.vector, _fmt(r.mean), _fmt(r.stderr), *map(_fmt, r.estimates)])


# --- metrics -----------------------------------------------------------------


@dataclass(frozen=True)
class DeltaEntry:
    vector_index: int
    delta: float
    stderr: float
    comparators: int


@dataclass
class MonotonicityReport:
    features: tuple[str, ...]
    entries: list[DeltaEntry]
    no_comparator: list[int]

    @property
    def deltas(self) -> np.ndarray:
        return np.array([e.delta for e in self.entries])

    def mass_below(self, threshold: float) -> float:
        d = self.deltas
        return float(np.mean(d < threshold)) if d.size else 0.0


def delta_v(
    X,
    means,
    features: Sequence[int] | None = None,
    stderrs=None,
    indices: Sequence[int] | None = None,
    names: Sequence[str] | None = None,
) -> MonotonicityReport:
    """Minimum of s(v') - s(v) over all v' strictly below v in the chosen features.

    v' is strictly below v when it is componentwise <= and differs somewhere;
    identical (projected) vectors are not comparators of each other.
    """
    X = np.asarray(X, dtype=float)
    s = np.asarray(means, dtype=float)
    if len(X) < 2:
        raise ValueError("need at least two vectors")
    feats = list(range(X.shape[1])) if features is None else list(features)
    P = X[:, feats]
    se = np.zeros(len(s)) if stderrs is None else np.asarray(stderrs, dtype=float)
    idx = list(range(len(s))) if indices is None else list(indices)
    entries, lonely = [], []
    for v in range(len(P)):
        below = np.all(P <= P[v], axis=1) & np.any(P < P[v], axis=1)
        cand = np.flatnonzero(below)
        if cand.size == 0:
            lonely.append(idx[v])
            continue
        diffs = s[cand] - s[v]
        k = int(np.argmin(diffs))
        entries.append(DeltaEntry(idx[v], float(diffs[k]), float(math.hypot(se[v], se[cand[k]])), int(cand.size)))
    label = tuple(names[f] for f in feats) if names is not None else tuple(map(str, feats))
    return MonotonicityReport(label, entries, lonely)


def monotonicity_reports(ds: CapabilityDataset) -> dict[str, MonotonicityReport]:
    """The full-feature report plus one per dropped feature (keyed ``"-name"``)."""
    names = ds.space.names
    D = len(names)
    out = {"full": delta_v(ds.X, ds.means, None, ds.stderrs, ds.indices, names)}
    for drop in range(D):
        keep = [f for f in range(D) if f != drop]
        out[f"-{names[drop]}"] = delta_v(ds.X, ds.means, keep, ds.stderrs, ds.indices, names)
    return out


def write_monotonicity(path: str | os.PathLike, reports: Mapping[str, MonotonicityReport]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subset", "vector_index", "delta", "stderr", "comparators"])
        for key, rep in reports.items():
            for e in rep.entries:
                w.writerow([key, e.vector_index, _fmt(e.delta), _fmt(e.stderr), e.comparators])


def delta_abs(predictions, observations) -> float:
    p = np.asarray(predictions, dtype=float).ravel()
    o = np.asarray(observations, dtype=float).ravel()
    if p.shape != o.shape:
        raise ValueError(f"length mismatch: {p.size} predictions, {o.size} observations")
    if p.size == 0:
        raise ValueError("no values")
    return float(np.mean(np.abs(p - o)))


@dataclass(frozen=True)
class SplitSpec:
    fraction: float
    seed: int
    train: tuple[int, ...]
    test: tuple[int, ...]


def split(n: int, fraction: float, seed: int) -> SplitSpec:
    """Uniform random partition with ``floor(fraction * n)`` training points."""
    if not 0 < fraction < 1:
        raise ValueError(f"fraction must lie strictly between 0 and 1, got {fraction}")
    n_train = int(math.floor(fraction * n))
    if n_train == 0 or n_train == n:
        raise ValueError(f"fraction {fraction} of {n} points leaves one side empty")
    perm = np.random.default_rng(np.random.SeedSequence([seed, 31, n])).permutation(n)
    return SplitSpec(fraction, seed, tuple(sorted(map(int, perm[:n_train]))), tuple(sorted(map(int, perm[n_train:]))))


# --- heatmaps ----------------------------------------------------------------


@dataclass
class Heatmap:
    x_axis: str
    y_axis: str
    x: np.ndarray
    y: np.ndarray
    values: np.ndarray  # shape (len(y), len(x))
    fixed: dict

    def write(self, path: str | os.PathLike) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["fixed", *[f"{k}={v}" for k, v in sorted(self.fixed.items())]])
            w.writerow([f"{self.y_axis}\\{self.x_axis}", *map(_fmt, self.x)])
            for yv, row in zip(self.y, self.values):
                w.writerow([_fmt(yv), *("" if np.isnan(v) else _fmt(v) for v in row)])


def axis_grid(space: FeatureSpace, name: str, lo: float, hi: float, count: int) -> np.ndarray:
    axis = space.axes[space.index(name)]
    if count < 1:
        raise ValueError("grid resolution must be positive")
    if count == 1:
        return np.array([float(lo)])
    if axis.scale == LOG2:
        return np.exp2(np.linspace(np.log2(lo), np.log2(hi), count))
    return np.linspace(lo, hi, count)


def continuous_volumetric_grid(
    predict: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]],
    space: FeatureSpace,
    x_axis: str,
    y_axis: str,
    fixed: Mapping[str, float] | None = None,
    resolution: int | tuple[int, int] = 32,
    x_range: tuple[float, float] | None = None,
    y_range: tuple[float, float] | None = None,
) -> Heatmap:
    """Model predictions on a grid over two axes, clamped to [0, 1]."""
    fixed = dict(fixed or {})
    ix, iy = space.index(x_axis), space.index(y_axis)
    if ix == iy:
        raise ValueError("the two plotting axes must differ")
    for name in space.names:
        if name not in (x_axis, y_axis) and name not in fixed:
            raise ValueError(f"feature {name!r} needs a fixed value")
    unknown = set(fixed) - set(space.names)
    if unknown:
        raise ValueError(f"fixed features {sorted(unknown)} are not in the model space")
    rx, ry = (resolution, resolution) if isinstance(resolution, int) else resolution
    ax, ay = space.axes[ix], space.axes[iy]
    xs = axis_grid(space, x_axis, *(x_range or (ax.min, ax.max)), rx)
    ys = axis_grid(space, y_axis, *(y_range or (ay.min, ay.max)), ry)
    pts = np.empty((ry * rx, space.dim))
    for name, value in fixed.items():
        pts[:, space.index(name)] = value
    gx, gy = np.meshgrid(xs, ys)
    pts[:, ix] = gx.ravel()
    pts[:, iy] = gy.ravel()
    mean, _ = predict(pts)
    return Heatmap(x_axis, y_axis, xs, ys, np.clip(mean, 0.0, 1.0).reshape(ry, rx), fixed)


def volumetric_summary(ds: CapabilityDataset, x_axis: str, y_axis: str, fixed: Mapping[str, float] | None = None) -> Heatmap:
    """Observed mean capability on the design's (x, y) shapes; blanks where not run."""
    fixed = dict(fixed or {})
    ix, iy = ds.space.index(x_axis), ds.space.index(y_axis)
    keep = [
        r for r in ds.records
        if all(math.isclose(r.vector[ds.space.index(k)], v) for k, v in fixed.items())
    ]
    xs = np.array(sorted({r.vector[ix] for r in keep}), dtype=float)
    ys = np.array(sorted({r.vector[iy] for r in keep}), dtype=float)
    acc = np.zeros((len(ys), len(xs)))
    cnt = np.zeros_like(acc)
    for r in keep:
        a, b = int(np.searchsorted(ys, r.vector[iy])), int(np.searchsorted(xs, r.vector[ix]))
        acc[a, b] += r.mean
        cnt[a, b] += 1
    with np.errstate(invalid="ignore"):
        vals = np.where(cnt > 0, acc / np.maximum(cnt, 1), np.nan)
    return Heatmap(x_axis, y_axis, xs, ys, vals, fixed)


# --- model-error protocol ------------------------------------------------------


@dataclass(frozen=True)
class ProtocolRow:
    fraction: float
    instance: int
    variant: str
    delta_abs: float
    n_train: int
    n_test: int
    converged: bool = True


def model_error_protocol(
    ds: CapabilityDataset,
    fractions: Sequence[float] = (0.5,),
    instances: int = 20,
    seed: int = 0,
    variants: Sequence[str] = ("gp", "monotonic"),
    fit_config=None,
    virtual_points: int = 30,
    ep_config=None,
) -> list[ProtocolRow]:
    """Repeated random train/test splits; delta_abs of each model variant on the test side."""
    from . import gp as gpmod
    from . import monotonic as mono

    fit_config = fit_config or gpmod.GPFitConfig()
    ep_config = ep_config or mono.EPConfig()
    log2 = ds.space.log2_mask()
    X, y = ds.X, ds.means
    rows = []
    for frac in fractions:
        for inst in range(instances):
            sp = split(ds.n, frac, seed * 100003 + inst)
            tr, te = list(sp.train), list(sp.test)
            cfg = gpmod.GPFitConfig(**{**fit_config.__dict__, "seed": seed * 100003 + inst})
            base = gpmod.fit(X[tr], y[tr], cfg, log2)
            for variant in variants:
                converged = True
                if variant == "gp":
                    pred = base.predict(X[te])[0]
                elif variant == "monotonic":
                    vp = mono.place_virtual_points(base.Z, virtual_points)
                    model = mono.ep_fit(base, vp, ep_config)
                    converged = model.converged
                    pred = model.predict(X[te], force=True)[0]
                else:
                    raise ValueError(f"unknown model variant {variant!r}")
                err = delta_abs(np.clip(pred, 0, 1), y[te])
                rows.append(ProtocolRow(frac, inst, variant, err, len(tr), len(te), converged))
    return rows


def summarize_protocol(rows: Sequence[ProtocolRow]) -> list[dict]:
    groups: dict[tuple[float, str], list[float]] = {}
    unconverged: dict[tuple[float, str], int] = {}
    for r in rows:
        groups.setdefault((r.fraction, r.variant), []).append(r.delta_abs)
        if not r.converged:
            unconverged[(r.fraction, r.variant)] = unconverged.get((r.fraction, r.variant), 0) + 1
    return [
        {
            "fraction": f,
            "variant": v,
            "instances": len(d),
            "mean": float(np.mean(d)),
            "sd": float(np.std(d, ddof=1)) if len(d) > 1 else 0.0,
            "unconverged": unconverged.get((f, v), 0),
        }
        for (f, v), d in sorted(groups.items())
    ]
