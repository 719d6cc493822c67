"""Feature spaces and the selection of feature vectors (grid or Sobol)."""

from __future__ import annotations

import itertools
import json
import math
import os
import warnings
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.stats import qmc


class EmptyDesign(ValueError):
    pass


LINEAR = "linear"
LOG2 = "log2"


@dataclass(frozen=True)
class FeatureAxis:
    name: str
    scale: str = LINEAR
    min: float = 0.0
    max: float = 1.0
    integer_valued: bool = False

    def __post_init__(self):
        if self.scale not in (LINEAR, LOG2):
            raise ValueError(f"axis {self.name}: unknown scale {self.scale!r}")
        if self.min > self.max:
            raise ValueError(f"axis {self.name}: min {self.min} exceeds max {self.max}")
        if self.scale == LOG2 and self.min <= 0:
            raise ValueError(f"axis {self.name}: log2 scale needs min > 0")

    def contains(self, value: float) -> bool:
        if self.integer_valued and value != int(value):
            return False
        return self.min <= value <= self.max

    def from_unit(self, u: float) -> float:
        """Map a unit-interval coordinate onto the axis (in log space for log2 axes)."""
        if self.scale == LOG2:
            lo, hi = math.log2(self.min), math.log2(self.max)
            v = 2.0 ** (lo + u * (hi - lo))
        else:
            v = self.min + u * (self.max - self.min)
        if self.integer_valued:
            v = math.floor(v + 0.5)
            v = int(min(max(v, math.ceil(self.min)), math.floor(self.max)))
        return v

    def grid_values(self) -> list[float]:
        """Default grid: every integer (linear int), powers of two (log2 int), else the endpoints."""
        if self.integer_valued and self.scale == LINEAR:
            return list(range(math.ceil(self.min), math.floor(self.max) + 1))
        if self.integer_valued:
            lo, hi = math.ceil(math.log2(self.min)), math.floor(math.log2(self.max))
            return [2**k for k in range(lo, hi + 1)]
        return sorted({self.min, self.max})

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "scale": self.scale,
            "min": self.min,
            "max": self.max,
            "integer_valued": self.integer_valued,
        }

    @classmethod
    def parse(cls, spec: str) -> "FeatureAxis":
        """``name:scale:kind:min:max`` with scale in {linear, log2} and kind in {int, real}."""
        parts = spec.split(":")
        if len(parts) != 5:
            raise ValueError(f"axis spec {spec!r} is not name:scale:kind:min:max")
        name, scale, kind, lo, hi = parts
        if kind not in ("int", "real"):
            raise ValueError(f"axis spec {spec!r}: kind must be int or real")
        return cls(name, scale, float(lo), float(hi), kind == "int")


@dataclass(frozen=True)
class FeatureSpace:
    axes: tuple[FeatureAxis, ...]

    def __post_init__(self):
        object.__setattr__(self, "axes", tuple(self.axes))
        if not self.axes:
            raise ValueError("a feature space needs at least one axis")
        names = [a.name for a in self.axes]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate axis names in {names}")

    @property
    def names(self) -> list[str]:
        return [a.name for a in self.axes]

    @property
    def dim(self) -> int:
        return len(self.axes)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"no axis named {name!r}; axes are {self.names}") from None

    def log2_mask(self) -> list[bool]:
        return [a.scale == LOG2 for a in self.axes]


@dataclass
class DesignPlan:
    space: FeatureSpace
    vectors: list[tuple[float, ...]]
    k: int
    seed: int
    method: str
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.vectors:
            raise EmptyDesign("design has no feature vectors")
        if self.k < 1:
            raise ValueError("K must be at least 1")
        for i, v in enumerate(self.vectors):
            if len(v) != self.space.dim:
                raise ValueError(f"vector {i} has {len(v)} entries for {self.space.dim} axes")
            for axis, value in zip(self.space.axes, v):
                if not axis.contains(value):
                    raise ValueError(f"vector {i}: {axis.name}={value} outside its axis")

    @property
    def m(self) -> int:
        return len(self.vectors)

    def array(self) -> np.ndarray:
        return np.array(self.vectors, dtype=float)

    def to_json(self) -> str:
        doc = {
            "space": [a.to_dict() for a in self.space.axes],
            "method": self.method,
            "seed": self.seed,
            "M": self.m,
            "K": self.k,
            "vectors": [list(v) for v in self.vectors],
            "extra": self.extra,
        }
        return json.dumps(doc, indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "DesignPlan":
        doc = json.loads(text)
        space = FeatureSpace(tuple(FeatureAxis(**a) for a in doc["space"]))
        vectors = [
            tuple(int(x) if ax.integer_valued else float(x) for ax, x in zip(space.axes, v))
            for v in doc["vectors"]
        ]
        plan = cls(space, vectors, int(doc["K"]), int(doc["seed"]), doc["method"], doc.get("extra", {}))
        if int(doc["M"]) != plan.m:
            raise ValueError(f"design file declares M={doc['M']} but lists {plan.m} vectors")
        return plan

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path: str | os.PathLike) -> "DesignPlan":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(fh.read())


def _typed(axis: FeatureAxis, value):
    return int(value) if axis.integer_valued else float(value)


def grid_design(
    space: FeatureSpace,
    values: Mapping[str, Sequence[float]] | Sequence[Sequence[float]] | None = None,
    exclude: Callable[[dict], bool] | None = None,
    k: int = 1,
    seed: int = 0,
) -> DesignPlan:
    """Cartesian product of per-axis value lists minus excluded points.

    ``exclude`` receives ``{axis name: value}`` and returns True to drop a point.
    """
    if values is None:
        lists = [a.grid_values() for a in space.axes]
    elif isinstance(values, Mapping):
        lists = [list(values[a.name]) if a.name in values else a.grid_values() for a in space.axes]
    else:
        lists = [list(v) for v in values]
    for axis, vals in zip(space.axes, lists):
        for v in vals:
            if not axis.contains(v):
                raise ValueError(f"value {v} is not on axis {axis.name}")
    seen = set()
    vectors = []
    for point in itertools.product(*[sorted(set(v)) for v in lists]):
        point = tuple(_typed(a, x) for a, x in zip(space.axes, point))
        if exclude is not None and exclude(dict(zip(space.names, point))):
            continue
        if point not in seen:
            seen.add(point)
            vectors.append(point)
    if not vectors:
        raise EmptyDesign("every grid point was excluded")
    return DesignPlan(space, vectors, k, seed, "grid")


MAX_SOBOL_DIM = 21201


def sobol_points(dim: int, m: int) -> np.ndarray:
    """First ``m`` points of the unscrambled Sobol sequence after the origin."""
    if not 1 <= dim <= MAX_SOBOL_DIM:
        raise ValueError(f"Sobol dimension {dim} unsupported (1..{MAX_SOBOL_DIM})")
    if m < 1:
        raise ValueError("need at least one point")
    engine = qmc.Sobol(d=dim, scramble=False)
    engine.fast_forward(1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)  # balance warning for non power-of-two m
        return engine.random(m)


def sobol_design(space: FeatureSpace, m: int, seed: int = 0, k: int = 1) -> DesignPlan:
    """Quasirandom design: Sobol points mapped onto each axis (log space for log2 axes)."""
    pts = sobol_points(space.dim, m)
    vectors = [tuple(a.from_unit(float(u)) for a, u in zip(space.axes, row)) for row in pts]
    return DesignPlan(space, vectors, k, seed, "sobol")


# --- canonical spaces ----------------------------------------------------------


def width_depth_density_space(
    w: tuple[float, float], d: tuple[float, float], xi: tuple[float, float], log_wd: bool = True
) -> FeatureSpace:
    scale = LOG2 if log_wd else LINEAR
    return FeatureSpace(
        (
            FeatureAxis("w", scale, w[0], w[1], True),
            FeatureAxis("d", scale, d[0], d[1], True),
            FeatureAxis("xi", LINEAR, xi[0], xi[1], False),
        )
    )


def max_area_exclusion(limit: float) -> Callable[[dict], bool]:
    """Drop points whose circuit area ``w * d`` exceeds ``limit``."""
    return lambda p: p["w"] * p["d"] > limit


# w*d <= 3584 keeps 177 (w, d) shapes of the 26 x 9 grid, i.e. 531 vectors with 3 densities
ALGIERS_AREA_LIMIT = 3584


def algiers_grid(k: int = 10, seed: int = 0) -> DesignPlan:
    space = width_depth_density_space((2, 27), (4, 1024), (0.0, 0.25))
    values = {"w": range(2, 28), "d": [2**j for j in range(2, 11)], "xi": [0.0, 0.125, 0.25]}
    return grid_design(space, values, max_area_exclusion(ALGIERS_AREA_LIMIT), k=k, seed=seed)


def montreal_grid(k: int = 20, seed: int = 0, area_limit: float = 1024) -> DesignPlan:
    space = FeatureSpace(
        (FeatureAxis("w", LOG2, 2, 27, True), FeatureAxis("d", LOG2, 4, 4096, True))
    )
    values = {"w": range(2, 28), "d": [2**j for j in range(2, 13)]}
    return grid_design(space, values, max_area_exclusion(area_limit), k=k, seed=seed)


def forte_sobol(m: int = 256, k: int = 30, seed: int = 0) -> DesignPlan:
    space = width_depth_density_space((2, 20), (2, 128), (0.0, 0.5))
    return sobol_design(space, m, seed=seed, k=k)
