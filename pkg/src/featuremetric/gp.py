"""Gaussian-process regression with a squared-exponential kernel.

Inputs pass through an :class:`InputTransform` (log2 on selected axes, then
per-axis standardization) and targets are mean-centered; all kernel algebra
happens in the transformed ("model") coordinates.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg, optimize

JITTER_LADDER = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6)
LOG_2PI = math.log(2.0 * math.pi)


class NumericalFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class KernelParams:
    eta: float
    rho: tuple[float, ...]
    sigma: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "rho", tuple(float(r) for r in np.atleast_1d(self.rho)))
        if not self.eta > 0:
            raise ValueError(f"eta must be positive, got {self.eta}")
        if any(not r > 0 for r in self.rho):
            raise ValueError(f"length scales must be positive, got {self.rho}")
        if not self.sigma >= 0:
            raise ValueError(f"sigma must be non-negative, got {self.sigma}")

    @property
    def dim(self) -> int:
        return len(self.rho)

    def to_dict(self) -> dict:
        return {"eta": self.eta, "rho": list(self.rho), "sigma": self.sigma}

    @classmethod
    def from_dict(cls, d: dict) -> "KernelParams":
        return cls(float(d["eta"]), tuple(d["rho"]), float(d["sigma"]))


# --- kernel and derivative covariances -----------------------------------------


def _as2d(a, dim: int) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2 or a.shape[1] != dim:
        raise ValueError(f"expected inputs with {dim} columns, got shape {np.shape(a)}")
    return a


def kernel_matrix(A, B, params: KernelParams) -> np.ndarray:
    A = _as2d(A, params.dim)
    B = _as2d(B, params.dim)
    inv = 1.0 / np.asarray(params.rho) ** 2
    diff = A[:, None, :] - B[None, :, :]
    return params.eta**2 * np.exp(-0.5 * np.einsum("ijd,d->ij", diff**2, inv))


def kernel(x, x2, params: KernelParams) -> float:
    x, x2 = np.atleast_1d(x), np.atleast_1d(x2)
    if x.shape != x2.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {x2.shape}")
    return float(kernel_matrix(x, x2, params)[0, 0])


def _check_dim(g: int, params: KernelParams) -> None:
    if not 0 <= g < params.dim:
        raise IndexError(f"dimension {g} outside 0..{params.dim - 1}")


def cov_grad_f(A, B, g: int, params: KernelParams) -> np.ndarray:
    """Cov(df(a)/da_g, f(b)) for rows a of A and b of B."""
    _check_dim(g, params)
    A = _as2d(A, params.dim)
    B = _as2d(B, params.dim)
    k = kernel_matrix(A, B, params)
    return -k * (A[:, None, g] - B[None, :, g]) / params.rho[g] ** 2


def cov_grad_grad(A, B, g: int, h: int, params: KernelParams) -> np.ndarray:
    """Cov(df(a)/da_g, df(b)/db_h)."""
    _check_dim(g, params)
    _check_dim(h, params)
    A = _as2d(A, params.dim)
    B = _as2d(B, params.dim)
    k = kernel_matrix(A, B, params)
    dg = A[:, None, g] - B[None, :, g]
    dh = A[:, None, h] - B[None, :, h]
    return k / params.rho[g] ** 2 * (float(g == h) - dg * dh / params.rho[h] ** 2)


def derivative_covariances(x, x2, dims: Sequence[int], params: KernelParams) -> float:
    """Scalar derivative covariance: ``dims=(g,)`` gives Cov(df/dx_g, f), ``(g, h)`` the second form."""
    dims = tuple(dims)
    if len(dims) == 1:
        return float(cov_grad_f(x, x2, dims[0], params)[0, 0])
    if len(dims) == 2:
        return float(cov_grad_grad(x, x2, dims[0], dims[1], params)[0, 0])
    raise ValueError("dims must name one or two dimensions")


# --- linear algebra -----------------------------------------------------------


def robust_cholesky(A: np.ndarray) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor, retrying with growing diagonal jitter."""
    scale = max(1.0, float(np.mean(np.abs(np.diag(A))))) if A.size else 1.0
    for jitter in JITTER_LADDER:
        try:
            L = linalg.cholesky(A + jitter * scale * np.eye(len(A)), lower=True)
        except linalg.LinAlgError:
            continue
        if np.all(np.isfinite(L)):
            return L, jitter * scale
    raise NumericalFailure(f"matrix not positive definite after jitter {JITTER_LADDER[-1]}")


def chol_solve(L: np.ndarray, b: np.ndarray) -> np.ndarray:
    return linalg.cho_solve((L, True), b)


# --- input handling ----------------------------------------------------------


@dataclass(frozen=True)
class InputTransform:
    """z = (t(x) - shift) / scale, with t = log2 on flagged axes."""

    log2: tuple[bool, ...]
    shift: tuple[float, ...]
    scale: tuple[float, ...]

    @property
    def dim(self) -> int:
        return len(self.log2)

    @classmethod
    def identity(cls, dim: int) -> "InputTransform":
        return cls((False,) * dim, (0.0,) * dim, (1.0,) * dim)

    @classmethod
    def fit(cls, X, log2: Sequence[bool] | None = None, standardize: bool = True) -> "InputTransform":
        X = np.asarray(X, dtype=float)
        if X.ndim != 2:
            raise ValueError("X must be 2-D")
        mask = tuple(bool(b) for b in (log2 if log2 is not None else [False] * X.shape[1]))
        if len(mask) != X.shape[1]:
            raise ValueError("log2 mask length differs from input dimension")
        T = _log_cols(X, mask)
        if standardize:
            shift = T.mean(axis=0)
            scale = T.std(axis=0)
            scale = np.where(scale > 0, scale, 1.0)
        else:
            shift, scale = np.zeros(X.shape[1]), np.ones(X.shape[1])
        return cls(mask, tuple(map(float, shift)), tuple(map(float, scale)))

    def apply(self, X) -> np.ndarray:
        X = _as2d(X, self.dim)
        return (_log_cols(X, self.log2) - np.asarray(self.shift)) / np.asarray(self.scale)

    def invert(self, Z) -> np.ndarray:
        T = _as2d(Z, self.dim) * np.asarray(self.scale) + np.asarray(self.shift)
        for j, flag in enumerate(self.log2):
            if flag:
                T[:, j] = 2.0 ** T[:, j]
        return T

    def to_dict(self) -> dict:
        return {"log2": list(self.log2), "shift": list(self.shift), "scale": list(self.scale)}

    @classmethod
    def from_dict(cls, d: dict) -> "InputTransform":
        return cls(tuple(bool(b) for b in d["log2"]), tuple(d["shift"]), tuple(d["scale"]))


def _log_cols(X: np.ndarray, mask: Sequence[bool]) -> np.ndarray:
    T = np.array(X, dtype=float)
    for j, flag in enumerate(mask):
        if flag:
            if np.any(T[:, j] <= 0):
                raise ValueError(f"log2 axis {j} has non-positive inputs")
            T[:, j] = np.log2(T[:, j])
    return T


# --- model -------------------------------------------------------------------


@dataclass(frozen=True)
class RestartResult:
    index: int
    start: tuple[float, ...]
    params: KernelParams | None
    log_ml: float
    success: bool
    message: str

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "start": list(self.start),
            "params": self.params.to_dict() if self.params else None,
            "log_ml": self.log_ml if math.isfinite(self.log_ml) else None,
            "success": self.success,
            "message": self.message,
        }


class GPModel:
    """Fitted (or fixed-hyperparameter) GP; immutable after construction."""

    def __init__(
        self,
        X,
        y,
        params: KernelParams,
        transform: InputTransform | None = None,
        center: bool = True,
        fit_info: dict | None = None,
    ):
        self.X = np.array(X, dtype=float)
        if self.X.ndim == 1:
            self.X = self.X[:, None]
        self.y = np.array(y, dtype=float).ravel()
        if len(self.X) != len(self.y):
            raise ValueError(f"{len(self.X)} inputs but {len(self.y)} targets")
        if len(self.y) == 0:
            raise ValueError("no training data")
        self.transform = transform or InputTransform.identity(self.X.shape[1])
        if params.dim != self.X.shape[1]:
            raise ValueError(f"{params.dim} length scales for {self.X.shape[1]}-D inputs")
        self.params = params
        self.y_mean = float(self.y.mean()) if center else 0.0
        self.fit_info = fit_info or {}
        self.Z = self.transform.apply(self.X)
        self.yc = self.y - self.y_mean
        A = kernel_matrix(self.Z, self.Z, params) + params.sigma**2 * np.eye(len(self.y))
        self.L, self.jitter = robust_cholesky(A)
        self.alpha = chol_solve(self.L, self.yc)
        for a in (self.X, self.y, self.Z, self.yc, self.L, self.alpha):
            a.setflags(write=False)

    @property
    def n(self) -> int:
        return len(self.y)

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def log_marginal_likelihood(self) -> float:
        return float(
            -0.5 * self.yc @ self.alpha - np.sum(np.log(np.diag(self.L))) - 0.5 * self.n * LOG_2PI
        )

    def predict(self, Xs) -> tuple[np.ndarray, np.ndarray]:
        Zs = self.transform.apply(Xs)
        Ks = kernel_matrix(Zs, self.Z, self.params)
        mean = Ks @ self.alpha + self.y_mean
        v = linalg.solve_triangular(self.L, Ks.T, lower=True)
        var = self.params.eta**2 - np.sum(v * v, axis=0)
        return mean, np.maximum(var, 0.0)

    def predict_gradient(self, Xs, dim: int) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and variance of df/dz_dim in model coordinates."""
        Zs = self.transform.apply(Xs)
        G = cov_grad_f(Zs, self.Z, dim, self.params)
        mean = G @ self.alpha
        v = linalg.solve_triangular(self.L, G.T, lower=True)
        var = self.params.eta**2 / self.params.rho[dim] ** 2 - np.sum(v * v, axis=0)
        return mean, np.maximum(var, 0.0)

    def length_scales_input_units(self) -> np.ndarray:
        """Length scales in (log2-)input units rather than standardized units."""
        return np.asarray(self.params.rho) * np.asarray(self.transform.scale)

    # -- persistence --

    def to_dict(self) -> dict:
        return {
            "kind": "gp",
            "params": self.params.to_dict(),
            "transform": self.transform.to_dict(),
            "y_mean": self.y_mean,
            "X": self.X.tolist(),
            "y": self.y.tolist(),
            "fit": self.fit_info,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GPModel":
        center = d["y_mean"] != 0.0
        m = cls(d["X"], d["y"], KernelParams.from_dict(d["params"]), InputTransform.from_dict(d["transform"]), center, d.get("fit", {}))
        if center and abs(m.y_mean - d["y_mean"]) > 1e-12 * max(1.0, abs(d["y_mean"])):
            raise ValueError("stored target mean does not match the training targets")
        return m

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")


def load_model(path: str | os.PathLike):
    """Load a regular or monotonic model file."""
    with open(path, encoding="utf-8") as fh:
        d = json.load(fh)
    if d.get("kind") == "monotonic":
        from .monotonic import MonotonicGPModel

        return MonotonicGPModel.from_dict(d)
    return GPModel.from_dict(d)


# --- fitting -----------------------------------------------------------------


@dataclass(frozen=True)
class GPFitConfig:
    restarts: int = 10
    seed: int = 0
    log_eta_bounds: tuple[float, float] = (math.log(1e-3), math.log(10.0))
    log_rho_bounds: tuple[float, float] = (math.log(1e-2), math.log(1e2))
    log_sigma_bounds: tuple[float, float] = (math.log(1e-6), math.log(1.0))
    fixed_sigma: float | None = None  # hold the noise level fixed instead of fitting it
    max_iter: int = 2000
    standardize: bool = True
    center: bool = True

    def __post_init__(self):
        if self.restarts < 1:
            raise ValueError("need at least one restart")


def log_ml_for(Z: np.ndarray, yc: np.ndarray, params: KernelParams) -> float:
    A = kernel_matrix(Z, Z, params) + params.sigma**2 * np.eye(len(yc))
    L, _ = robust_cholesky(A)
    alpha = chol_solve(L, yc)
    return float(-0.5 * yc @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * len(yc) * LOG_2PI)


def _unpack(theta: np.ndarray, dim: int, fixed_sigma: float | None) -> KernelParams:
    eta = math.exp(theta[0])
    rho = tuple(np.exp(theta[1 : 1 + dim]))
    sigma = fixed_sigma if fixed_sigma is not None else math.exp(theta[1 + dim])
    return KernelParams(eta, rho, sigma)


def fit(X, y, config: GPFitConfig = GPFitConfig(), log2: Sequence[bool] | None = None) -> GPModel:
    """Maximize the log marginal likelihood over (eta, rho, sigma) with multi-start Nelder-Mead."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float).ravel()
    if len(y) < 2:
        raise ValueError("need at least two training points")
    transform = InputTransform.fit(X, log2, config.standardize)
    Z = transform.apply(X)
    yc = y - (y.mean() if config.center else 0.0)
    dim = X.shape[1]

    bounds = [config.log_eta_bounds] + [config.log_rho_bounds] * dim
    if config.fixed_sigma is None:
        bounds.append(config.log_sigma_bounds)
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])

    def objective(theta):
        try:
            return -log_ml_for(Z, yc, _unpack(theta, dim, config.fixed_sigma))
        except NumericalFailure:
            return 1e300

    sd = float(np.std(yc)) or 1e-3
    default = [math.log(sd)] + [0.0] * dim
    if config.fixed_sigma is None:
        default.append(math.log(max(0.1 * sd, 1e-6)))
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 17]))
    log: list[RestartResult] = []
    for r in range(config.restarts):
        start = np.clip(np.array(default), lo, hi) if r == 0 else rng.uniform(lo, hi)
        res = optimize.minimize(
            objective,
            start,
            method="Nelder-Mead",
            bounds=list(zip(lo, hi)),
            options={"maxiter": config.max_iter, "xatol": 1e-6, "fatol": 1e-9},
        )
        ok = bool(np.isfinite(res.fun) and res.fun < 1e299)
        params = _unpack(res.x, dim, config.fixed_sigma) if ok else None
        log.append(RestartResult(r, tuple(map(float, start)), params, -float(res.fun) if ok else -math.inf, ok, str(res.message)))
    good = [r for r in log if r.success]
    if not good:
        raise NumericalFailure("every restart failed to factorize the kernel matrix")
    best = max(good, key=lambda r: (r.log_ml, -r.index))
    info = {
        "optimizer": "nelder-mead",
        "seed": config.seed,
        "restarts": [r.to_dict() for r in log],
        "selected": best.index,
    }
    return GPModel(X, y, best.params, transform, config.center, info)
