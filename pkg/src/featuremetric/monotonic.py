"""Monotonic GP regression: probit derivative-sign constraints fitted by EP.

Each virtual point ``x_i`` constrains ``g_i = s_i * df(x_i)/dx_{d_i}`` to be
non-negative through the factor ``Phi(g_i / nu)``; a declared sign
``s = -1`` turns the constraint into "decreasing". The Gaussian likelihood
of the training targets is handled exactly, so EP only iterates over the
``M`` derivative sites, starting from the Gaussian marginal of ``g`` given
``y``. Predictions use the joint (function, derivative) covariance.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg, optimize
from scipy.special import log_ndtr

from .design import sobol_points
from .gp import (
    LOG_2PI,
    GPModel,
    InputTransform,
    KernelParams,
    NumericalFailure,
    chol_solve,
    cov_grad_f,
    cov_grad_grad,
    kernel_matrix,
    robust_cholesky,
)

SITE_PRECISION_FLOOR = 1e-10


class EPNotConverged(RuntimeError):
    pass


class EPDivergence(NumericalFailure):
    def __init__(self, message: str, trace: list[dict]):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class VirtualPoints:
    """Constraint locations in model (transformed) coordinates."""

    Xm: np.ndarray
    dims: tuple[int, ...]
    signs: tuple[int, ...]  # one per input dimension

    def __post_init__(self):
        Xm = np.asarray(self.Xm, dtype=float).reshape(-1, len(self.signs))
        object.__setattr__(self, "Xm", Xm)
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "signs", tuple(int(s) for s in self.signs))
        if len(self.dims) != len(Xm):
            raise ValueError(f"{len(Xm)} points but {len(self.dims)} constrained dimensions")
        if any(not 0 <= d < len(self.signs) for d in self.dims):
            raise ValueError(f"constrained dimensions {self.dims} outside 0..{len(self.signs) - 1}")
        if any(s not in (1, -1) for s in self.signs):
            raise ValueError(f"signs must be +1 or -1, got {self.signs}")

    @property
    def m(self) -> int:
        return len(self.dims)

    @property
    def point_signs(self) -> np.ndarray:
        return np.array([self.signs[d] for d in self.dims], dtype=float)

    @classmethod
    def empty(cls, dim: int, signs: Sequence[int] | None = None) -> "VirtualPoints":
        return cls(np.zeros((0, dim)), (), tuple(signs) if signs else (-1,) * dim)

    def to_dict(self) -> dict:
        return {"Xm": self.Xm.tolist(), "dims": list(self.dims), "signs": list(self.signs)}

    @classmethod
    def from_dict(cls, d: dict) -> "VirtualPoints":
        return cls(np.array(d["Xm"], dtype=float), tuple(d["dims"]), tuple(d["signs"]))


def place_virtual_points(
    Z_train,
    m: int,
    signs: Sequence[int] | None = None,
    dims: Sequence[int] | None = None,
) -> VirtualPoints:
    """Sobol points over the bounding box of the (transformed) training inputs.

    Point ``k`` constrains dimension ``dims[k % len(dims)]`` (all dimensions
    by default); signs default to decreasing in every dimension.
    """
    Z = np.asarray(Z_train, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    D = Z.shape[1]
    signs = tuple(signs) if signs is not None else (-1,) * D
    if len(signs) != D:
        raise ValueError(f"{len(signs)} signs for {D} dimensions")
    if m < 0:
        raise ValueError("M must be non-negative")
    if m == 0:
        return VirtualPoints.empty(D, signs)
    order = list(dims) if dims is not None else list(range(D))
    lo, hi = Z.min(axis=0), Z.max(axis=0)
    Xm = lo + sobol_points(D, m) * (hi - lo)
    return VirtualPoints(Xm, tuple(order[k % len(order)] for k in range(m)), signs)


@dataclass(frozen=True)
class EPConfig:
    nu: float = 1e-6
    damping: float = 0.8
    max_sweeps: int = 200
    tol: float = 1e-6

    def __post_init__(self):
        if not self.nu > 0:
            raise ValueError("nu must be positive")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")


@dataclass
class EPSites:
    """Site approximations t_i = Z_i N(g_i | mu_i, var_i), stored via natural parameters."""

    tau: np.ndarray  # site precisions 1/var_i
    nu_tilde: np.ndarray  # mu_i / var_i
    log_z: np.ndarray  # log Z_i
    cavity_mean: np.ndarray
    cavity_var: np.ndarray
    converged: bool
    sweeps: int
    trace: list[dict] = field(default_factory=list)

    @property
    def var(self) -> np.ndarray:
        return 1.0 / np.maximum(self.tau, SITE_PRECISION_FLOOR)

    @property
    def mean(self) -> np.ndarray:
        return self.nu_tilde * self.var

    def to_dict(self) -> dict:
        return {
            "tau": self.tau.tolist(),
            "nu_tilde": self.nu_tilde.tolist(),
            "log_z": self.log_z.tolist(),
            "cavity_mean": self.cavity_mean.tolist(),
            "cavity_var": self.cavity_var.tolist(),
            "converged": self.converged,
            "sweeps": self.sweeps,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EPSites":
        arr = lambda k: np.array(d[k], dtype=float)
        return cls(arr("tau"), arr("nu_tilde"), arr("log_z"), arr("cavity_mean"), arr("cavity_var"), bool(d["converged"]), int(d["sweeps"]))


def _probit_moments(mu_c: float, var_c: float, nu: float) -> tuple[float, float, float]:
    """log Z, mean and variance of Phi(g/nu) N(g | mu_c, var_c), normalized."""
    s = math.sqrt(nu * nu + var_c)
    z = mu_c / s
    log_z = float(log_ndtr(z))
    ratio = math.exp(-0.5 * z * z - 0.5 * LOG_2PI - log_z)  # N(z)/Phi(z)
    mean = mu_c + var_c * ratio / s
    var = var_c - var_c * var_c * ratio * (z + ratio) / (s * s)
    return log_z, mean, var


def _posterior(C0: np.ndarray, m0: np.ndarray, tau: np.ndarray, nu_t: np.ndarray):
    """Gaussian posterior of g given the prior N(m0, C0) and the sites."""
    sq = np.sqrt(np.maximum(tau, 0.0))
    B = np.eye(len(tau)) + sq[:, None] * C0 * sq[None, :]
    L, _ = robust_cholesky(B)
    V = linalg.solve_triangular(L, sq[:, None] * C0, lower=True)
    Sigma = C0 - V.T @ V
    mu = m0 + Sigma @ (nu_t - tau * m0)
    return Sigma, mu


def _constraint_blocks(gp: GPModel, vp: VirtualPoints):
    """Covariances of g with f(X) and among g, signs applied."""
    Z, p = gp.Z, gp.params
    s = vp.point_signs
    Kgf = np.vstack([cov_grad_f(vp.Xm[i], Z, d, p) for i, d in enumerate(vp.dims)]) * s[:, None]
    Kgg = np.empty((vp.m, vp.m))
    for i, di in enumerate(vp.dims):
        for j, dj in enumerate(vp.dims):
            Kgg[i, j] = cov_grad_grad(vp.Xm[i], vp.Xm[j], di, dj, p)[0, 0]
    Kgg *= s[:, None] * s[None, :]
    return Kgf, Kgg


def run_ep(gp: GPModel, vp: VirtualPoints, config: EPConfig = EPConfig()) -> EPSites:
    m = vp.m
    if m == 0:
        e = np.zeros(0)
        return EPSites(e, e, e, e, e, True, 0)
    Kgf, Kgg = _constraint_blocks(gp, vp)
    W = chol_solve(gp.L, Kgf.T)  # A^{-1} K_fg
    m0 = Kgf @ gp.alpha
    C0 = Kgg - Kgf @ W
    C0 = 0.5 * (C0 + C0.T)

    tau = np.zeros(m)
    nu_t = np.zeros(m)
    log_z = np.zeros(m)
    cav_mu = np.zeros(m)
    cav_var = np.zeros(m)
    Sigma, mu = C0.copy(), m0.copy()
    trace: list[dict] = []
    converged = False
    sweeps = 0
    for sweep in range(1, config.max_sweeps + 1):
        sweeps = sweep
        old_mu, old_var = mu.copy(), np.diag(Sigma).copy()
        old_nu, old_tau = nu_t.copy(), tau.copy()
        skipped = 0
        for i in range(m):
            s_ii = Sigma[i, i]
            prec_c = 1.0 / s_ii - tau[i]
            if not prec_c > 0:
                skipped += 1
                continue
            vc = 1.0 / prec_c
            mc = vc * (mu[i] / s_ii - nu_t[i])
            lz, mh, vh = _probit_moments(mc, vc, config.nu)
            if not (vh > 0 and math.isfinite(mh)):
                skipped += 1
                continue
            new_tau = 1.0 / vh - prec_c
            new_nu = mh / vh - mc * prec_c
            new_tau = config.damping * new_tau + (1 - config.damping) * tau[i]
            new_nu = config.damping * new_nu + (1 - config.damping) * nu_t[i]
            new_tau = max(new_tau, 0.0)
            d_tau, d_nu = new_tau - tau[i], new_nu - nu_t[i]
            tau[i], nu_t[i] = new_tau, new_nu
            cav_mu[i], cav_var[i], log_z[i] = mc, vc, lz
            col = Sigma[:, i].copy()
            denom = 1.0 + d_tau * s_ii
            Sigma -= (d_tau / denom) * np.outer(col, col)
            mu += col * ((d_nu - d_tau * mu[i]) / denom)
        Sigma, mu = _posterior(C0, m0, tau, nu_t)
        if not (np.all(np.isfinite(Sigma)) and np.all(np.isfinite(mu))):
            raise EPDivergence(f"EP produced non-finite moments at sweep {sweep}", trace)
        # site means of near-zero-precision sites are arbitrary, so convergence
        # is judged on the posterior marginals and on relative natural-parameter moves
        sd = np.sqrt(np.maximum(np.diag(C0), 1e-300))
        d_mom = max(
            float(np.max(np.abs(mu - old_mu) / sd)),
            float(np.max(np.abs(np.diag(Sigma) - old_var) / sd**2)),
        )
        d_site = float(np.max(np.abs(tau - old_tau) / (np.abs(tau) + 1.0 / sd**2)))
        trace.append({"sweep": sweep, "moment_change": d_mom, "site_change": d_site, "skipped": skipped})
        if sweep > 1 and max(d_mom, d_site) < config.tol and skipped == 0:
            converged = True
            break
    # cavities consistent with the final posterior, for log Z_EP
    for i in range(m):
        prec_c = 1.0 / Sigma[i, i] - tau[i]
        if prec_c > 0:
            cav_var[i] = 1.0 / prec_c
            cav_mu[i] = cav_var[i] * (mu[i] / Sigma[i, i] - nu_t[i])
            log_z[i] = float(log_ndtr(cav_mu[i] / math.sqrt(config.nu**2 + cav_var[i])))
    return EPSites(tau, nu_t, log_z, cav_mu, cav_var, converged, sweeps, trace)


class MonotonicGPModel:
    """Regular GP plus EP-approximated derivative-sign constraints."""

    def __init__(self, base: GPModel, virtual: VirtualPoints, sites: EPSites, config: EPConfig):
        if virtual.Xm.shape[1] != base.dim:
            raise ValueError("virtual points and training inputs differ in dimension")
        self.base = base
        self.virtual = virtual
        self.sites = sites
        self.config = config
        self._prepare()

    @property
    def converged(self) -> bool:
        return self.sites.converged

    @property
    def params(self) -> KernelParams:
        return self.base.params

    @property
    def transform(self) -> InputTransform:
        return self.base.transform

    def _prepare(self) -> None:
        gp, vp = self.base, self.virtual
        n, m = gp.n, vp.m
        Kff = kernel_matrix(gp.Z, gp.Z, gp.params)
        if m:
            Kgf, Kgg = _constraint_blocks(gp, vp)
            Kj = np.block([[Kff, Kgf.T], [Kgf, Kgg]])
        else:
            Kj = Kff
        noise = np.concatenate([np.full(n, gp.params.sigma**2), self.sites.var])
        self.L, self.jitter = robust_cholesky(Kj + np.diag(noise))
        self.mu_joint = np.concatenate([gp.yc, self.sites.mean])
        self.alpha = chol_solve(self.L, self.mu_joint)
        self.K_joint = Kj

    def _cross(self, Zs: np.ndarray) -> np.ndarray:
        """K_{*,joint}: covariances of f(Zs) with [f(X); g]."""
        gp, vp = self.base, self.virtual
        Kf = kernel_matrix(Zs, gp.Z, gp.params)
        if not vp.m:
            return Kf
        s = vp.point_signs
        Kg = np.column_stack([cov_grad_f(vp.Xm[i], Zs, d, gp.params)[0] * s[i] for i, d in enumerate(vp.dims)])
        return np.hstack([Kf, Kg])

    def _check(self, force: bool) -> None:
        if not self.converged and not force:
            raise EPNotConverged(f"EP did not converge in {self.sites.sweeps} sweeps; pass force=True to predict anyway")

    def predict(self, Xs, force: bool = False) -> tuple[np.ndarray, np.ndarray]:
        self._check(force)
        Zs = self.transform.apply(Xs)
        Ks = self._cross(Zs)
        mean = Ks @ self.alpha + self.base.y_mean
        v = linalg.solve_triangular(self.L, Ks.T, lower=True)
        var = self.params.eta**2 - np.sum(v * v, axis=0)
        return mean, np.maximum(var, 0.0)

    def predict_gradient(self, Xs, dim: int, force: bool = False) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and variance of df/dz_dim in model coordinates."""
        self._check(force)
        return self._gradient_at(self.transform.apply(Xs), dim)

    def _gradient_at(self, Zs: np.ndarray, dim: int):
        gp, vp, p = self.base, self.virtual, self.params
        G = [cov_grad_f(Zs, gp.Z, dim, p)]
        if vp.m:
            s = vp.point_signs
            G.append(np.column_stack([cov_grad_grad(Zs, vp.Xm[i], dim, d, p)[:, 0] * s[i] for i, d in enumerate(vp.dims)]))
        G = np.hstack(G)
        mean = G @ self.alpha
        v = linalg.solve_triangular(self.L, G.T, lower=True)
        var = p.eta**2 / p.rho[dim] ** 2 - np.sum(v * v, axis=0)
        return mean, np.maximum(var, 0.0)

    def virtual_derivative_means(self) -> np.ndarray:
        """Posterior mean of df/dz_{d_i} at each virtual point (signs not applied)."""
        vp = self.virtual
        return np.array([self._gradient_at(vp.Xm[i : i + 1], d)[0][0] for i, d in enumerate(vp.dims)])

    def log_z_ep(self) -> float:
        """EP approximation of the log marginal likelihood."""
        n = self.base.n
        sites = self.sites
        value = -np.sum(np.log(np.diag(self.L))) - 0.5 * self.mu_joint @ self.alpha
        if self.virtual.m:
            tot = sites.cavity_var + sites.var
            value += np.sum((sites.cavity_mean - sites.mean) ** 2 / (2 * tot))
            value += np.sum(sites.log_z)
            value += 0.5 * np.sum(np.log(tot))
        return float(value - 0.5 * n * LOG_2PI)

    # -- persistence --

    def to_dict(self) -> dict:
        return {
            "kind": "monotonic",
            "base": self.base.to_dict(),
            "virtual": self.virtual.to_dict(),
            "sites": self.sites.to_dict(),
            "ep": {"nu": self.config.nu, "damping": self.config.damping, "max_sweeps": self.config.max_sweeps, "tol": self.config.tol},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MonotonicGPModel":
        return cls(
            GPModel.from_dict(d["base"]),
            VirtualPoints.from_dict(d["virtual"]),
            EPSites.from_dict(d["sites"]),
            EPConfig(**d["ep"]),
        )

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")


def ep_fit(
    base: GPModel,
    virtual: VirtualPoints,
    config: EPConfig = EPConfig(),
    reoptimize: bool = False,
    restarts: int = 3,
    seed: int = 0,
) -> MonotonicGPModel:
    """Fit the monotonic model, reusing ``base``'s hyperparameters by default.

    With ``reoptimize`` the hyperparameters are re-selected by maximizing
    log Z_EP (Nelder-Mead from the base values plus random restarts).
    """
    if not reoptimize or virtual.m == 0:
        return MonotonicGPModel(base, virtual, run_ep(base, virtual, config), config)

    dim = base.dim

    def build(theta):
        p = KernelParams(math.exp(theta[0]), tuple(np.exp(theta[1 : 1 + dim])), math.exp(theta[1 + dim]))
        gp = GPModel(base.X, base.y, p, base.transform, base.y_mean != 0.0)
        return MonotonicGPModel(gp, virtual, run_ep(gp, virtual, config), config)

    def objective(theta):
        try:
            return -build(theta).log_z_ep()
        except NumericalFailure:
            return 1e300

    p = base.params
    start = np.array([math.log(p.eta), *np.log(p.rho), math.log(max(p.sigma, 1e-6))])
    rng = np.random.default_rng(np.random.SeedSequence([seed, 23]))
    best = None
    for r in range(restarts):
        x0 = start if r == 0 else start + rng.normal(0, 0.5, size=start.size)
        res = optimize.minimize(objective, x0, method="Nelder-Mead", options={"maxiter": 400})
        if best is None or res.fun < best.fun:
            best = res
    if best.fun >= 1e299:
        raise NumericalFailure("log Z_EP optimization failed at every restart")
    return build(best.x)
