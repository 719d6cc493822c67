import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from featuremetric.gp import (
    GPFitConfig,
    GPModel,
    InputTransform,
    KernelParams,
    NumericalFailure,
    cov_grad_f,
    cov_grad_grad,
    derivative_covariances,
    fit,
    kernel,
    kernel_matrix,
    load_model,
    robust_cholesky,
)


def raw_model(X, y, eta, rho, sigma):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return GPModel(X, y, KernelParams(eta, tuple(np.atleast_1d(rho)), sigma), InputTransform.identity(X.shape[1]), center=False)


def test_kernel_examples():
    p = KernelParams(1.0, (1.0,), 0.0)
    assert kernel([0.3], [0.3], KernelParams(2.0, (1.0,), 0.0)) == pytest.approx(4.0)
    assert kernel([0.0], [1.0], p) == pytest.approx(0.60653, abs=1e-5)
    assert kernel([0.0], [1.0], p) == pytest.approx(math.exp(-0.5), rel=1e-15)
    vals = [kernel([0.0], [r], p) for r in (0, 1, 2, 5, 10, 40)]
    assert all(a > b for a, b in zip(vals, vals[1:])) and vals[-1] < 1e-300
    with pytest.raises(ValueError):
        kernel([0.0, 1.0], [1.0], p)


def test_log_ml_single_point():
    for eta, sigma in [(1.0, 0.1), (0.3, 1e-3), (2.0, 0.5)]:
        m = raw_model([[0.7]], [0.0], eta, 1.3, sigma)
        expect = -0.5 * math.log(eta**2 + sigma**2) - 0.5 * math.log(2 * math.pi)
        assert m.log_marginal_likelihood() == pytest.approx(expect, abs=1e-12)


def test_log_ml_matches_oracle():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(5, 2))
    y = rng.normal(size=5)
    m = raw_model(X, y, 0.8, (1.1, 0.6), 0.2)
    assert abs(m.log_marginal_likelihood() - oracles.gp_log_ml(X, y, 0.8, [1.1, 0.6], 0.2)) < 1e-8
    # zero targets: only the complexity and constant terms remain
    z = raw_model(X, np.zeros(5), 0.8, (1.1, 0.6), 0.2)
    assert abs(z.log_marginal_likelihood() - oracles.gp_log_ml(X, np.zeros(5), 0.8, [1.1, 0.6], 0.2)) < 1e-10


def test_predict_matches_oracle_20_points():
    rng = np.random.default_rng(2)
    X = rng.uniform(-2, 2, size=(20, 2))
    y = np.sin(X[:, 0]) + 0.3 * X[:, 1]
    Xs = rng.uniform(-3, 3, size=(15, 2))
    m = raw_model(X, y, 1.2, (0.9, 1.7), 0.05)
    mean, var = m.predict(Xs)
    om, ov = oracles.gp_posterior(X, y, Xs, 1.2, [0.9, 1.7], 0.05)
    assert np.max(np.abs(mean - om)) < 1e-8
    assert np.max(np.abs(var - ov)) < 1e-8


def test_interpolation_and_prior_reversion():
    X = np.array([[0.0], [1.0], [2.5]])
    y = np.array([0.3, -0.2, 0.9])
    m = raw_model(X, y, 1.0, 0.8, 0.0)
    mean, var = m.predict(X)
    assert np.allclose(mean, y, atol=1e-8)
    assert np.all(var < 1e-8)
    mean, var = m.predict([[1e3]])
    assert mean[0] == pytest.approx(0.0, abs=1e-12)
    assert var[0] == pytest.approx(1.0)


def test_derivative_covariance_zero_separation():
    p = KernelParams(1.5, (0.7, 2.0), 0.0)
    x = np.array([[0.2, -0.4]])
    assert cov_grad_f(x, x, 0, p)[0, 0] == 0
    for g in range(2):
        assert cov_grad_grad(x, x, g, g, p)[0, 0] == pytest.approx(1.5**2 / p.rho[g] ** 2)
    with pytest.raises((ValueError, IndexError)):
        cov_grad_f(x, x, 2, p)


def test_derivative_covariances_match_finite_differences():
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(1000):
        D = int(rng.integers(1, 4))
        eta = float(rng.uniform(0.3, 2))
        rho = rng.uniform(0.5, 3, size=D)
        p = KernelParams(eta, tuple(rho), 0.0)
        x, x2 = rng.normal(size=D), rng.normal(size=D)
        g, h = int(rng.integers(D)), int(rng.integers(D))
        a = derivative_covariances(x, x2, (g,), p)
        fd = oracles.fd_first(x, x2, g, eta, rho)
        b = derivative_covariances(x, x2, (g, h), p)
        fd2 = oracles.fd_second(x, x2, g, h, eta, rho)
        scale1 = max(abs(fd), eta**2 / rho.min())
        scale2 = max(abs(fd2), eta**2 / rho.min() ** 2)
        worst = max(worst, abs(a - fd) / scale1, abs(b - fd2) / scale2)
    assert worst < 1e-6


def test_hyperparameter_recovery():
    rng = np.random.default_rng(4)
    n = 200
    X = np.sort(rng.uniform(0, 20, n))[:, None]
    K = oracles.se_kernel(X, X, 1.0, [2.0]) + 0.1**2 * np.eye(n)
    y = np.linalg.cholesky(K + 1e-10 * np.eye(n)) @ rng.normal(size=n)
    m = fit(X, y, GPFitConfig(restarts=5, seed=0))
    rho = m.length_scales_input_units()[0]
    assert 1.0 < rho < 4.0
    assert len(m.fit_info["restarts"]) == 5


def test_constant_targets():
    X = np.linspace(0, 5, 12)[:, None]
    m = fit(X, np.full(12, 0.37), GPFitConfig(restarts=3))
    mean, _ = m.predict(np.array([[-3.0], [2.2], [9.0]]))
    assert np.allclose(mean, 0.37, atol=1e-3)


def test_fit_determinism_and_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    X = rng.uniform(1, 16, size=(30, 2))
    y = np.exp(-X[:, 0] / 10) * (1 - X[:, 1] / 40) + 0.01 * rng.normal(size=30)
    a = fit(X, y, GPFitConfig(restarts=4, seed=9), log2=[True, False])
    b = fit(X, y, GPFitConfig(restarts=4, seed=9), log2=[True, False])
    assert a.params == b.params
    a.save(tmp_path / "m.json")
    c = load_model(tmp_path / "m.json")
    Xs = rng.uniform(1, 16, size=(7, 2))
    assert np.array_equal(a.predict(Xs)[0], c.predict(Xs)[0])
    assert c.fit_info["seed"] == 9


def test_fit_needs_two_points():
    with pytest.raises(ValueError):
        fit([[0.0]], [1.0])


def test_jitter_ladder_handles_duplicates():
    X = np.zeros((6, 1))
    L, jitter = robust_cholesky(kernel_matrix(X, X, KernelParams(1.0, (1.0,), 0.0)))
    assert jitter > 0
    m = raw_model(np.zeros(6), np.ones(6), 1.0, 1.0, 0.0)
    assert m.predict([[0.0]])[0][0] == pytest.approx(1.0, abs=1e-4)
    with pytest.raises(NumericalFailure):
        robust_cholesky(-np.eye(3))


@st.composite
def instances(draw):
    seed = draw(st.integers(0, 2**31))
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 25))
    D = int(rng.integers(1, 4))
    X = rng.uniform(-3, 3, size=(n, D))
    p = KernelParams(float(rng.uniform(0.2, 2)), tuple(rng.uniform(0.3, 3, D)), float(rng.uniform(1e-3, 0.5)))
    return X, rng.normal(size=n), p, rng.uniform(-4, 4, size=(10, D)), rng


@given(instances())
@settings(max_examples=80, deadline=None)
def test_psd_and_variance_bounds(inst):
    X, y, p, Xs, _ = inst
    K = kernel_matrix(X, X, p)
    assert np.allclose(K, K.T)
    robust_cholesky(K)
    m = GPModel(X, y, p)
    _, var = m.predict(Xs)
    assert np.all(var >= 0) and np.all(var <= p.eta**2 + 1e-10)


@given(instances())
@settings(max_examples=80, deadline=None)
def test_information_monotonicity(inst):
    X, y, p, Xs, rng = inst
    _, v1 = GPModel(X, y, p).predict(Xs)
    x_new = rng.uniform(-3, 3, size=(1, X.shape[1]))
    _, v2 = GPModel(np.vstack([X, x_new]), np.append(y, 0.1), p).predict(Xs)
    assert np.all(v2 <= v1 + 1e-10)
