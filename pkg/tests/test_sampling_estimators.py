import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

import oracles
from featuremetric import clifford
from featuremetric.circuit import CX, Circuit, ConnectivityGraph, Layer, compute_features
from featuremetric.estimators import (
    DegenerateReference,
    bootstrap_stderr,
    build_srdfe_bundle,
    dfe_estimates,
    estimate_p3_expectation,
    estimate_success_probability,
    in_plus_eigenspace,
    srdfe_estimates,
    srdfe_fidelity,
)
from featuremetric.noise import NoiseModel, simulate_noisy_shots
from featuremetric.sampling import (
    BadBenchmarkDepth,
    DensityInfeasible,
    FixedDensitySamplerConfig,
    MirrorSamplerConfig,
    NoEdges,
    derive_rng,
    sample_edgegrab_layer,
    sample_fixed_density_circuit,
    sample_mirror_circuit,
)
from featuremetric.stabilizer import PauliOperator, simulate_ideal_output

ALL4 = ConnectivityGraph.all_to_all(4)


def n_cx(layer):
    return sum(g.kind == CX for g in layer.gates)


# --- edgegrab ------------------------------------------------------------------


def test_edgegrab_zero_density():
    rng = np.random.default_rng(0)
    for _ in range(50):
        assert n_cx(sample_edgegrab_layer((0, 1, 2, 3), 0.0, rng, ALL4)) == 0


def test_edgegrab_single_pair_always_cx():
    g = ConnectivityGraph.line(2)
    rng = np.random.default_rng(1)
    assert all(n_cx(sample_edgegrab_layer((0, 1), 0.5, rng, g)) == 1 for _ in range(100))


def test_edgegrab_line4_mean_count():
    g = ConnectivityGraph.line(4)
    rng = np.random.default_rng(2)
    counts = np.array([n_cx(sample_edgegrab_layer((0, 1, 2, 3), 0.25, rng, g)) for _ in range(10_000)])
    assert abs(counts.mean() - 1.0) < 3 * counts.std(ddof=1) / np.sqrt(len(counts))


def test_edgegrab_errors():
    lonely = ConnectivityGraph((0, 1), frozenset())
    with pytest.raises(NoEdges):
        sample_edgegrab_layer((0, 1), 0.5, np.random.default_rng(0), lonely)
    with pytest.raises(ValueError):
        sample_edgegrab_layer((0, 1), 1.5, np.random.default_rng(0), ALL4)


# --- mirror ---------------------------------------------------------------------


def test_mirror_layer_count_and_noiseless_success():
    rng = np.random.default_rng(3)
    cfg = MirrorSamplerConfig(ALL4)
    c = sample_mirror_circuit(3, 4, 0.25, cfg, rng)
    assert len(c.layers) == 7
    for d in (4, 8, 16):
        for _ in range(10):
            c = sample_mirror_circuit(4, d, 0.3, cfg, rng)
            assert len(c.layers) == d + 3
            target = simulate_ideal_output(c)
            hist = simulate_noisy_shots(c, NoiseModel.noiseless(c.qubits, ALL4), 64, rng)
            assert estimate_success_probability(hist, target) == 1.0


@pytest.mark.parametrize("d", [0, 2, 6, 10])
def test_mirror_bad_depth(d):
    with pytest.raises(BadBenchmarkDepth):
        sample_mirror_circuit(2, d, 0.25, MirrorSamplerConfig(ALL4), np.random.default_rng(0))


def test_mirror_density_expectation():
    # main layers carry density 2*xi each, the Pauli and cap layers carry none
    rng = np.random.default_rng(4)
    cfg = MirrorSamplerConfig(ConnectivityGraph.line(4))
    w, d, xi = 4, 8, 0.25
    vals = []
    for _ in range(5000):
        c = sample_mirror_circuit(w, d, xi, cfg, rng)
        vals.append(2 * sum(n_cx(l) for l in c.layers) / (w * d))
    vals = np.array(vals)
    assert abs(vals.mean() - xi) < 3 * vals.std(ddof=1) / np.sqrt(len(vals))


# --- fixed density ----------------------------------------------------------------


def test_fixed_density_examples():
    rng = np.random.default_rng(5)
    cfg = FixedDensitySamplerConfig(ALL4)
    c = sample_fixed_density_circuit(4, 8, 0.25, cfg, rng)
    assert compute_features(c).n2q == 4
    c0 = sample_fixed_density_circuit(4, 8, 0.0, cfg, rng)
    assert compute_features(c0).n2q == 0
    with pytest.raises(DensityInfeasible):
        sample_fixed_density_circuit(3, 4, 1.0, cfg, rng)


@given(st.integers(1, 4), st.integers(1, 12), st.floats(0, 1), st.integers(0, 2**31))
@settings(max_examples=150, deadline=None)
def test_fixed_density_exact_feature(w, d, xi, seed):
    n2q = int(np.floor(w * d * xi / 2 + 0.5))
    cfg = FixedDensitySamplerConfig(ALL4)
    if n2q > d * (w // 2):
        with pytest.raises(DensityInfeasible):
            sample_fixed_density_circuit(w, d, xi, cfg, np.random.default_rng(seed))
        return
    f = compute_features(sample_fixed_density_circuit(w, d, xi, cfg, np.random.default_rng(seed)))
    assert (f.w, f.d, f.n2q) == (w, d, n2q)
    assert f.xi2q == 2 * n2q / (w * d)


def test_fixed_density_layer_position_invariance():
    rng = np.random.default_rng(6)
    cfg = FixedDensitySamplerConfig(ALL4)
    d, reps = 8, 3000
    totals = np.zeros(d)
    for _ in range(reps):
        c = sample_fixed_density_circuit(4, d, 0.25, cfg, rng)
        totals += [n_cx(l) for l in c.layers]
    assert totals.sum() == 4 * reps
    assert stats.chisquare(totals).pvalue > 1e-3


def test_same_seed_same_circuit():
    a = sample_mirror_circuit(4, 8, 0.25, MirrorSamplerConfig(ALL4), derive_rng(7, 1, 3, 2))
    b = sample_mirror_circuit(4, 8, 0.25, MirrorSamplerConfig(ALL4), derive_rng(7, 1, 3, 2))
    assert a == b
    c = sample_mirror_circuit(4, 8, 0.25, MirrorSamplerConfig(ALL4), derive_rng(7, 1, 3, 3))
    assert a != c


# --- estimators --------------------------------------------------------------------


def test_success_probability_examples():
    assert estimate_success_probability({"01": 512, "10": 512}, "01") == 0.5
    assert estimate_success_probability({"01": 1024}, "01") == 1
    assert estimate_success_probability({"10": 5}, "01") == 0
    with pytest.raises(ValueError):
        estimate_success_probability({}, "0")
    with pytest.raises(ValueError):
        estimate_success_probability({"0": 3}, "0", shots=4)


def test_p3_expectation_examples():
    zz = PauliOperator.from_label("+ZZ")
    assert estimate_p3_expectation({"00": 100, "11": 50, "01": 50}, zz) == 0.5
    assert estimate_p3_expectation({"00": 7}, zz) == 1
    assert estimate_p3_expectation({"00": 3, "10": 3}, zz) == 0
    with pytest.raises(ValueError):
        estimate_p3_expectation({"00": 1}, PauliOperator.from_label("+XZ"))


def test_minus_z_eigenspace_from_matrix():
    mz = oracles.pauli_matrix("-Z")
    plus = [b for b in range(2) if np.isclose(mz[b, b], 1)]
    assert plus == [1]
    p = PauliOperator.from_label("-Z")
    assert [b for b in "01" if in_plus_eigenspace(b, p)] == ["1"]


def test_srdfe_fidelity_examples():
    assert srdfe_fidelity(0.7, 1.0, 2) == pytest.approx(0.7, abs=1e-15)
    assert srdfe_fidelity(0.5, 0.9, 2) == pytest.approx(37 / 67, abs=1e-14)
    assert srdfe_fidelity(0.5, 0.9, 2) == pytest.approx(0.5523, abs=1e-4)
    # direct closed-form evaluation
    g_c, g_n = (16 * 0.5 - 1) / 15, (16 * 0.9 - 1) / 15
    assert g_c == pytest.approx(7 / 15)
    assert srdfe_fidelity(0.5, 0.9, 2) == pytest.approx((1 + 15 * g_c / g_n) / 16)
    assert srdfe_fidelity(0.6, 0.6, 3) == pytest.approx(1.0)
    with pytest.raises(DegenerateReference):
        srdfe_fidelity(0.5, 0.25, 1)


def test_bundle_single_qubit_x():
    c = Circuit((0,), (Layer.idle((0,)),))
    b = build_srdfe_bundle(c, np.random.default_rng(0), p1=PauliOperator.from_label("+X"))
    assert b.p2.label == "+X" and b.p3.label == "+Z"
    u = oracles.gate_unitary(b.prep.gates[0].kind)
    psi = u @ np.array([1, 0])
    assert np.allclose(oracles.X @ psi, psi)


def test_bundle_zz_on_identity():
    c = Circuit((0, 1), (Layer.idle((0, 1)),))
    b = build_srdfe_bundle(c, np.random.default_rng(1), p1=PauliOperator.from_label("+ZZ"))
    assert b.p3.label == "+ZZ"
    assert {x for x in ("00", "01", "10", "11") if in_plus_eigenspace(x, b.p3)} == {"00", "11"}


def _noiseless_p3(circ, p3, rng, shots=32):
    hist = simulate_noisy_shots(circ, NoiseModel.noiseless(circ.qubits, ALL4), shots, rng)
    return estimate_p3_expectation(hist, p3)


def test_bundle_invariants_and_noiseless_srdfe_is_one():
    rng = np.random.default_rng(8)
    cfg = FixedDensitySamplerConfig(ALL4)
    for _ in range(50):
        w = int(rng.integers(1, 5))
        c = sample_fixed_density_circuit(w, int(rng.integers(1, 8)), 0.0 if w == 1 else 0.3, cfg, rng)
        b = build_srdfe_bundle(c, rng)
        assert b.p1.sign == 1 and b.p1.weight > 0
        assert b.p3.is_z_type() and b.null_p3.is_z_type()
        assert b.p3.sign == b.p2.sign and b.null_p3.sign == 1
        # noiselessly the output is a +1 eigenstate of P3 with its sign
        probs = oracles.basis_probabilities(b.dfe_circuit)
        assert all(in_plus_eigenspace(x, b.p3) for x in probs)
        pc = _noiseless_p3(b.dfe_circuit, b.p3, rng)
        pn = _noiseless_p3(b.null_circuit, b.null_p3, rng)
        assert pc == 1 and pn == 1
        assert srdfe_estimates([pc], [pn], w)[0] == 1.0


def test_bootstrap_examples():
    rng = np.random.default_rng(9)
    assert bootstrap_stderr([0.3] * 10, rng) == 0
    # exact sd of the resampled mean by enumerating the four equally likely resamples
    means = [np.mean(s) for s in itertools.product([0, 1], repeat=2)]
    exact = np.std(means)
    assert exact == pytest.approx(np.sqrt(2) / 4)
    est = bootstrap_stderr([0, 1], np.random.default_rng(10), resamples=10_000)
    assert abs(est - exact) < 0.1 * exact
    assert bootstrap_stderr([0.1, 0.5, 0.9], derive_rng(1, 4, 0)) == bootstrap_stderr([0.1, 0.5, 0.9], derive_rng(1, 4, 0))
    with pytest.raises(ValueError):
        bootstrap_stderr([], rng)
    with pytest.raises(ValueError):
        bootstrap_stderr([1.0], rng, resamples=10)


def _run_bundles(circuits, nm, shots, rng):
    pc, pn = [], []
    for c in circuits:
        b = build_srdfe_bundle(c, rng)
        pc.append(estimate_p3_expectation(simulate_noisy_shots(b.dfe_circuit, nm, shots, rng), b.p3))
        pn.append(estimate_p3_expectation(simulate_noisy_shots(b.null_circuit, nm, shots, rng), b.null_p3))
    return np.array(pc), np.array(pn)


def test_spam_robustness_readout_only():
    rng = np.random.default_rng(12)
    w, K, N = 3, 50, 10_000
    cfg = FixedDensitySamplerConfig(ALL4)
    circuits = [sample_fixed_density_circuit(w, 6, 0.3, cfg, rng) for _ in range(K)]
    nm = NoiseModel.uniform(range(4), 0.0, 0.0, 0.02, ALL4)
    pc, pn = _run_bundles(circuits, nm, N, rng)
    dfe = dfe_estimates(pc, w)
    sr = srdfe_estimates(pc, pn, w)
    se_dfe = dfe.std(ddof=1) / np.sqrt(K)
    se_sr = max(sr.std(ddof=1) / np.sqrt(K), 1e-12)
    assert 1 - dfe.mean() > 3 * se_dfe
    assert abs(sr.mean() - 1) < 3 * se_sr


@pytest.mark.slow
def test_srdfe_matches_density_matrix_fidelity():
    rng = np.random.default_rng(13)
    K, N = 50, 10_000
    cfg = FixedDensitySamplerConfig(ALL4)
    for w in (1, 2, 3):
        nm = NoiseModel.uniform(range(4), 0.005, 0.02, 0.01, ALL4)
        circuits = [sample_fixed_density_circuit(w, 8, 0.0 if w == 1 else 0.5, cfg, rng) for _ in range(K)]
        truth = np.mean([oracles.process_fidelity(c, nm.e1, nm.e2) for c in circuits])
        pc, pn = _run_bundles(circuits, nm, N, rng)
        assert abs(srdfe_estimates(pc, pn, w).mean() - truth) <= 0.02
