import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from featuremetric.analysis import (
    MissingRecords,
    assemble_dataset,
    continuous_volumetric_grid,
    delta_abs,
    delta_v,
    model_error_protocol,
    monotonicity_reports,
    read_results,
    split,
    summarize_protocol,
    volumetric_summary,
    write_dataset,
    write_results,
)
from featuremetric.design import forte_sobol, grid_design, width_depth_density_space
from featuremetric.estimators import CapabilityRecord
from featuremetric.gp import GPFitConfig, GPModel, KernelParams, fit


def small_design(k=2):
    space = width_depth_density_space((2, 8), (4, 16), (0, 0.25))
    return grid_design(space, {"w": [2, 4], "d": [4, 16], "xi": [0.0, 0.25]}, k=k, seed=3)


def records_for(design, fn):
    return [
        CapabilityRecord(i, j, float(fn(v, j)), 100, "success_prob")
        for i, v in enumerate(design.vectors)
        for j in range(design.k)
    ]


def test_dataset_means_and_k1():
    d = small_design(k=2)
    ds = assemble_dataset(d, records_for(d, lambda v, j: 0.4 if j == 0 else 0.6))
    assert np.allclose(ds.means, 0.5)
    d1 = small_design(k=1)
    ds1 = assemble_dataset(d1, records_for(d1, lambda v, j: 0.37))
    assert np.allclose(ds1.means, 0.37) and np.all(ds1.stderrs == 0)
    for r in ds.records:
        assert r.mean == pytest.approx(np.mean(r.estimates))
        assert len(r.estimates) == 2


def test_dataset_missing_and_skipped():
    d = small_design()
    recs = records_for(d, lambda v, j: 0.5)
    with pytest.raises(MissingRecords) as exc:
        assemble_dataset(d, recs[:-1])
    assert exc.value.gaps == [(d.m - 1, 1)]
    ds = assemble_dataset(d, [r for r in recs if r.vector_index != 3], skip_vectors=[3])
    assert 3 not in ds.indices and ds.n == d.m - 1


def test_results_and_dataset_files(tmp_path):
    d = small_design()
    recs = records_for(d, lambda v, j: 0.1 * j + 0.05 * v[0])
    write_results(tmp_path / "r.csv", recs)
    assert read_results(tmp_path / "r.csv") == sorted(recs, key=lambda r: (r.vector_index, r.circuit_index))
    ds = assemble_dataset(d, recs)
    write_dataset(tmp_path / "ds.csv", ds)
    rows = list(csv.reader(open(tmp_path / "ds.csv")))
    assert rows[0][-2:] == ["s0", "s1"] and len(rows) == d.m + 1


def test_delta_v_hand_example():
    rep = delta_v([[2, 4, 0], [4, 8, 0.25]], [0.90, 0.95])
    assert rep.no_comparator == [0]
    assert len(rep.entries) == 1
    assert rep.entries[0].vector_index == 1
    assert rep.entries[0].delta == pytest.approx(-0.05)


def test_delta_v_monotone_lattice_is_nonnegative():
    X = np.array([(w, d, x) for w in (2, 4, 8) for d in (4, 8) for x in (0, 0.25)], dtype=float)
    s = 1 - 0.03 * X[:, 0] - 0.01 * X[:, 1] - 0.2 * X[:, 2]
    assert np.all(delta_v(X, s).deltas >= 0)


def test_equal_vectors_are_not_comparators():
    rep = delta_v([[1, 1], [1, 1], [2, 2]], [0.5, 0.2, 0.4])
    assert sorted(rep.no_comparator) == [0, 1]
    assert rep.entries[0].delta == pytest.approx(-0.2)


def test_sobol_design_has_lonely_vectors():
    X = forte_sobol().array()
    rep = delta_v(X, np.zeros(len(X)))
    assert 0 < len(rep.no_comparator) < 40
    assert len(rep.entries) + len(rep.no_comparator) == 256


@given(st.integers(0, 2**31), st.integers(0, 2))
@settings(max_examples=60, deadline=None)
def test_projection_onto_constant_axis_is_order_isomorphic(seed, const_axis):
    rng = np.random.default_rng(seed)
    X = rng.integers(0, 4, size=(25, 3)).astype(float)
    X[:, const_axis] = 1.0
    s = rng.uniform(size=25)
    full = delta_v(X, s)
    keep = [a for a in range(3) if a != const_axis]
    proj = delta_v(X, s, features=keep)
    assert [(e.vector_index, e.delta) for e in full.entries] == [(e.vector_index, e.delta) for e in proj.entries]


def test_projection_reports_keys():
    d = small_design()
    ds = assemble_dataset(d, records_for(d, lambda v, j: 1 - 0.01 * v[0] * v[1]))
    reps = monotonicity_reports(ds)
    assert set(reps) == {"full", "-w", "-d", "-xi"}
    assert reps["-d"].features == ("w", "xi")


def test_delta_abs_examples():
    assert delta_abs([0.2, 0.4], [0.2, 0.4]) == 0
    assert delta_abs([0.5, 0.7], [0.6, 0.9]) == pytest.approx(0.15)
    assert delta_abs([0.5, 0.5], [0, 1]) == 0.5
    with pytest.raises(ValueError):
        delta_abs([0.1], [0.1, 0.2])


@given(st.lists(st.floats(-1, 1), min_size=1, max_size=20), st.integers(0, 19))
def test_delta_abs_zero_iff_equal(vals, k):
    p = np.array(vals)
    assert delta_abs(p, p) == 0
    q = p.copy()
    q[k % len(q)] += 0.5
    assert delta_abs(p, q) > 0


def test_split_sizes_and_determinism():
    sp = split(531, 0.5, 4)
    assert (len(sp.train), len(sp.test)) == (265, 266)
    assert set(sp.train).isdisjoint(sp.test) and set(sp.train) | set(sp.test) == set(range(531))
    assert split(531, 0.5, 4) == sp and split(531, 0.5, 5) != sp
    with pytest.raises(ValueError):
        split(3, 0.1, 0)
    with pytest.raises(ValueError):
        split(10, 1.0, 0)


def test_continuous_volumetric_grid():
    space = width_depth_density_space((2, 16), (4, 64), (0, 0.25))
    X = np.array([(w, d, 0.0) for w in (2, 4, 8, 16) for d in (4, 16, 64)], dtype=float)
    flat = fit(X, np.full(len(X), 0.42), GPFitConfig(restarts=2), space.log2_mask())
    hm = continuous_volumetric_grid(flat.predict, space, "w", "d", {"xi": 0.0}, 7)
    assert hm.values.shape == (7, 7)
    assert np.allclose(hm.values, 0.42, atol=1e-3)
    assert hm.x[0] == 2 and hm.x[-1] == 16 and hm.y[-1] == pytest.approx(64)
    hm2 = continuous_volumetric_grid(flat.predict, space, "w", "d", {"xi": 0.0}, (3, 5))
    assert hm2.values.shape == (5, 3)
    with pytest.raises(ValueError):
        continuous_volumetric_grid(flat.predict, space, "w", "d")
    with pytest.raises(KeyError):
        continuous_volumetric_grid(flat.predict, space, "w", "q", {"xi": 0.0})


def test_interpolating_model_reproduces_training_means_on_grid():
    space = width_depth_density_space((2, 16), (4, 64), (0, 0.25))
    ws, ds_ = [2, 4, 8, 16], [4, 8, 16, 32, 64]
    X = np.array([(w, d, 0.0) for d in ds_ for w in ws], dtype=float)
    y = np.exp(-X[:, 0] * X[:, 1] / 300)
    m = GPModel(X[:, :2], y, KernelParams(0.5, (1.0, 1.0), 0.0))
    pred = lambda P: m.predict(P[:, :2])
    hm = continuous_volumetric_grid(pred, space, "w", "d", {"xi": 0.0}, (4, 5), (2, 16), (4, 64))
    assert np.allclose(hm.values.ravel(), np.clip(y, 0, 1), atol=1e-6)


def test_volumetric_summary_and_heatmap_file(tmp_path):
    d = small_design()
    ds = assemble_dataset(d, records_for(d, lambda v, j: 1 - 0.01 * v[0] * v[1] - v[2]))
    hm = volumetric_summary(ds, "w", "d", {"xi": 0.0})
    assert hm.values.shape == (2, 2)
    assert hm.values[1, 1] == pytest.approx(1 - 0.64)
    hm.write(tmp_path / "hm.csv")
    rows = list(csv.reader(open(tmp_path / "hm.csv")))
    assert rows[0] == ["fixed", "xi=0.0"] and rows[1][0] == "d\\w"


def test_model_error_protocol_small():
    space = width_depth_density_space((2, 16), (4, 64), (0, 0.5))
    plan = forte_sobol(m=40, k=2)
    recs = records_for(plan, lambda v, j: np.exp(-v[0] * v[1] * (0.2 + v[2]) / 200))
    ds = assemble_dataset(plan, recs)
    rows = model_error_protocol(ds, (0.5,), instances=3, fit_config=GPFitConfig(restarts=2), virtual_points=10)
    assert len(rows) == 6
    summary = summarize_protocol(rows)
    assert {s["variant"] for s in summary} == {"gp", "monotonic"}
    assert all(s["instances"] == 3 and s["mean"] < 0.1 for s in summary)
    assert space.names == plan.space.names
