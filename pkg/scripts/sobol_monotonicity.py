"""SR-DFE on the 256-point Sobol design over (w, d, xi) and its delta_v reports.

Uniform all-to-all Pauli noise on 20 qubits. Writes dataset.csv and
monotonicity.csv into OUT_DIR and prints mass summaries per projection.

Usage: python3 scripts/sobol_monotonicity.py OUT_DIR [--noise e1,e2,ro] [--k 30] [--shots 200]
"""

import argparse
import pathlib

from featuremetric import analysis, noise, pipeline
from featuremetric.circuit import ConnectivityGraph
from featuremetric.design import forte_sobol


def simulate(e1, e2, ro, k, shots, workers=None):
    plan = forte_sobol(k=k)
    graph = ConnectivityGraph.all_to_all(20)
    nm = noise.NoiseModel.uniform(range(20), e1, e2, ro, graph)
    out = pipeline.run_design(plan, noise.NoisyBackend(nm, workers), pipeline.RunConfig(pipeline.FIXED_DENSITY, "srdfe", shots, graph, None))
    return analysis.assemble_dataset(plan, out.records, skip_vectors=out.failed_vectors)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("out", type=pathlib.Path)
    ap.add_argument("--noise", default="0.0002,0.005,0.01")
    ap.add_argument("--k", type=int, default=30)
    ap.add_argument("--shots", type=int, default=200)
    ap.add_argument("--workers", type=int, default=None)
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    e1, e2, ro = map(float, args.noise.split(","))
    ds = simulate(e1, e2, ro, args.k, args.shots, args.workers)
    analysis.write_dataset(args.out / "dataset.csv", ds)
    reps = analysis.monotonicity_reports(ds)
    analysis.write_monotonicity(args.out / "monotonicity.csv", reps)
    for name, rep in reps.items():
        print(f"{name:5s} comparable {len(rep.entries):3d}  mass(delta >= -0.02) {1 - rep.mass_below(-0.02):.3f}  "
              f"mass(delta < -0.05) {rep.mass_below(-0.05):.3f}")


if __name__ == "__main__":
    main()
