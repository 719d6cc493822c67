"""Success probability against two-qubit gate density on the Algiers calibration.

Runs (w, d) = (4, 16) at three densities and reports adjacent-gap separations
in combined standard errors, for one seed or a sweep of seeds.

Usage: python3 scripts/algiers_density.py [--seeds 0:20] [--conversion direct|infidelity]
"""

import argparse

import numpy as np

from featuremetric import analysis, noise, pipeline
from featuremetric.design import grid_design, width_depth_density_space


def separations(nm, seed, k, shots):
    space = width_depth_density_space((4, 4), (16, 16), (0, 0.25))
    plan = grid_design(space, {"w": [4], "d": [16], "xi": [0, 0.125, 0.25]}, k=k, seed=seed)
    cfg = pipeline.RunConfig(pipeline.MIRROR, "success_prob", shots, nm.connectivity(), None)
    ds = analysis.assemble_dataset(plan, pipeline.run_design(plan, noise.NoisyBackend(nm, 1), cfg).records)
    m, se = ds.means, ds.stderrs
    return m, [(m[i] - m[i + 1]) / np.hypot(se[i], se[i + 1]) for i in range(2)]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", default="0:1", help="start:stop range of design seeds")
    ap.add_argument("--k", type=int, default=10)
    ap.add_argument("--shots", type=int, default=1024)
    ap.add_argument("--conversion", choices=("direct", "infidelity"), default="direct")
    args = ap.parse_args()
    nm = noise.ingest_calibration("ibmq_algiers", args.conversion)
    lo, hi = map(int, args.seeds.split(":"))
    zs = []
    for seed in range(lo, hi):
        m, z = separations(nm, seed, args.k, args.shots)
        zs.append(z)
        print(f"seed {seed:3d}  s = {np.round(m, 4).tolist()}  gaps {z[0]:5.2f} {z[1]:5.2f} sigma")
    zs = np.array(zs)
    print(f"ordered {np.mean(np.all(zs > 0, axis=1)):.0%}, both gaps >= 3 sigma {np.mean(np.all(zs >= 3, axis=1)):.0%}, "
          f"median gaps {np.median(zs[:, 0]):.2f} {np.median(zs[:, 1]):.2f}")


if __name__ == "__main__":
    main()
