"""Mirror-circuit volumetric heatmap on the bundled Montreal calibration.

Usage: python3 scripts/montreal_volumetric.py OUT_DIR [--k 20] [--shots 1024] [--workers N]
"""

import argparse
import pathlib

from featuremetric import analysis, noise, pipeline
from featuremetric.design import montreal_grid


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("out", type=pathlib.Path)
    ap.add_argument("--k", type=int, default=20)
    ap.add_argument("--shots", type=int, default=1024)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=None)
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)

    nm = noise.ingest_calibration("ibmq_montreal")
    plan = montreal_grid(k=args.k, seed=args.seed)
    cfg = pipeline.RunConfig(pipeline.MIRROR, "success_prob", args.shots, nm.connectivity(), None)
    out = pipeline.run_design(plan, noise.NoisyBackend(nm, args.workers), cfg)
    ds = analysis.assemble_dataset(plan, out.records, skip_vectors=out.failed_vectors)
    analysis.write_dataset(args.out / "dataset.csv", ds)
    hm = analysis.volumetric_summary(ds, "w", "d")
    hm.write(args.out / "volumetric.csv")
    print(f"{ds.n} vectors, {len(out.errors)} failed circuits; heatmap in {args.out / 'volumetric.csv'}")


if __name__ == "__main__":
    main()
