"""Held-out delta_abs of the regular and monotonic GP on the Sobol SR-DFE dataset.

Usage: python3 scripts/model_error.py OUT_JSON [--instances 20] [--fractions 0.5] [--virtual 30]
"""

import argparse
import dataclasses
import json

from featuremetric import analysis
from featuremetric.gp import GPFitConfig
from sobol_monotonicity import simulate


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("out")
    ap.add_argument("--instances", type=int, default=20)
    ap.add_argument("--fractions", default="0.5", help="comma-separated training fractions")
    ap.add_argument("--virtual", type=int, default=30)
    ap.add_argument("--restarts", type=int, default=5)
    ap.add_argument("--noise", default="0.0002,0.005,0.01")
    args = ap.parse_args()
    ds = simulate(*map(float, args.noise.split(",")), k=30, shots=200)
    fractions = tuple(float(f) for f in args.fractions.split(","))
    rows = analysis.model_error_protocol(ds, fractions, args.instances, 0, ("gp", "monotonic"),
                                         GPFitConfig(restarts=args.restarts), args.virtual)
    summary = analysis.summarize_protocol(rows)
    with open(args.out, "w") as fh:
        json.dump({"rows": [dataclasses.asdict(r) for r in rows], "summary": summary}, fh, indent=1)
    for s in summary:
        print(f"fraction {s['fraction']:.2f} {s['variant']:9s} delta_abs {s['mean']:.4f} +- {s['sd']:.4f} "
              f"({s['instances']} instances, {s['unconverged']} unconverged)")


if __name__ == "__main__":
    main()
