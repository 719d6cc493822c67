"""Command-line front end: design, run, fit, predict, report.

Exit codes: 0 ok, 2 usage, 3 numerical failure, 4 missing data.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import analysis, design as dz, gp as gpmod, monotonic as mono, noise, pipeline
from .circuit import ConnectivityGraph
from .estimators import SRDFE, SUCCESS_PROB

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_MISSING = 0, 2, 3, 4


class UsageError(Exception):
    pass


class MissingData(Exception):
    pass


def _json_dump(path: Path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _update_manifest(out_dir: Path, stage: str, entry: dict) -> None:
    """Deterministic pipeline.json plus timestamps kept apart in timestamps.json."""
    path = out_dir / "pipeline.json"
    doc = json.loads(path.read_text()) if path.exists() else {}
    doc[stage] = entry
    _json_dump(path, doc)
    tpath = out_dir / "timestamps.json"
    stamps = json.loads(tpath.read_text()) if tpath.exists() else {}
    stamps[stage] = _dt.datetime.now(_dt.timezone.utc).isoformat()
    _json_dump(tpath, stamps)


def _rel(path, folder: Path) -> str:
    """Path relative to the manifest folder, so relocated reruns compare byte-equal."""
    return os.path.relpath(os.path.abspath(path), os.path.abspath(folder))


def _record_stage(out: Path, stage: str, inputs: dict, extra: dict | None = None) -> None:
    """Add a stage entry (input digests, output name) to the manifest beside ``out``."""
    folder = out if out.is_dir() else out.parent
    entry = {
        "inputs": {k: {"path": _rel(v, folder), "sha256": pipeline.file_digest(v)} for k, v in inputs.items() if v},
        "output": out.name,
        **(extra or {}),
    }
    _update_manifest(folder, stage, entry)


# --- design ------------------------------------------------------------------

PRESETS = {"algiers": dz.algiers_grid, "montreal": dz.montreal_grid, "sobol3": dz.forte_sobol}


def _parse_values(specs: list[str]) -> dict[str, list[float]]:
    out = {}
    for s in specs or []:
        if "=" not in s:
            raise UsageError(f"--values expects name=v1,v2,..., got {s!r}")
        name, vals = s.split("=", 1)
        try:
            out[name] = [float(v) for v in vals.split(",") if v]
        except ValueError as exc:
            raise UsageError(f"bad number in --values {s!r}") from exc
    return out


def cmd_design(args) -> int:
    if args.preset:
        plan = PRESETS[args.preset](k=args.k, seed=args.seed) if args.preset != "sobol3" else dz.forte_sobol(args.m or 256, args.k, args.seed)
    else:
        if not args.axis:
            raise UsageError("at least one --axis is required (or use --preset)")
        try:
            space = dz.FeatureSpace(tuple(dz.FeatureAxis.parse(a) for a in args.axis))
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        if args.method == "sobol":
            if not args.m:
                raise UsageError("--method sobol needs --m")
            plan = dz.sobol_design(space, args.m, seed=args.seed, k=args.k)
        else:
            values = _parse_values(args.values)
            exclude = dz.max_area_exclusion(args.max_area) if args.max_area else None
            plan = dz.grid_design(space, values or None, exclude, k=args.k, seed=args.seed)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    plan.save(args.out)
    print(f"wrote {args.out}: M={plan.m} K={plan.k} method={plan.method}")
    return EXIT_OK


# --- run ---------------------------------------------------------------------


def _parse_uniform(spec: str) -> tuple[float, float, float]:
    try:
        e1, e2, ro = (float(x) for x in spec.split(","))
    except ValueError as exc:
        raise UsageError(f"--uniform-noise expects E1,E2,READOUT, got {spec!r}") from exc
    return e1, e2, ro


def cmd_run(args) -> int:
    plan = dz.DesignPlan.load(args.design)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    w_max = int(max(v[plan.space.index("w")] for v in plan.vectors))
    graph = None
    if args.backend == "noiseless":
        backend = noise.NoiselessBackend(args.workers)
        backend_id = "noiseless"
    elif args.backend == "noisy":
        if args.calibration:
            model = noise.ingest_calibration(args.calibration, args.conversion)
            graph = model.connectivity()
            backend_id = f"noisy:{args.calibration}:{args.conversion}"
        elif args.uniform_noise:
            e1, e2, ro = _parse_uniform(args.uniform_noise)
            graph = ConnectivityGraph.all_to_all(w_max)
            model = noise.NoiseModel.uniform(range(w_max), e1, e2, ro, graph)
            backend_id = f"noisy:uniform:{args.uniform_noise}"
        else:
            raise UsageError("--backend noisy needs --calibration or --uniform-noise")
        backend = noise.NoisyBackend(model, args.workers)
    else:
        if not args.counts:
            raise UsageError("--backend replay needs --counts")
        if not os.path.exists(args.counts):
            raise MissingData(f"counts file {args.counts} not found")
        backend = noise.ReplayBackend.from_file(args.counts)
        backend_id = f"replay:{args.counts}"
    if args.calibration and args.backend == "replay":
        graph = noise.ingest_calibration(args.calibration, args.conversion).connectivity()

    cfg = pipeline.RunConfig(args.circuits, args.estimator, args.shots, graph, args.seed)
    try:
        result = pipeline.run_design(plan, backend, cfg)
    except KeyError as exc:
        raise MissingData(str(exc)) from exc

    digest = pipeline.file_digest(args.design)
    pipeline.write_circuits(out / "circuits.txt", result.jobs, digest, result.targets)
    noise.write_counts(out / "counts.csv", result.jobs, result.counts)
    analysis.write_results(out / "results.csv", result.records)
    pipeline.write_errors(out / "errors.csv", result.errors)
    _update_manifest(
        out,
        "run",
        {
            "design": _rel(args.design, out),
            "design_sha256": digest,
            "seed": plan.seed if args.seed is None else args.seed,
            "backend": backend_id,
            "estimator": args.estimator,
            "circuits": args.circuits,
            "shots": args.shots,
            "artifacts": ["circuits.txt", "counts.csv", "results.csv", "errors.csv"],
            "failed_vectors": result.failed_vectors,
        },
    )
    print(f"ran {len(result.jobs)} circuits; {len(result.records)} estimates; {len(result.failed_vectors)} infeasible vectors")
    if result.errors and args.strict:
        print(f"infeasible vectors {result.failed_vectors}; see errors.csv", file=sys.stderr)
        return EXIT_MISSING
    return EXIT_OK


# --- fit / predict / report --------------------------------------------------


def _dataset(design_path: str, results_path: str, errors_path: str | None = None) -> analysis.CapabilityDataset:
    for p in (design_path, results_path):
        if not os.path.exists(p):
            raise MissingData(f"{p} not found")
    plan = dz.DesignPlan.load(design_path)
    errors_path = errors_path or str(Path(results_path).with_name("errors.csv"))
    skip = {i for i, _, _ in pipeline.read_errors(errors_path)}
    try:
        return analysis.assemble_dataset(plan, analysis.read_results(results_path), skip_vectors=skip)
    except analysis.MissingRecords as exc:
        raise MissingData(str(exc)) from exc


def _fit_one(ds, train, args, seed):
    cfg = gpmod.GPFitConfig(restarts=args.restarts, seed=seed)
    base = gpmod.fit(ds.X[train], ds.means[train], cfg, ds.space.log2_mask())
    if not args.monotonic:
        return base
    signs = tuple(int(s) for s in args.signs.split(",")) if args.signs else None
    vp = mono.place_virtual_points(base.Z, args.virtual, signs)
    return mono.ep_fit(base, vp, mono.EPConfig(nu=args.nu, max_sweeps=args.max_sweeps), reoptimize=args.reoptimize, seed=seed)


def _check_converged(model, trace_path: Path) -> None:
    if isinstance(model, mono.MonotonicGPModel) and not model.converged:
        _json_dump(trace_path, model.sites.trace)
        raise mono.EPNotConverged(f"EP did not converge; trace written to {trace_path}")


def cmd_fit(args) -> int:
    ds = _dataset(args.design, args.results)
    out = Path(args.out)
    all_idx = np.arange(ds.n)
    if args.instances <= 1 and args.train_frac is None:
        model = _fit_one(ds, all_idx, args, args.seed)
        _check_converged(model, out.with_suffix(".trace.json"))
        out.parent.mkdir(parents=True, exist_ok=True)
        model.save(out)
        _record_stage(out, "fit", {"design": args.design, "results": args.results},
                      {"seed": args.seed, "monotonic": bool(args.monotonic)})
        print(f"wrote {out}")
        return EXIT_OK
    frac = args.train_frac if args.train_frac is not None else 0.5
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for inst in range(max(1, args.instances)):
        seed = args.seed * 100003 + inst
        sp = analysis.split(ds.n, frac, seed)
        model = _fit_one(ds, list(sp.train), args, seed)
        _check_converged(model, out / f"instance{inst:02d}.trace.json")
        model.save(out / f"instance{inst:02d}.json")
        pred = model.predict(ds.X[list(sp.test)])[0]
        rows.append(analysis.ProtocolRow(frac, inst, "monotonic" if args.monotonic else "gp",
                                         analysis.delta_abs(np.clip(pred, 0, 1), ds.means[list(sp.test)]), len(sp.train), len(sp.test)))
    summary = analysis.summarize_protocol(rows)
    _json_dump(out / "summary.json", {"rows": [r.__dict__ for r in rows], "summary": summary})
    _record_stage(out, "fit", {"design": args.design, "results": args.results},
                  {"seed": args.seed, "monotonic": bool(args.monotonic), "instances": args.instances, "train_frac": frac})
    for s in summary:
        print(f"fraction={s['fraction']} variant={s['variant']} delta_abs mean={s['mean']:.4f} sd={s['sd']:.4f} (n={s['instances']})")
    return EXIT_OK


def _parse_grid(specs: list[str]) -> list[tuple[str, float, float, int]]:
    out = []
    for s in specs:
        parts = s.split(":")
        if len(parts) != 4:
            raise UsageError(f"--grid expects name:min:max:count, got {s!r}")
        try:
            out.append((parts[0], float(parts[1]), float(parts[2]), int(parts[3])))
        except ValueError as exc:
            raise UsageError(f"bad --grid spec {s!r}") from exc
    if len(out) != 2:
        raise UsageError("--grid needs exactly two axis specs")
    return out


def _model_space(model, design_path: str | None) -> dz.FeatureSpace:
    if design_path:
        return dz.DesignPlan.load(design_path).space
    raise UsageError("--design is needed to name the model's axes")


def cmd_predict(args) -> int:
    if not os.path.exists(args.model):
        raise MissingData(f"{args.model} not found")
    model = gpmod.load_model(args.model)
    space = _model_space(model, args.design)
    predict = (lambda P: model.predict(P, force=args.force)) if isinstance(model, mono.MonotonicGPModel) else model.predict
    if args.grid:
        (xn, x0, x1, xc), (yn, y0, y1, yc) = _parse_grid(args.grid)
        fixed = {k: v[0] for k, v in _parse_values(args.fixed).items()}
        try:
            hm = analysis.continuous_volumetric_grid(predict, space, xn, yn, fixed, (xc, yc), (x0, x1), (y0, y1))
        except (KeyError, ValueError) as exc:
            raise UsageError(str(exc)) from exc
        hm.write(args.out)
        _record_stage(Path(args.out), "predict", {"model": args.model, "design": args.design})
        print(f"wrote {args.out}: {hm.values.shape[0]}x{hm.values.shape[1]} heatmap")
        return EXIT_OK
    if not args.vectors:
        raise UsageError("predict needs --grid or --vectors")
    plan = dz.DesignPlan.load(args.vectors)
    mean, var = predict(plan.array())
    import csv

    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["vector_index", *plan.space.names, "mean", "variance"])
        for i, (v, m, s) in enumerate(zip(plan.vectors, mean, var)):
            w.writerow([i, *v, repr(float(m)), repr(float(s))])
    _record_stage(Path(args.out), "predict", {"model": args.model, "vectors": args.vectors})
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_report(args) -> int:
    ds = _dataset(args.design, args.results)
    out = Path(args.out)
    if args.metric == "delta-v":
        reports = analysis.monotonicity_reports(ds)
        if args.project:
            keys = ["full"] + [f"-{p}" for p in args.project]
            missing = [k for k in keys if k not in reports]
            if missing:
                raise UsageError(f"unknown feature(s) {missing}")
            reports = {k: reports[k] for k in keys}
        analysis.write_monotonicity(out, reports)
        for k, r in reports.items():
            print(f"{k}: {len(r.entries)} comparable vectors, mass(delta<-0.05)={r.mass_below(-0.05):.3f}")
    elif args.metric == "dataset":
        analysis.write_dataset(out, ds)
    elif args.metric == "volumetric":
        fixed = {k: v[0] for k, v in _parse_values(args.fixed).items()}
        analysis.volumetric_summary(ds, args.x_axis, args.y_axis, fixed).write(out)
    elif args.metric == "delta-abs":
        rows = analysis.model_error_protocol(
            ds, [args.train_frac], args.instances, args.seed, ("gp", "monotonic"),
            gpmod.GPFitConfig(restarts=args.restarts), args.virtual, mono.EPConfig(nu=args.nu, max_sweeps=args.max_sweeps),
        )
        summary = analysis.summarize_protocol(rows)
        _json_dump(out, {"rows": [r.__dict__ for r in rows], "summary": summary})
        for s in summary:
            print(f"{s['variant']}: delta_abs mean={s['mean']:.4f} sd={s['sd']:.4f}")
    _record_stage(out, f"report:{args.metric}", {"design": args.design, "results": args.results})
    print(f"wrote {out}")
    return EXIT_OK


# --- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="featuremetric", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("design", help="write a design file")
    d.add_argument("--axis", action="append", help="name:scale:kind:min:max, scale linear|log2, kind int|real (repeatable)")
    d.add_argument("--method", choices=("grid", "sobol"), default="grid")
    d.add_argument("--m", type=int, help="number of Sobol vectors")
    d.add_argument("--k", type=int, default=10, help="circuits per vector")
    d.add_argument("--seed", type=int, default=0, help="master seed recorded in the design")
    d.add_argument("--values", action="append", help="grid values name=v1,v2,... (default: integers or powers of two)")
    d.add_argument("--max-area", type=float, help="exclude grid points with w*d above this")
    d.add_argument("--preset", choices=sorted(PRESETS), help="built-in design (ignores --axis)")
    d.add_argument("-o", "--out", default="design.json")
    d.set_defaults(func=cmd_design)

    r = sub.add_parser("run", help="sample, execute and estimate")
    r.add_argument("--design", required=True)
    r.add_argument("--backend", choices=("noiseless", "noisy", "replay"), default="noiseless")
    r.add_argument("--calibration", help="calibration CSV path or bundled name (ibmq_algiers, ibmq_montreal)")
    r.add_argument("--conversion", choices=("direct", "infidelity"), default="direct", help="how calibration rates become Pauli-error probabilities")
    r.add_argument("--uniform-noise", help="E1,E2,READOUT uniform error probabilities (all-to-all connectivity)")
    r.add_argument("--counts", help="counts CSV for the replay backend")
    r.add_argument("--estimator", choices=(SUCCESS_PROB, SRDFE, "success"), default=SUCCESS_PROB)
    r.add_argument("--circuits", choices=(pipeline.MIRROR, pipeline.FIXED_DENSITY), default=pipeline.MIRROR)
    r.add_argument("--shots", type=int, default=1024)
    r.add_argument("--k", type=int, help="override circuits per vector")
    r.add_argument("--seed", type=int, help="master seed (default: the design's)")
    r.add_argument("--workers", type=int, help="worker processes (default: $FEATUREMETRIC_WORKERS or 1)")
    r.add_argument("--strict", action="store_true", help="exit nonzero if any vector is infeasible")
    r.add_argument("--out-dir", default="run")
    r.set_defaults(func=cmd_run)

    def model_flags(q):
        q.add_argument("--monotonic", action="store_true", help="fit the EP monotonic variant")
        q.add_argument("--virtual", type=int, default=30, help="number of virtual derivative points")
        q.add_argument("--signs", help="declared derivative sign per feature, e.g. -1,-1,-1 (default all -1)")
        q.add_argument("--nu", type=float, default=1e-6, help="probit sharpness")
        q.add_argument("--reoptimize", action="store_true", help="re-select hyperparameters by log Z_EP")
        q.add_argument("--max-sweeps", type=int, default=200, help="EP sweep limit")
        q.add_argument("--restarts", type=int, default=10)
        q.add_argument("--seed", type=int, default=0)

    f = sub.add_parser("fit", help="fit GP capability models")
    f.add_argument("--design", required=True)
    f.add_argument("--results", required=True)
    f.add_argument("--train-frac", type=float, help="train on a random fraction (test on the rest)")
    f.add_argument("--instances", type=int, default=1, help="number of random splits")
    model_flags(f)
    f.add_argument("-o", "--out", default="model.json", help="model file, or directory when splitting")
    f.set_defaults(func=cmd_fit)

    pr = sub.add_parser("predict", help="evaluate a model on a grid or design")
    pr.add_argument("--model", required=True)
    pr.add_argument("--design", help="design file naming the model's feature axes")
    pr.add_argument("--grid", nargs=2, metavar="NAME:MIN:MAX:COUNT")
    pr.add_argument("--fixed", action="append", help="name=value for features off the grid")
    pr.add_argument("--vectors", help="design file whose vectors to predict")
    pr.add_argument("--force", action="store_true", help="predict from an unconverged EP model")
    pr.add_argument("-o", "--out", default="prediction.csv")
    pr.set_defaults(func=cmd_predict)

    rp = sub.add_parser("report", help="metrics and summaries")
    rp.add_argument("--design", required=True)
    rp.add_argument("--results", required=True)
    rp.add_argument("--metric", choices=("delta-v", "delta-abs", "volumetric", "dataset"), required=True)
    rp.add_argument("--project", action="append", help="feature(s) to drop for projected delta-v")
    rp.add_argument("--x-axis", default="w")
    rp.add_argument("--y-axis", default="d")
    rp.add_argument("--fixed", action="append")
    rp.add_argument("--train-frac", type=float, default=0.5)
    rp.add_argument("--instances", type=int, default=20)
    rp.add_argument("--virtual", type=int, default=30)
    rp.add_argument("--nu", type=float, default=1e-6)
    rp.add_argument("--max-sweeps", type=int, default=200)
    rp.add_argument("--restarts", type=int, default=10)
    rp.add_argument("--seed", type=int, default=0)
    rp.add_argument("-o", "--out", default="report.csv")
    rp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if getattr(args, "estimator", None) == "success":
        args.estimator = SUCCESS_PROB
    if getattr(args, "k", None) is not None and args.command == "run":
        # a K override runs against an adjusted copy of the design in the run directory
        plan = dz.DesignPlan.load(args.design)
        plan.k = args.k
        tmp = Path(args.out_dir)
        tmp.mkdir(parents=True, exist_ok=True)
        plan.save(tmp / "design.json")
        args.design = str(tmp / "design.json")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (MissingData, FileNotFoundError) as exc:
        print(f"missing data: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (gpmod.NumericalFailure, mono.EPNotConverged) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except dz.EmptyDesign as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
