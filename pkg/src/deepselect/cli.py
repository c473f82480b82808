"""Command-line front end.

Exit codes: 0 on success, 2 on usage or input-validation problems, 1 on
internal errors.  Every command is deterministic for a fixed seed; the
DEEPSELECT_THREADS environment variable caps fitness/run workers without
affecting results.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import baselines, data_model, evaluation, fitness, report, search, synthetic
from .data_model import SelectionResult, load_manifest, write_manifest
from .errors import DeepSelectError, SampleSizeError

log = logging.getLogger("deepselect")

SELECT_METHODS = ("deepgd",) + baselines.BASELINE_METHODS


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="deepselect",
        description="Black-box test-input selection and fault-detection scoring.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("select", help="select a subset with one method")
    p.add_argument("manifest", type=Path)
    p.add_argument("--method", choices=SELECT_METHODS, default=None,
                   help="defaults to the manifest's method")
    p.add_argument("--budget", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--profile", choices=tuple(search.PROFILES), default="desk")
    p.add_argument("--variant", choices=search.VARIANTS, default="full")
    p.add_argument("--out", type=Path, default=Path("."), help="output directory")
    p.add_argument("--figures", action="store_true",
                   help="also render front/convergence figures (deepgd only)")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("evaluate", help="score a selection file against fault clusters")
    p.add_argument("manifest", type=Path)
    p.add_argument("--selection", type=Path, required=True)
    p.add_argument("--method", default="external")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", type=Path, default=None, help="report JSON (default stdout)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="repeated runs of several methods plus statistics")
    p.add_argument("manifest", type=Path)
    p.add_argument("--methods", default="deepgd,random,gini,maxp",
                   help="comma list; deepgd may carry a :variant suffix")
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--budget", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--profile", choices=tuple(search.PROFILES), default="desk")
    p.add_argument("--out", type=Path, default=Path("."))
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("cluster-faults",
                       help="estimate fault clusters of mispredictions by density clustering")
    p.add_argument("manifest", type=Path)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--min-pts", type=int, default=3)
    p.add_argument("--class-weight", type=float, default=1.0)
    p.add_argument("--out", type=Path, required=True, help="clusters CSV to write")
    p.set_defaults(func=cmd_cluster_faults)

    p = sub.add_parser("validate", help="load every file a manifest names and check invariants")
    p.add_argument("manifest", type=Path)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("gen-synthetic", help="generate a planted-fault benchmark dataset")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--m", type=int, default=10)
    p.add_argument("--d", type=int, default=32)
    p.add_argument("--faults", type=int, default=20)
    p.add_argument("--mispredict-rate", type=float, default=0.15)
    p.add_argument("--correlation", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--budget", type=int, default=100)
    p.set_defaults(func=cmd_gen_synthetic)
    return parser


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------

def _run_method(
    spec: str,
    run: data_model.LoadedRun,
    budget: int,
    seed: int,
    profile: str,
    variant: str = "full",
) -> tuple[SelectionResult, "search.NsgaSubsetSelector | None"]:
    method, _, suffix = spec.partition(":")
    if suffix:
        variant = suffix
    probs = run.probabilities
    feats = fitness.normalize_features(run.features)
    if method == "deepgd":
        params = search.SearchParams.for_profile(
            profile, budget=budget, seed=seed, variant=variant
        )
        result, engine = search.select_deepgd(probs, feats, params)
        return result, engine
    if method == "random":
        result = baselines.random_select(probs.n, budget, seed)
    elif method == "gini":
        result = baselines.gini_top_k(probs, budget, seed)
    elif method == "maxp":
        result = baselines.maxp_top_k(probs, budget, seed)
    else:
        raise DeepSelectError(f"unknown method {spec!r}")
    return baselines.with_fitness(result, probs, feats), None


def cmd_select(args) -> int:
    manifest = load_manifest(args.manifest)
    budget = args.budget if args.budget is not None else manifest.budget
    if budget is None or budget < 1:
        raise DeepSelectError(f"budget must be a positive integer, got {budget}")
    seed = args.seed if args.seed is not None else manifest.seed
    method = args.method or manifest.method
    run = data_model.load_run(manifest)
    result, engine = _run_method(method, run, budget, seed, args.profile, args.variant)

    args.out.mkdir(parents=True, exist_ok=True)
    csv_path = args.out / "selection.csv"
    data_model.write_selection_csv(csv_path, result.subset)
    sidecar = result.to_json_dict()
    sidecar["manifest"] = str(args.manifest)
    sidecar["profile"] = args.profile if method.startswith("deepgd") else None
    write_manifest(args.out / "selection.json", sidecar)
    if args.figures and engine is not None and engine.last_archive is not None:
        points = [(i.fitness.gini, i.fitness.log_gd) for i in engine.last_archive]
        report.save_front(
            points, (result.gini, result.log_gd), args.out / "pareto_front.png"
        )
        report.save_convergence(engine.history, args.out / "convergence.png")
    print(f"wrote {csv_path} ({len(result.subset)} ids, method {result.method})")
    return 0


def cmd_evaluate(args) -> int:
    manifest = load_manifest(args.manifest)
    run = data_model.load_run(manifest, require_labels=True)
    if run.partition is None:
        raise DeepSelectError("manifest names no cluster file; run cluster-faults first")
    subset = data_model.read_selection_csv(args.selection)
    if not subset:
        raise DeepSelectError(f"{args.selection}: empty selection")
    n = run.probabilities.n
    for i in subset:
        if not 0 <= i < n:
            raise DeepSelectError(f"selection id {i} outside [0, {n})")
    mask = data_model.misprediction_mask(run.probabilities, run.labels)
    run.partition.validate_against_mask(mask)
    feats = fitness.normalize_features(run.features)
    seed = args.seed if args.seed is not None else manifest.seed
    result = SelectionResult(
        subset=tuple(subset), method=args.method, budget=len(subset), seed=seed
    )
    rep = evaluation.evaluate_selection(result, mask, run.partition, feats)
    doc = json.dumps(rep.to_json_dict(), indent=2, sort_keys=True)
    if args.out:
        args.out.write_text(doc + "\n", encoding="utf-8")
        print(f"wrote {args.out}")
    else:
        print(doc)
    return 0


def cmd_compare(args) -> int:
    manifest = load_manifest(args.manifest)
    budget = args.budget if args.budget is not None else manifest.budget
    if budget is None or budget < 1:
        raise DeepSelectError(f"budget must be a positive integer, got {budget}")
    if args.repeats < 1:
        raise DeepSelectError(f"--repeats must be >= 1, got {args.repeats}")
    base_seed = args.seed if args.seed is not None else manifest.seed
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    if not methods:
        raise DeepSelectError("--methods lists no methods")

    run = data_model.load_run(manifest, require_labels=True)
    if run.partition is None:
        raise DeepSelectError("manifest names no cluster file; run cluster-faults first")
    mask = data_model.misprediction_mask(run.probabilities, run.labels)
    run.partition.validate_against_mask(mask)
    feats = fitness.normalize_features(run.features)

    jobs = [(mth, r) for mth in methods for r in range(args.repeats)]

    def one(job: tuple[str, int]) -> evaluation.EvalReport:
        mth, r = job
        result, _ = _run_method(mth, run, budget, base_seed + r, args.profile)
        return evaluation.evaluate_selection(result, mask, run.partition, feats)

    workers = search.threads_from_env()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(one, jobs))
    else:
        reports = [one(job) for job in jobs]

    args.out.mkdir(parents=True, exist_ok=True)
    rows_path = args.out / "comparison.csv"
    with open(rows_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(evaluation.EvalReport.CSV_FIELDS)
        for (mth, r), rep in zip(jobs, reports):
            writer.writerow(rep.csv_row(r))
    print(f"wrote {rows_path}")

    by_method: dict[str, list[evaluation.EvalReport]] = {m: [] for m in methods}
    for (mth, _), rep in zip(jobs, reports):
        by_method[mth].append(rep)

    if args.repeats < 2:
        print("warning: stats need --repeats >= 2; rows emitted without stats",
              file=sys.stderr)
    else:
        stats: dict[str, dict] = {}
        for mth in methods:
            fdrs = [rep.fdr for rep in by_method[mth]]
            entry = {"fdr": evaluation.stability_stats(fdrs).to_json_dict()}
            lgds = [rep.log_gd for rep in by_method[mth]
                    if rep.log_gd is not None and np.isfinite(rep.log_gd)]
            if len(lgds) >= 2:
                entry["log_gd"] = evaluation.stability_stats(lgds).to_json_dict()
            stats[mth] = entry
        deepgd_tags = [m for m in methods if m.split(":")[0] == "deepgd"]
        if deepgd_tags:
            ref = deepgd_tags[0]
            ref_fdrs = [rep.fdr for rep in by_method[ref]]
            for mth in methods:
                if mth == ref:
                    continue
                pairs = list(zip(ref_fdrs, (rep.fdr for rep in by_method[mth])))
                try:
                    stats[mth]["wilcoxon_vs_" + ref] = {
                        "two_sided": evaluation.wilcoxon_signed_rank(pairs),
                        "greater": evaluation.wilcoxon_signed_rank(pairs, "greater"),
                    }
                except SampleSizeError as exc:
                    stats[mth]["wilcoxon_vs_" + ref] = {"skipped": str(exc)}
        stats_path = args.out / "stats.json"
        stats_path.write_text(
            json.dumps(stats, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        print(f"wrote {stats_path}")

    if not args.no_figures:
        fdr_series = {m: [rep.fdr for rep in by_method[m]] for m in methods}
        report.save_metric_by_method(
            fdr_series, args.out / "fdr_by_method.png",
            "fault detection rate", f"FDR by method (budget {budget})",
        )
        lgd_series = {m: [rep.log_gd for rep in by_method[m]] for m in methods}
        report.save_metric_by_method(
            lgd_series, args.out / "diversity_by_method.png",
            "log geometric diversity", f"selection diversity by method (budget {budget})",
        )
        print(f"wrote {args.out / 'fdr_by_method.png'} and diversity_by_method.png")
    return 0


def cmd_cluster_faults(args) -> int:
    manifest = load_manifest(args.manifest)
    run = data_model.load_run(manifest, require_labels=True)
    mask = data_model.misprediction_mask(run.probabilities, run.labels)
    feats = fitness.normalize_features(run.features)
    ids, rows = evaluation.build_fault_features(
        feats, run.labels, run.probabilities, mask, args.class_weight
    )
    labels = evaluation.dbscan_cluster(rows, args.eps, args.min_pts)
    write_pairs = [(int(i), int(c)) for i, c in zip(ids, labels)]
    data_model.write_id_value_csv(args.out, write_pairs)
    distinct = len({c for c in labels if c != data_model.NOISE})
    noise = int((labels == data_model.NOISE).sum())
    print(f"wrote {args.out}: {len(ids)} mispredictions, "
          f"{distinct} clusters, {noise} noise points")
    return 0


def cmd_validate(args) -> int:
    manifest = load_manifest(args.manifest)
    run = data_model.load_run(manifest)
    checks = [
        ("probabilities", f"{run.probabilities.n} x {run.probabilities.m}, rows stochastic"),
        ("features", f"{run.features.n} x {run.features.d}, all finite"),
    ]
    if run.labels is not None:
        mask = data_model.misprediction_mask(run.probabilities, run.labels)
        checks.append(("labels", f"{len(run.labels)} labels, "
                                 f"{int(mask.sum())} mispredictions"))
        if run.partition is not None:
            run.partition.validate_against_mask(mask)
            checks.append(("clusters",
                           f"{len(run.partition.clusters)} labelled mispredictions, "
                           f"{run.partition.total_faults} total faults"))
    if manifest.budget is not None and not 1 <= manifest.budget <= run.probabilities.n:
        raise DeepSelectError(
            f"budget {manifest.budget} outside [1, {run.probabilities.n}]"
        )
    for name, detail in checks:
        print(f"ok: {name}: {detail}")
    return 0


def cmd_gen_synthetic(args) -> int:
    dataset = synthetic.generate(
        n=args.n,
        m=args.m,
        d=args.d,
        faults=args.faults,
        mispredict_rate=args.mispredict_rate,
        seed=args.seed,
        correlation=args.correlation,
    )
    if not 1 <= args.budget <= args.n:
        raise DeepSelectError(f"budget {args.budget} outside [1, {args.n}]")
    manifest_path = synthetic.write_dataset(dataset, args.out, budget=args.budget)
    print(f"wrote {manifest_path} "
          f"(n={args.n}, m={args.m}, d={args.d}, faults={args.faults})")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except DeepSelectError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, ValueError, IndexError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # internal failure
        log.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
