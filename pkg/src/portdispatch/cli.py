"""Command-line interface.

Subcommands:
    gen     write synthetic instance files
    run     execute an experiment plan (results/summary/curves CSVs)
    train   one learning run (best heuristic, history, manifest)
    curves  merge history CSVs into a long-format training-curve CSV
    report  re-aggregate a results.csv into summary/significance/token tables

Exit status 0 on success, 2 on validation errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import bench
from .bench import (
    ExperimentPlan,
    GpParams,
    PlanError,
    load_plan,
    read_history_csv,
    read_results_csv,
    write_history_csv,
    write_manifest,
    write_table_csv,
)
from .expressions import save_heuristics
from .generate import gen_instance
from .instance import InstanceError, load_instance, save_instance

DESK_INSTANCE = {"qcs": 2, "ycs": 4, "trucks": 6, "tasks": 100}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="portdispatch",
        description="Container-terminal truck dispatch benchmark harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("gen", help="generate synthetic instance files")
    p_gen.add_argument("--out", required=True, help="output directory")
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--count", type=int, default=1,
                       help="number of instances (seeds seed..seed+count-1)")
    p_gen.add_argument("--qcs", type=int, default=2)
    p_gen.add_argument("--ycs", type=int, default=4)
    p_gen.add_argument("--trucks", type=int, default=6)
    p_gen.add_argument("--tasks", type=int, default=100)
    p_gen.add_argument("--q", type=int, default=3)
    p_gen.add_argument("--desk", action="store_true",
                       help="apply desk-scale size overrides")

    p_run = sub.add_parser("run", help="run an experiment plan")
    p_run.add_argument("--plan", required=True)
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--desk", action="store_true",
                       help="override plan GP sizes with desk-scale defaults")

    p_train = sub.add_parser("train", help="run one learning method")
    p_train.add_argument("--method", required=True,
                         choices=sorted(bench.TRAINED_METHODS))
    p_train.add_argument("--out", required=True)
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--instances", nargs="+", required=True,
                         help="training instance files")
    p_train.add_argument("--desk", action="store_true")

    p_curves = sub.add_parser("curves", help="merge history CSVs")
    p_curves.add_argument("--out", required=True, help="output CSV path")
    p_curves.add_argument("histories", nargs="+",
                          help="history CSVs named history_<method>_<seed>.csv")

    p_report = sub.add_parser("report", help="re-aggregate results.csv")
    p_report.add_argument("--out", required=True, help="output directory")
    p_report.add_argument("--results", required=True, help="results.csv path")
    return parser


def _cmd_gen(args) -> int:
    sizes = dict(qcs=args.qcs, ycs=args.ycs, trucks=args.trucks, tasks=args.tasks)
    if args.desk:
        sizes.update(DESK_INSTANCE)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for offset in range(args.count):
        seed = args.seed + offset
        inst = gen_instance(seed, q=args.q, **sizes)
        path = out / f"instance_s{seed}.txt"
        save_instance(path, inst)
        print(path)
    return 0


def _cmd_run(args) -> int:
    plan = load_plan(args.plan)
    if args.desk:
        plan.gp = GpParams.desk()
        plan.validate()
    bench.run_experiment(plan, args.out)
    print(f"wrote results under {args.out}")
    return 0


def _cmd_train(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    gp = GpParams.desk() if args.desk else GpParams()
    instances = [load_instance(p) for p in args.instances]
    run = bench.train_method(args.method, gp, args.seed, instances)
    best_path = out / f"best_{args.method}_{args.seed}.heur"
    save_heuristics(best_path, [run.best.tree],
                    header=f"method={args.method} seed={args.seed} "
                           f"fitness={run.best.fitness}")
    history_path = out / f"history_{args.method}_{args.seed}.csv"
    write_history_csv(history_path, run.history)
    write_manifest(out / f"manifest_{args.method}_{args.seed}.txt", {
        "method": args.method,
        "seed": args.seed,
        "gp.population_size": gp.population_size,
        "gp.K": gp.K,
        "gp.N": gp.N,
        "gp.total_generations": gp.total_generations,
        "gp.tournament_size": gp.tournament_size,
        "requests": run.requests,
        "unique_evaluations": run.unique_evaluations,
        "cache_hits": run.cache_hits,
        "best_fitness": run.best.fitness,
    }, list(args.instances))
    print(f"best fitness {run.best.fitness:.4f} ({run.best.token_count} tokens)")
    print(best_path)
    print(history_path)
    return 0


def _cmd_curves(args) -> int:
    named = []
    for path_str in args.histories:
        stem = Path(path_str).stem
        parts = stem.split("_")
        method = "_".join(parts[1:-1]) if len(parts) >= 3 else stem
        named.append((method, read_history_csv(path_str)))
    bench.emit_training_curves(named, args.out)
    print(args.out)
    return 0


def _cmd_report(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = read_results_csv(args.results)
    summary = bench.summarize(rows)
    write_table_csv(out / "summary.csv", summary)
    methods = sorted({r.method for r in rows})
    pairs = bench._default_pairs(methods)
    write_table_csv(out / "significance.csv",
                    [bench.sign_test(rows, a, b) for a, b in pairs])
    write_table_csv(out / "token_counts.csv", bench.token_count_report(rows))
    for line in summary:
        imp = line.get("improvement_pct")
        imp_text = f" ({imp:+.2f}% vs manual)" if imp is not None else ""
        print(f"{line['block']:>5}  {line['method']:<24}"
              f"{line['avg_teu_per_hour']:9.3f} TEU/h{imp_text}")
    return 0


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "gen": _cmd_gen,
        "run": _cmd_run,
        "train": _cmd_train,
        "curves": _cmd_curves,
        "report": _cmd_report,
    }
    try:
        return handlers[args.command](args)
    except (PlanError, InstanceError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
