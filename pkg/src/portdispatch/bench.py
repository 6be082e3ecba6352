"""Experiment harness: plan files, method runners, statistics, CSV outputs.

A plan names the methods to compare, the train/test instance files, and the
search budget parameters. Every learning method gets the same
simulator-evaluation budget (the seeded hybrid's closed-form request count);
static dispatchers are just scored. Outputs are delimited files designed to
be re-parseable by this module's own readers.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.stats import binomtest

from .dispatchers import (
    Dispatcher,
    ManualDispatcher,
    ManualParams,
    TreeDispatcher,
    baseline_dispatchers,
)
from .engine import run_simulation
from .gp import FitnessEvaluator, Individual
from .hybrid import (
    HybridConfig,
    HybridHistoryRow,
    HybridRun,
    build_policy,
    predicted_requests,
    run_hybrid,
    run_lgp,
    _derive_rngs,
)
from .instance import TerminalInstance, load_instance
from .policy import standalone_search

logger = logging.getLogger(__name__)

STATIC_METHODS = ("manual", "random", "fifo", "stt", "mtr")
TRAINED_METHODS = ("lgp", "gprr", "gprt", "gprr_star", "gprt_star",
                   "rnn_standalone", "transformer_standalone")
METHODS = STATIC_METHODS + TRAINED_METHODS
CURVE_METHODS = ("lgp", "gprr", "gprt", "gprr_star", "gprt_star")


class PlanError(ValueError):
    """An experiment plan failed validation."""


@dataclass(frozen=True)
class GpParams:
    population_size: int = 1024
    K: int = 20
    N: int = 512
    total_generations: int = 500
    tournament_size: int = 7

    @staticmethod
    def desk() -> "GpParams":
        return GpParams(population_size=64, K=5, N=32, total_generations=30,
                        tournament_size=3)


@dataclass
class ExperimentPlan:
    methods: list[str]
    train_instances: list[str]
    test_instances: list[str]
    repetitions: int = 1
    seeds: list[int] = field(default_factory=list)
    gp: GpParams = field(default_factory=GpParams)
    compare: list[tuple[str, str]] = field(default_factory=list)

    def validate(self) -> None:
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise PlanError(f"unknown methods {unknown}; valid: {list(METHODS)}")
        if not self.methods:
            raise PlanError("plan names no methods")
        if not self.train_instances:
            raise PlanError("plan names no training instances")
        overlap = set(self.train_instances) & set(self.test_instances)
        if overlap:
            raise PlanError(f"train/test instance sets overlap: {sorted(overlap)}")
        if self.repetitions < 1:
            raise PlanError("repetitions must be >= 1")
        if self.seeds and len(self.seeds) != self.repetitions:
            raise PlanError("seeds, when given, must match repetitions")
        for a, b in self.compare:
            if a not in self.methods or b not in self.methods:
                raise PlanError(f"compare pair ({a}, {b}) not covered by methods")

    @property
    def run_seeds(self) -> list[int]:
        return self.seeds or list(range(self.repetitions))


def load_plan(path) -> ExperimentPlan:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise PlanError(f"cannot read plan {path}: {exc}") from exc
    gp = GpParams(**raw.get("gp", {})) if raw.get("gp") else GpParams()
    plan = ExperimentPlan(
        methods=list(raw.get("methods", [])),
        train_instances=list(raw.get("train_instances", [])),
        test_instances=list(raw.get("test_instances", [])),
        repetitions=int(raw.get("repetitions", 1)),
        seeds=[int(s) for s in raw.get("seeds", [])],
        gp=gp,
        compare=[tuple(p) for p in raw.get("compare", [])],
    )
    plan.validate()
    return plan


def save_plan(path, plan: ExperimentPlan) -> None:
    payload = {
        "methods": plan.methods,
        "train_instances": plan.train_instances,
        "test_instances": plan.test_instances,
        "repetitions": plan.repetitions,
        "seeds": plan.seeds,
        "gp": {
            "population_size": plan.gp.population_size,
            "K": plan.gp.K,
            "N": plan.gp.N,
            "total_generations": plan.gp.total_generations,
            "tournament_size": plan.gp.tournament_size,
        },
        "compare": [list(p) for p in plan.compare],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def default_manual_params(instance: TerminalInstance) -> ManualParams:
    desired = max(1.0, round(instance.trucks / len(instance.qcs)))
    return ManualParams(desired_trucks=desired, priority=1.0,
                        truck_limit=2.0 * desired)


# ---------------------------------------------------------------------------
# Method runners
# ---------------------------------------------------------------------------

def hybrid_config(plan_gp: GpParams, policy_kind: str, seed: int,
                  seeding: bool = True, train: bool = True) -> HybridConfig:
    return HybridConfig(
        policy_kind=policy_kind, K=plan_gp.K, M=plan_gp.population_size,
        N=plan_gp.N, total_generations=plan_gp.total_generations,
        seeding_enabled=seeding, train_policy=train, rng_seed=seed,
        tournament_size=plan_gp.tournament_size)


def shared_budget(plan_gp: GpParams) -> int:
    """Simulator-evaluation budget shared by all learning methods."""
    return predicted_requests(hybrid_config(plan_gp, "transformer", 0))


def train_method(method: str, plan_gp: GpParams, seed: int,
                 train_instances: Sequence[TerminalInstance]) -> HybridRun:
    """Run one learning method at one seed; returns its best and history."""
    budget = shared_budget(plan_gp)
    if method == "lgp":
        return run_lgp(train_instances, seed,
                       population_size=plan_gp.population_size,
                       eval_budget=budget,
                       tournament_size=plan_gp.tournament_size)
    if method in ("gprr", "gprt", "gprr_star", "gprt_star"):
        kind = "lstm" if method.startswith("gprr") else "transformer"
        cfg = hybrid_config(plan_gp, kind, seed,
                            seeding=not method.endswith("_star"), train=True)
        return run_hybrid(cfg, train_instances)
    if method in ("rnn_standalone", "transformer_standalone"):
        kind = "lstm" if method == "rnn_standalone" else "transformer"
        _, policy_seed, sample_rng = _derive_rngs(seed)
        policy = build_policy(kind, policy_seed)
        evaluator = FitnessEvaluator(train_instances)
        best, stats = standalone_search(policy, budget, evaluator, sample_rng)
        history = [HybridHistoryRow(generation=i, best=s.best_fitness,
                                    mean=float("nan"), token_count_best=best.token_count,
                                    delta=0.0, baseline=0.0)
                   for i, s in enumerate(stats)]
        return HybridRun(best=best, history=history,
                         requests=evaluator.requests,
                         unique_evaluations=evaluator.unique_evaluations,
                         cache_hits=evaluator.cache_hits)
    raise PlanError(f"{method} is not a trained method")


def dispatcher_for(method: str, instance: TerminalInstance,
                   best: Individual | None) -> Dispatcher:
    if method == "manual":
        return ManualDispatcher(default_manual_params(instance))
    if method in STATIC_METHODS:
        return baseline_dispatchers()[method]
    assert best is not None
    return TreeDispatcher(best.tree, name=method)


# ---------------------------------------------------------------------------
# Result rows and aggregation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ResultRow:
    method: str
    seed: int
    block: str       # "train" or "test"
    instance: str    # instance file stem
    teu_per_hour: float
    token_count: int | None  # best-heuristic size for expression methods


def summarize(rows: Sequence[ResultRow]) -> list[dict]:
    """Per-method per-block averages plus improvement vs the manual rule."""
    by_key: dict[tuple[str, str], list[float]] = {}
    for row in rows:
        by_key.setdefault((row.method, row.block), []).append(row.teu_per_hour)
    manual_avg = {block: float(np.mean(by_key[("manual", block)]))
                  for (m, block) in by_key if m == "manual"}
    out = []
    for (method, block), values in sorted(by_key.items()):
        avg = float(np.mean(values))
        entry: dict = {"method": method, "block": block,
                       "avg_teu_per_hour": avg, "n": len(values)}
        base = manual_avg.get(block)
        if base:
            entry["improvement_pct"] = 100.0 * (avg - base) / base
        out.append(entry)
    return out


def sign_test(rows: Sequence[ResultRow], method_a: str, method_b: str,
              block: str | None = None) -> dict:
    """Paired sign test over per-(block, instance) means across seeds."""
    def per_set_means(method: str) -> dict[tuple[str, str], float]:
        acc: dict[tuple[str, str], list[float]] = {}
        for row in rows:
            if row.method != method:
                continue
            if block is not None and row.block != block:
                continue
            acc.setdefault((row.block, row.instance), []).append(row.teu_per_hour)
        return {k: float(np.mean(v)) for k, v in acc.items()}

    a_means = per_set_means(method_a)
    b_means = per_set_means(method_b)
    keys = sorted(set(a_means) & set(b_means))
    wins = sum(1 for k in keys if a_means[k] > b_means[k])
    losses = sum(1 for k in keys if a_means[k] < b_means[k])
    ties = len(keys) - wins - losses
    trials = wins + losses
    p_value = binomtest(wins, trials, 0.5).pvalue if trials else 1.0
    return {"method_a": method_a, "method_b": method_b,
            "block": block or "all", "n_sets": len(keys), "wins": wins,
            "losses": losses, "ties": ties, "p_value": float(p_value)}


def token_count_report(rows: Sequence[ResultRow]) -> list[dict]:
    """Mean/std of final-best token counts per expression method."""
    per_method: dict[str, dict[int, int]] = {}
    for row in rows:
        if row.token_count is None:
            continue
        per_method.setdefault(row.method, {})[row.seed] = row.token_count
    out = []
    for method in sorted(per_method):
        counts = np.array(list(per_method[method].values()), dtype=float)
        out.append({"method": method, "mean_tokens": float(counts.mean()),
                    "std_tokens": float(counts.std()), "n": len(counts)})
    return out


# ---------------------------------------------------------------------------
# CSV round trip
# ---------------------------------------------------------------------------

def write_results_csv(path, rows: Sequence[ResultRow]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "seed", "block", "instance",
                         "teu_per_hour", "token_count"])
        for row in rows:
            writer.writerow([row.method, row.seed, row.block, row.instance,
                             repr(row.teu_per_hour),
                             "" if row.token_count is None else row.token_count])


def read_results_csv(path) -> list[ResultRow]:
    rows: list[ResultRow] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for record in csv.DictReader(fh):
            rows.append(ResultRow(
                method=record["method"], seed=int(record["seed"]),
                block=record["block"], instance=record["instance"],
                teu_per_hour=float(record["teu_per_hour"]),
                token_count=int(record["token_count"]) if record["token_count"] else None))
    return rows


def write_history_csv(path, history: Sequence[HybridHistoryRow]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["generation", "best", "mean", "token_count_best",
                         "delta", "baseline"])
        for row in history:
            writer.writerow([row.generation, repr(row.best), repr(row.mean),
                             row.token_count_best, repr(row.delta),
                             repr(row.baseline)])


def read_history_csv(path) -> list[HybridHistoryRow]:
    rows: list[HybridHistoryRow] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for record in csv.DictReader(fh):
            rows.append(HybridHistoryRow(
                generation=int(record["generation"]),
                best=float(record["best"]), mean=float(record["mean"]),
                token_count_best=int(record["token_count_best"]),
                delta=float(record["delta"]),
                baseline=float(record["baseline"])))
    return rows


def emit_training_curves(named_histories: Iterable[tuple[str, Sequence[HybridHistoryRow]]],
                         path) -> None:
    """Long-format (method, generation, best_fitness) CSV for external plotting."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "generation", "best_fitness"])
        for method, history in named_histories:
            for row in history:
                writer.writerow([method, row.generation, repr(row.best)])


def read_training_curves(path) -> list[tuple[str, int, float]]:
    out = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for record in csv.DictReader(fh):
            out.append((record["method"], int(record["generation"]),
                        float(record["best_fitness"])))
    return out


def write_table_csv(path, records: Sequence[dict]) -> None:
    if not records:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write("\n")
        return
    fields = list(records[0].keys())
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for record in records:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v)
                             for k, v in record.items()})


def write_manifest(path, settings: Mapping[str, object],
                   instance_paths: Sequence[str]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for key in sorted(settings):
            fh.write(f"{key} = {settings[key]}\n")
        for p in instance_paths:
            digest = hashlib.sha256(Path(p).read_bytes()).hexdigest()
            fh.write(f"sha256 {digest}  {p}\n")


# ---------------------------------------------------------------------------
# Full experiment
# ---------------------------------------------------------------------------

def run_experiment(plan: ExperimentPlan, out_dir) -> dict[str, object]:
    """Execute a plan and write results, summary, curves, token counts,
    significance, and a manifest under out_dir. Returns the in-memory rows
    and summaries for programmatic use."""
    plan.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    blocks = {
        "train": [(p, load_instance(p)) for p in plan.train_instances],
        "test": [(p, load_instance(p)) for p in plan.test_instances],
    }
    train_objs = [inst for _, inst in blocks["train"]]

    rows: list[ResultRow] = []
    curve_entries: list[tuple[str, Sequence[HybridHistoryRow]]] = []
    for method in plan.methods:
        for seed in plan.run_seeds:
            best: Individual | None = None
            if method in TRAINED_METHODS:
                run = train_method(method, plan.gp, seed, train_objs)
                best = run.best
                history_path = out / f"history_{method}_{seed}.csv"
                write_history_csv(history_path, run.history)
                if method in CURVE_METHODS:
                    curve_entries.append((method, run.history))
            for block, entries in blocks.items():
                for path_str, inst in entries:
                    dispatcher = dispatcher_for(method, inst, best)
                    result = run_simulation(inst, dispatcher, seed,
                                            collect_decisions=False)
                    rows.append(ResultRow(
                        method=method, seed=seed, block=block,
                        instance=Path(path_str).stem,
                        teu_per_hour=result.teu_per_hour,
                        token_count=best.token_count if best else None))
            logger.info("finished %s seed %d", method, seed)

    write_results_csv(out / "results.csv", rows)
    summary = summarize(rows)
    write_table_csv(out / "summary.csv", summary)
    pairs = plan.compare or _default_pairs(plan.methods)
    significance = [sign_test(rows, a, b) for a, b in pairs]
    write_table_csv(out / "significance.csv", significance)
    tokens = token_count_report(rows)
    write_table_csv(out / "token_counts.csv", tokens)
    emit_training_curves(curve_entries, out / "curves.csv")
    write_manifest(out / "manifest.txt", {
        "methods": ",".join(plan.methods),
        "repetitions": plan.repetitions,
        "seeds": ",".join(str(s) for s in plan.run_seeds),
        "gp.population_size": plan.gp.population_size,
        "gp.K": plan.gp.K,
        "gp.N": plan.gp.N,
        "gp.total_generations": plan.gp.total_generations,
        "gp.tournament_size": plan.gp.tournament_size,
        "shared_budget": shared_budget(plan.gp),
    }, plan.train_instances + plan.test_instances)
    return {"rows": rows, "summary": summary, "significance": significance,
            "token_counts": tokens}


def _default_pairs(methods: Sequence[str]) -> list[tuple[str, str]]:
    wanted = [("gprt", "lgp"), ("gprr", "lgp"), ("gprt", "manual"),
              ("gprr", "manual"), ("lgp", "manual")]
    return [(a, b) for a, b in wanted if a in methods and b in methods]
