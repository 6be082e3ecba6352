"""The policy-seeded GP loop and its plain-GP counterpart.

Each cycle: the sequence policy samples N heuristics; they seed the GP
population (joined by the top survivors of the previous cycle); GP evolves K
generations; the final M individuals merged with the cycle's N samples then
train the policy on their fitness. With seeding and policy training both
disabled the loop degrades, bitwise, to plain GP under the same seed: the GP
random stream is derived identically and nothing else touches it.

Simulator-evaluation budgeting is tracked through the fitness evaluator and
asserted against the closed-form count at the end of every run.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .dispatchers import ManualDispatcher, TreeDispatcher
from .engine import run_simulation
from .expressions import from_polish, to_polish, token_count
from .gp import (
    FitnessEvaluator,
    GenerationStats,
    GpConfig,
    Individual,
    ORIGIN_SEEDED,
    best_individual,
    evaluate_population,
    evolve,
    init_population,
    initial_stats,
)
from .instance import TerminalInstance
from .policy import (
    LstmPolicy,
    TrainState,
    TransformerPolicy,
    sample_sequence,
    shaped_reward,
    train_step,
)
from .policy.training import AdamState

logger = logging.getLogger(__name__)

POLICY_KINDS = ("lstm", "transformer")


@dataclass(frozen=True)
class HybridConfig:
    policy_kind: str = "transformer"   # "lstm" = RNN-seeded, "transformer" = attention-seeded
    K: int = 20                        # GP generations per cycle
    M: int = 1024                      # population size
    N: int = 512                       # policy-seeded individuals per cycle
    total_generations: int = 500
    seeding_enabled: bool = True       # False = the starred ablation
    train_policy: bool = True          # False with seeding off = plain GP
    rng_seed: int = 0
    tournament_size: int = 7
    max_depth: int = 17
    init_depth: tuple[int, int] = (2, 6)
    seed_max_len: int = 35             # (len-1)/2 <= max_depth keeps seeds legal
    train_epochs: int = 4
    train_batch: int = 64
    learning_rate: float = 0.001
    kappa: float = 10.0
    shaped_weight: float = 0.0         # weight of the shaped reward in returns
    cov_sign: float = -1.0

    @property
    def cycles(self) -> int:
        return self.total_generations // self.K

    def validate(self) -> None:
        if self.policy_kind not in POLICY_KINDS:
            raise ValueError(f"policy_kind must be one of {POLICY_KINDS}")
        if self.N > self.M:
            raise ValueError("N cannot exceed M")
        if self.seeding_enabled and self.N >= self.M:
            raise ValueError("seeding needs N < M so survivors carry the best forward")
        if self.total_generations % self.K != 0:
            raise ValueError("total_generations must be divisible by K")
        if self.seed_max_len > 2 * self.max_depth + 1:
            raise ValueError(
                "seed_max_len would allow sampled trees deeper than max_depth")


@dataclass(frozen=True)
class HybridHistoryRow:
    generation: int
    best: float                 # best-so-far fitness
    mean: float                 # population mean at this generation
    token_count_best: int       # tokens in the best-so-far individual
    delta: float                # imitation weight kappa/en at this point
    baseline: float             # EWMA reward baseline at this point


@dataclass
class HybridRun:
    best: Individual
    history: list[HybridHistoryRow]
    requests: int
    unique_evaluations: int
    cache_hits: int


def predicted_requests(cfg: HybridConfig) -> int:
    """Closed-form fitness-request count for a hybrid run (memoized sims
    are requested once per individual; duplicates resolve in the cache)."""
    C = cfg.cycles
    total = cfg.M + C * cfg.K * (cfg.M - 1)
    if cfg.seeding_enabled:
        total += (C - 1) * cfg.N
    elif cfg.train_policy:
        total += C * cfg.N
    return total


def _derive_rngs(seed: int):
    gp_ss, policy_ss, sample_ss = np.random.SeedSequence(seed).spawn(3)
    return (np.random.default_rng(gp_ss),
            int(policy_ss.generate_state(1)[0]),
            np.random.default_rng(sample_ss))


def build_policy(kind: str, seed: int):
    if kind == "lstm":
        return LstmPolicy(seed=seed)
    return TransformerPolicy(seed=seed)


def run_hybrid(cfg: HybridConfig, instances: Sequence[TerminalInstance],
               manual: ManualDispatcher | None = None) -> HybridRun:
    """Run the full seeded-evolution loop; returns the best individual, the
    per-generation history, and the budget counters."""
    cfg.validate()
    gp_cfg = GpConfig(
        population_size=cfg.M,
        tournament_size=cfg.tournament_size,
        max_depth=cfg.max_depth,
        init_depth=cfg.init_depth,
        generations=cfg.total_generations,
    )
    gp_rng, policy_seed, sample_rng = _derive_rngs(cfg.rng_seed)
    evaluator = FitnessEvaluator(instances)
    use_policy = cfg.seeding_enabled or cfg.train_policy
    policy = build_policy(cfg.policy_kind, policy_seed) if use_policy else None
    state = TrainState(policy=policy, adam=AdamState(lr=cfg.learning_rate),
                       kappa=cfg.kappa, standardize=True) if use_policy else None
    manual = manual or ManualDispatcher()

    history: list[HybridHistoryRow] = []
    best: Individual | None = None
    population: list[Individual] = []

    for cycle in range(cfg.cycles):
        samples: list[Individual] = []
        if use_policy:
            for _ in range(cfg.N):
                tokens, _ = sample_sequence(policy, sample_rng, cfg.seed_max_len)
                samples.append(Individual(from_polish(tokens), origin=ORIGIN_SEEDED))

        if cycle == 0:
            seed_trees = [ind.tree for ind in samples] if cfg.seeding_enabled else []
            population = init_population(gp_cfg, seed_trees, gp_rng)
            if cfg.seeding_enabled:
                # seed_max_len keeps sampled trees within the depth cap, so
                # the seeded slots are exactly our sample objects' trees
                samples = population[:len(samples)]
        elif cfg.seeding_enabled:
            survivors = sorted(population, key=lambda ind: -ind.fitness)  # type: ignore[operator,arg-type]
            population = samples + survivors[: cfg.M - cfg.N]

        evaluate_population(population, evaluator)
        if samples and not cfg.seeding_enabled:
            evaluate_population(samples, evaluator)

        best = _fold_best(best, population + samples)
        if cycle == 0:
            history.append(_hybrid_row(initial_stats(population), best, state))

        gp_history: list[GenerationStats] = []
        population = evolve(population, gp_cfg, cfg.K, gp_rng, evaluator,
                            gp_history, generation_offset=cycle * cfg.K)
        # Per-generation best-so-far: elitism makes generation bests
        # non-decreasing inside the cycle, so GenerationStats carries enough.
        run_fit = float(best.fitness) if best is not None else float("-inf")  # type: ignore[arg-type]
        run_tokens = best.token_count if best is not None else 0
        for row in gp_history:
            if row.best > run_fit:
                run_fit = row.best
                run_tokens = row.best_token_count
            history.append(HybridHistoryRow(
                generation=row.generation, best=run_fit, mean=row.mean,
                token_count_best=run_tokens,
                delta=state.delta if state is not None else 0.0,
                baseline=state.baseline if state is not None else 0.0))
        best = _fold_best(best, population)

        if cfg.train_policy and state is not None:
            _train_on_merged(cfg, state, list(population) + samples,
                             instances, manual, sample_rng)

    predicted = predicted_requests(cfg)
    if evaluator.requests != predicted:
        raise AssertionError(
            f"evaluation budget drifted: requested {evaluator.requests}, "
            f"predicted {predicted}")
    logger.info("hybrid run: %d fitness requests (%d simulated, %d cached)",
                evaluator.requests, evaluator.unique_evaluations,
                evaluator.cache_hits)
    assert best is not None
    return HybridRun(best=best, history=history, requests=evaluator.requests,
                     unique_evaluations=evaluator.unique_evaluations,
                     cache_hits=evaluator.cache_hits)


def _fold_best(best: Individual | None,
               candidates: Sequence[Individual]) -> Individual | None:
    for ind in candidates:
        if ind.fitness is None:
            continue
        if best is None or ind.fitness > best.fitness:  # type: ignore[operator]
            best = ind
    return best


def _hybrid_row(stats: GenerationStats, best: Individual | None,
                state: TrainState | None) -> HybridHistoryRow:
    best_fit = float(best.fitness) if best is not None else float("-inf")  # type: ignore[arg-type]
    tokens = best.token_count if best is not None else 0
    return HybridHistoryRow(
        generation=stats.generation,
        best=max(best_fit, stats.best),
        mean=stats.mean,
        token_count_best=tokens,
        delta=state.delta if state is not None else 0.0,
        baseline=state.baseline if state is not None else 0.0,
    )


def _train_on_merged(cfg: HybridConfig, state: TrainState,
                     merged: list[Individual],
                     instances: Sequence[TerminalInstance],
                     manual: ManualDispatcher,
                     rng: np.random.Generator) -> None:
    cap = state.policy.max_train_len
    usable = [ind for ind in merged
              if ind.fitness is not None and np.isfinite(ind.fitness)
              and (cap is None or token_count(ind.tree) <= cap)]
    if not usable:
        return
    data = []
    for ind in usable:
        reward = float(ind.fitness)  # type: ignore[arg-type]
        if cfg.shaped_weight != 0.0:
            reward += cfg.shaped_weight * _episode_shaped(
                ind, instances, manual, state.delta, cfg.cov_sign)
        data.append((to_polish(ind.tree), reward))
    for _ in range(cfg.train_epochs):
        order = rng.permutation(len(data))
        for lo in range(0, len(order), cfg.train_batch):
            batch = [data[int(j)] for j in order[lo:lo + cfg.train_batch]]
            train_step(state, batch)


def _episode_shaped(ind: Individual, instances: Sequence[TerminalInstance],
                    manual: ManualDispatcher, delta: float,
                    cov_sign: float) -> float:
    dispatcher = TreeDispatcher(ind.tree)
    total = 0.0
    for inst in instances:
        result = run_simulation(inst, dispatcher, seed=0, collect_decisions=True)
        total += shaped_reward(result, inst, manual, delta, cov_sign=cov_sign)
    return total / len(instances)


# ---------------------------------------------------------------------------
# Plain GP runner sharing the hybrid's seed derivation
# ---------------------------------------------------------------------------

def run_lgp(instances: Sequence[TerminalInstance], seed: int, *,
            population_size: int = 1024, generations: int | None = None,
            eval_budget: int | None = None, tournament_size: int = 7,
            max_depth: int = 17, init_depth: tuple[int, int] = (2, 6),
            ) -> HybridRun:
    """Straight GP under the hybrid's RNG derivation.

    Runs `generations` generations, or as many whole generations as fit in
    `eval_budget` fitness requests (for budget-matched comparisons).
    """
    if generations is None and eval_budget is None:
        raise ValueError("give generations or eval_budget")
    gp_cfg = GpConfig(population_size=population_size,
                      tournament_size=tournament_size, max_depth=max_depth,
                      init_depth=init_depth,
                      generations=generations or 0)
    gp_rng, _, _ = _derive_rngs(seed)
    evaluator = FitnessEvaluator(instances)
    population = init_population(gp_cfg, [], gp_rng)
    evaluate_population(population, evaluator)
    best = best_individual(population)
    history = [_hybrid_row(initial_stats(population), best, None)]
    gen = 0
    per_generation = population_size - 1
    while True:
        if generations is not None and gen >= generations:
            break
        if eval_budget is not None and evaluator.requests + per_generation > eval_budget:
            break
        gp_history: list[GenerationStats] = []
        population = evolve(population, gp_cfg, 1, gp_rng, evaluator,
                            gp_history, generation_offset=gen)
        gen += 1
        best = best_individual(population)
        history.append(_hybrid_row(gp_history[0], best, None))
    return HybridRun(best=best, history=history, requests=evaluator.requests,
                     unique_evaluations=evaluator.unique_evaluations,
                     cache_hits=evaluator.cache_hits)


def report_token_counts(
        best_by_method: Mapping[str, Sequence[Individual]]) -> dict[str, tuple[float, float]]:
    """Mean and standard deviation of final-best token counts per method."""
    out: dict[str, tuple[float, float]] = {}
    for method, individuals in best_by_method.items():
        counts = np.array([ind.token_count for ind in individuals], dtype=float)
        out[method] = (float(counts.mean()), float(counts.std()))
    return out
