"""Tree-based genetic programming over dispatch heuristics.

Fitness is simulated TEU/h (mean over an instance set, frozen realizations,
fixed simulation seed), so it is deterministic per tree and memoized by the
tree's canonical serialization. The initial population may be seeded
externally, which is how the neural policies feed the hybrid loop.
"""

from __future__ import annotations

import json
import logging
import statistics
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .dispatchers import NonFiniteScoreError, TreeDispatcher
from .engine import EngineError, run_simulation
from .expressions import (
    CONSTANT_POOL,
    OPERATOR_SYMBOLS,
    ExprNode,
    Token,
    canonical_key,
    format_heuristic_line,
    leaf,
    parse_heuristic_line,
    token_count,
    tree_depth,
)
from .features import FEATURE_NAMES
from .instance import TerminalInstance

logger = logging.getLogger(__name__)

OPERATOR_TOKENS = tuple(Token.op(s) for s in OPERATOR_SYMBOLS)
TERMINAL_TOKENS = tuple(Token.feat(n) for n in FEATURE_NAMES) + tuple(
    Token.const(v) for v in CONSTANT_POOL
)

ORIGIN_RANDOM = "random"
ORIGIN_CROSSOVER = "crossover"
ORIGIN_MUTATION = "mutation"
ORIGIN_REPRODUCTION = "reproduction"
ORIGIN_SEEDED = "nn_seeded"


@dataclass
class Individual:
    tree: ExprNode
    fitness: float | None = None
    origin: str = ORIGIN_RANDOM

    @property
    def token_count(self) -> int:
        return token_count(self.tree)


@dataclass(frozen=True)
class GpConfig:
    population_size: int = 1024
    crossover_rate: float = 0.60
    mutation_rate: float = 0.30
    reproduction_rate: float = 0.10
    tournament_size: int = 7
    max_depth: int = 17
    init_depth: tuple[int, int] = (2, 6)
    generations: int = 500

    def validate(self) -> None:
        total = self.crossover_rate + self.mutation_rate + self.reproduction_rate
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"variation rates must sum to 1, got {total}")
        if self.population_size < 2:
            raise ValueError("population size must be at least 2")
        if not 0 < self.init_depth[0] <= self.init_depth[1] <= self.max_depth:
            raise ValueError("init depth range must fit within max_depth")


@dataclass(frozen=True)
class GenerationStats:
    generation: int
    best: float
    mean: float
    median: float
    best_token_count: int


# ---------------------------------------------------------------------------
# Tree construction and variation
# ---------------------------------------------------------------------------

def random_tree(rng: np.random.Generator, depth: int, method: str = "grow") -> ExprNode:
    """Random tree of edge depth at most `depth` (exactly, for method="full")."""
    if depth <= 0:
        return leaf(TERMINAL_TOKENS[rng.integers(len(TERMINAL_TOKENS))])
    if method == "full":
        token = OPERATOR_TOKENS[rng.integers(len(OPERATOR_TOKENS))]
    else:
        pool_size = len(OPERATOR_TOKENS) + len(TERMINAL_TOKENS)
        pick = int(rng.integers(pool_size))
        if pick >= len(OPERATOR_TOKENS):
            return leaf(TERMINAL_TOKENS[pick - len(OPERATOR_TOKENS)])
        token = OPERATOR_TOKENS[pick]
    children = tuple(random_tree(rng, depth - 1, method) for _ in range(token.arity))
    return ExprNode(token, children)


def ramped_tree(rng: np.random.Generator, init_depth: tuple[int, int]) -> ExprNode:
    """Ramped half-and-half: uniform depth in range, grow or full evenly."""
    depth = int(rng.integers(init_depth[0], init_depth[1] + 1))
    method = "full" if rng.random() < 0.5 else "grow"
    return random_tree(rng, depth, method)


def _paths(tree: ExprNode) -> list[tuple[int, ...]]:
    out: list[tuple[int, ...]] = []

    def walk(node: ExprNode, path: tuple[int, ...]) -> None:
        out.append(path)
        for i, child in enumerate(node.children):
            walk(child, path + (i,))

    walk(tree, ())
    return out


def _subtree_at(tree: ExprNode, path: tuple[int, ...]) -> ExprNode:
    node = tree
    for i in path:
        node = node.children[i]
    return node


def _replace_at(tree: ExprNode, path: tuple[int, ...], new: ExprNode) -> ExprNode:
    if not path:
        return new
    i = path[0]
    children = list(tree.children)
    children[i] = _replace_at(children[i], path[1:], new)
    return ExprNode(tree.token, tuple(children))


_VARIATION_RETRIES = 8


def subtree_crossover(a: ExprNode, b: ExprNode, rng: np.random.Generator,
                      max_depth: int = 17) -> ExprNode:
    """Graft a random subtree of b onto a random point of a.

    Retries the node choice a few times to respect the depth cap; falls back
    to reproducing parent a.
    """
    paths_a, paths_b = _paths(a), _paths(b)
    for _ in range(_VARIATION_RETRIES):
        pa = paths_a[rng.integers(len(paths_a))]
        pb = paths_b[rng.integers(len(paths_b))]
        child = _replace_at(a, pa, _subtree_at(b, pb))
        if tree_depth(child) <= max_depth:
            return child
    return a


def subtree_mutation(a: ExprNode, rng: np.random.Generator,
                     max_depth: int = 17) -> ExprNode:
    """Replace a random subtree with a fresh grown one (depth-capped)."""
    paths_a = _paths(a)
    for _ in range(_VARIATION_RETRIES):
        pa = paths_a[rng.integers(len(paths_a))]
        new = random_tree(rng, int(rng.integers(1, 5)), "grow")
        child = _replace_at(a, pa, new)
        if tree_depth(child) <= max_depth:
            return child
    return a


def choose_variation(rng: np.random.Generator, cfg: GpConfig) -> str:
    u = rng.random()
    if u < cfg.crossover_rate:
        return ORIGIN_CROSSOVER
    if u < cfg.crossover_rate + cfg.mutation_rate:
        return ORIGIN_MUTATION
    return ORIGIN_REPRODUCTION


# ---------------------------------------------------------------------------
# Fitness
# ---------------------------------------------------------------------------

class FitnessEvaluator:
    """Memoized mean-TEU/h fitness over a fixed instance set.

    Simulation failures (non-finite scores, engine errors) pin the individual
    at -inf. Counters track requested evaluations, cache hits, and actual
    simulator evaluations for budget accounting.
    """

    def __init__(self, instances: Sequence[TerminalInstance], seed: int = 0) -> None:
        if not instances:
            raise ValueError("need at least one instance")
        self.instances = list(instances)
        self.seed = seed
        self.cache: dict[str, float] = {}
        self.requests = 0
        self.cache_hits = 0
        self.unique_evaluations = 0

    def fitness(self, tree: ExprNode) -> float:
        self.requests += 1
        key = canonical_key(tree)
        hit = self.cache.get(key)
        if hit is not None:
            self.cache_hits += 1
            return hit
        self.unique_evaluations += 1
        dispatcher = TreeDispatcher(tree)
        try:
            total = 0.0
            for inst in self.instances:
                total += run_simulation(inst, dispatcher, self.seed,
                                        collect_decisions=False).teu_per_hour
            value = total / len(self.instances)
        except (EngineError, NonFiniteScoreError, FloatingPointError) as exc:
            logger.warning("fitness failed (%s) for %s", exc, key[:80])
            value = float("-inf")
        self.cache[key] = value
        return value


def evaluate_population(population: Sequence[Individual],
                        evaluator: FitnessEvaluator) -> None:
    """Fill in fitness for every unevaluated individual."""
    for ind in population:
        if ind.fitness is None:
            ind.fitness = evaluator.fitness(ind.tree)


# ---------------------------------------------------------------------------
# Population lifecycle
# ---------------------------------------------------------------------------

def init_population(cfg: GpConfig, seeds: Sequence[ExprNode],
                    rng: np.random.Generator) -> list[Individual]:
    """Seeded individuals plus ramped random fill up to the population size.

    Seeds deeper than the depth cap are rejected (with a notice) and replaced
    by random trees.
    """
    cfg.validate()
    if len(seeds) > cfg.population_size:
        raise ValueError("more seeds than population slots")
    population: list[Individual] = []
    for tree in seeds:
        if tree_depth(tree) > cfg.max_depth:
            logger.warning("seed of depth %d exceeds cap %d; replaced by a random tree",
                           tree_depth(tree), cfg.max_depth)
            population.append(Individual(ramped_tree(rng, cfg.init_depth)))
        else:
            population.append(Individual(tree, origin=ORIGIN_SEEDED))
    while len(population) < cfg.population_size:
        population.append(Individual(ramped_tree(rng, cfg.init_depth)))
    return population


def best_individual(population: Sequence[Individual]) -> Individual:
    best = population[0]
    for ind in population[1:]:
        if ind.fitness > best.fitness:  # type: ignore[operator]
            best = ind
    return best


def _tournament(population: Sequence[Individual], rng: np.random.Generator,
                size: int) -> Individual:
    winner: Individual | None = None
    for idx in rng.integers(0, len(population), size=size):
        contender = population[int(idx)]
        if winner is None or contender.fitness > winner.fitness:  # type: ignore[operator]
            winner = contender
    return winner  # type: ignore[return-value]


def evolve(population: list[Individual], cfg: GpConfig, k_generations: int,
           rng: np.random.Generator, evaluator: FitnessEvaluator,
           history: list[GenerationStats] | None = None,
           generation_offset: int = 0) -> list[Individual]:
    """Run k generations of tournament selection with 60/30/10 variation.

    The incumbent best always survives unchanged (slot 0), so best fitness
    never decreases. The population must already be evaluated; resuming with
    the same Generator continues the exact trajectory.
    """
    cfg.validate()
    if any(ind.fitness is None for ind in population):
        raise ValueError("evolve requires an evaluated population")
    for gen in range(k_generations):
        elite = best_individual(population)
        offspring: list[Individual] = [elite]
        while len(offspring) < cfg.population_size:
            op = choose_variation(rng, cfg)
            if op == ORIGIN_CROSSOVER:
                pa = _tournament(population, rng, cfg.tournament_size)
                pb = _tournament(population, rng, cfg.tournament_size)
                child = subtree_crossover(pa.tree, pb.tree, rng, cfg.max_depth)
                offspring.append(Individual(child, origin=ORIGIN_CROSSOVER))
            elif op == ORIGIN_MUTATION:
                pa = _tournament(population, rng, cfg.tournament_size)
                child = subtree_mutation(pa.tree, rng, cfg.max_depth)
                offspring.append(Individual(child, origin=ORIGIN_MUTATION))
            else:
                pa = _tournament(population, rng, cfg.tournament_size)
                # fitness refetches through the memo cache so budget
                # accounting stays a closed-form count of M-1 per generation
                offspring.append(Individual(pa.tree, origin=ORIGIN_REPRODUCTION))
        evaluate_population(offspring, evaluator)
        population = offspring
        if history is not None:
            history.append(_generation_stats(population, generation_offset + gen + 1))
    return population


def _generation_stats(population: Sequence[Individual], generation: int) -> GenerationStats:
    values = [ind.fitness for ind in population]
    finite = [v for v in values if np.isfinite(v)]
    best = best_individual(population)
    return GenerationStats(
        generation=generation,
        best=float(best.fitness),  # type: ignore[arg-type]
        mean=float(statistics.fmean(finite)) if finite else float("-inf"),
        median=float(statistics.median(finite)) if finite else float("-inf"),
        best_token_count=best.token_count,
    )


def initial_stats(population: Sequence[Individual]) -> GenerationStats:
    return _generation_stats(population, 0)


# ---------------------------------------------------------------------------
# Checkpoints and logs
# ---------------------------------------------------------------------------

def save_checkpoint(path, generation: int, rng: np.random.Generator,
                    population: Sequence[Individual]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# gp checkpoint v1\n")
        fh.write(f"generation = {generation}\n")
        fh.write(f"rng = {json.dumps(rng.bit_generator.state)}\n")
        for ind in population:
            fitness = "none" if ind.fitness is None else repr(ind.fitness)
            fh.write(f"{fitness}\t{ind.origin}\t{format_heuristic_line(ind.tree)}\n")


def load_checkpoint(path) -> tuple[int, np.random.Generator, list[Individual]]:
    generation = 0
    rng = np.random.default_rng()
    population: list[Individual] = []
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            if line.startswith("generation ="):
                generation = int(line.split("=", 1)[1])
            elif line.startswith("rng ="):
                state = json.loads(line.split("=", 1)[1])
                rng = np.random.default_rng()
                rng.bit_generator.state = state
            else:
                fitness_text, origin, tokens = line.split("\t", 2)
                fitness = None if fitness_text == "none" else float(fitness_text)
                population.append(
                    Individual(parse_heuristic_line(tokens), fitness, origin))
    return generation, rng, population


def write_generation_log(path, history: Sequence[GenerationStats]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("generation,best,mean,median,best_token_count\n")
        for row in history:
            fh.write(f"{row.generation},{row.best!r},{row.mean!r},"
                     f"{row.median!r},{row.best_token_count}\n")
