import numpy as np
import pytest

from portdispatch import (
    HybridConfig,
    Individual,
    canonical_key,
    parse_heuristic_line,
    predicted_requests,
    report_token_counts,
    run_hybrid,
    run_lgp,
)
from conftest import tiny_instance


def small_cfg(**overrides):
    base = dict(policy_kind="lstm", K=2, M=10, N=4, total_generations=6,
                tournament_size=3, rng_seed=3)
    base.update(overrides)
    return HybridConfig(**base)


def test_cycle_count_arithmetic():
    cfg = HybridConfig(K=20, M=1024, N=512, total_generations=500)
    cfg.validate()
    assert cfg.cycles == 25


def test_config_rejects_bad_shapes():
    with pytest.raises(ValueError):
        HybridConfig(K=7, total_generations=30).validate()
    with pytest.raises(ValueError):
        HybridConfig(N=2048, M=1024).validate()
    with pytest.raises(ValueError):
        HybridConfig(N=1024, M=1024, seeding_enabled=True).validate()
    with pytest.raises(ValueError):
        HybridConfig(policy_kind="gru").validate()
    with pytest.raises(ValueError):
        HybridConfig(seed_max_len=64, max_depth=17).validate()


def test_budget_accounting_matches_prediction():
    inst = tiny_instance(0, trucks=2, tasks=10)
    for cfg in (small_cfg(), small_cfg(seeding_enabled=False),
                small_cfg(seeding_enabled=False, train_policy=False)):
        run = run_hybrid(cfg, [inst])
        assert run.requests == predicted_requests(cfg)
        assert run.unique_evaluations + run.cache_hits == run.requests


def test_best_so_far_is_monotone():
    inst = tiny_instance(1, trucks=2, tasks=10)
    run = run_hybrid(small_cfg(policy_kind="transformer"), [inst])
    bests = [row.best for row in run.history]
    assert all(b2 >= b1 for b1, b2 in zip(bests, bests[1:]))
    assert run.history[-1].generation == 6
    assert run.history[0].generation == 0


def test_reduction_to_plain_gp_is_bitwise():
    inst = tiny_instance(2, trucks=2, tasks=12)
    cfg = small_cfg(seeding_enabled=False, train_policy=False, rng_seed=11)
    hybrid = run_hybrid(cfg, [inst])
    plain = run_lgp([inst], 11, population_size=cfg.M,
                    generations=cfg.total_generations,
                    tournament_size=cfg.tournament_size)
    assert canonical_key(hybrid.best.tree) == canonical_key(plain.best.tree)
    assert hybrid.best.fitness == plain.best.fitness
    assert len(hybrid.history) == len(plain.history)
    for a, b in zip(hybrid.history, plain.history):
        assert a.generation == b.generation
        assert a.best == b.best
        assert a.mean == b.mean
        assert a.token_count_best == b.token_count_best
    assert hybrid.requests == plain.requests


def test_star_ablation_gp_trajectory_matches_plain_gp():
    # seeding off with policy training on: the policy observes but the GP
    # stream is untouched, so the search trajectory is identical to plain GP
    inst = tiny_instance(3, trucks=2, tasks=10)
    cfg = small_cfg(seeding_enabled=False, train_policy=True, rng_seed=7,
                    policy_kind="transformer")
    star = run_hybrid(cfg, [inst])
    plain = run_lgp([inst], 7, population_size=cfg.M,
                    generations=cfg.total_generations,
                    tournament_size=cfg.tournament_size)
    assert [r.best for r in star.history] == [r.best for r in plain.history]
    assert star.requests == plain.requests + cfg.cycles * cfg.N


def test_hybrid_is_reproducible():
    inst = tiny_instance(4, trucks=2, tasks=10)
    a = run_hybrid(small_cfg(rng_seed=9), [inst])
    b = run_hybrid(small_cfg(rng_seed=9), [inst])
    assert canonical_key(a.best.tree) == canonical_key(b.best.tree)
    assert [r.best for r in a.history] == [r.best for r in b.history]
    assert [r.baseline for r in a.history] == [r.baseline for r in b.history]


def test_history_carries_delta_and_baseline():
    inst = tiny_instance(5, trucks=2, tasks=10)
    run = run_hybrid(small_cfg(policy_kind="lstm", rng_seed=2), [inst])
    assert run.history[0].delta == 10.0  # kappa/1 before any training step
    assert run.history[0].baseline == 0.0
    assert run.history[-1].delta < 10.0
    assert run.history[-1].baseline != 0.0


def test_report_token_counts():
    trees = {
        "lgp": [Individual(parse_heuristic_line("+ f1 * f2 f3"), 1.0)],
        "gprt": [Individual(parse_heuristic_line("f1"), 1.0),
                 Individual(parse_heuristic_line("max f1 f2"), 1.0)],
    }
    out = report_token_counts(trees)
    assert out["lgp"] == (5.0, 0.0)
    assert out["gprt"][0] == 2.0
