"""Shaped episode reward: timing gaps plus manual-heuristic imitation.

Per completed episode the reward sums, for every pair of consecutive tasks
on one truck, the gap term e_prev - s_next (a truck's first task contributes
nothing), and subtracts delta times the covariance between the episode
dispatcher's candidate ranking and the manual heuristic's ranking at each
logged decision. delta = kappa/en decays the imitation pressure over
training.
"""

from __future__ import annotations

import numpy as np

from ..dispatchers import ManualDispatcher, rank_from_scores
from ..engine import SimResult
from ..instance import TerminalInstance


def rank_covariance(ranks_a: np.ndarray, ranks_b: np.ndarray) -> float:
    """Population covariance of two rank vectors; 0 for single candidates."""
    if len(ranks_a) < 2:
        return 0.0
    a = ranks_a - ranks_a.mean()
    b = ranks_b - ranks_b.mean()
    return float(np.mean(a * b))


def shaped_reward(result: SimResult, instance: TerminalInstance,
                  manual: ManualDispatcher, delta: float,
                  *, cov_sign: float = -1.0) -> float:
    """Shaped return for one simulated episode.

    Needs a result with a decision log (per-candidate features and scores).
    cov_sign follows the formula as written (subtract similarity); flip to
    +1.0 to reward agreement with the manual ranking instead.
    """
    pos_of = {t.id: i for i, t in enumerate(instance.tasks)}
    timing = 0.0
    for chain in result.chains:
        for prev_id, next_id in zip(chain, chain[1:]):
            timing += float(result.end[pos_of[prev_id]] - result.start[pos_of[next_id]])
    cov_total = 0.0
    for record in result.decision_log:
        ids = np.asarray(record.task_ids)
        ranks_run = rank_from_scores(record.scores, ids)
        ranks_manual = rank_from_scores(manual.score_batch(record.features), ids)
        cov_total += rank_covariance(ranks_run, ranks_manual)
    return timing + cov_sign * delta * cov_total
