"""Dispatchers: anything that picks a task for an idle truck.

The engine hands a dispatcher one feature row per candidate task and assigns
the argmax-scored candidate (ties to the smallest task id). Scores are
"higher is better"; cost-shaped rules such as the manually crafted heuristic
are wrapped with a sign flip so one convention serves GP trees, neural
policies, and hand-written rules alike.

Selection-style baselines (FIFO, seeded random) and schedule replay cannot be
expressed as pure feature scorers, so `select` exists as an overridable hook
whose default is argmax-of-score.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .expressions import ExprNode, eval_expr, eval_expr_columns
from .features import FEATURE_INDEX

_TRAVEL = FEATURE_INDEX["travel_time"]
_BOUND = FEATURE_INDEX["qc_bound_trucks"]
_REMAINING = FEATURE_INDEX["qc_remaining_tasks"]

OVER_LIMIT_PENALTY = 200000.0


class Dispatcher:
    """Base dispatcher: a pure scoring function over candidate features."""

    name = "dispatcher"
    # Scratch slot the engine reads to log per-candidate scores without
    # scoring twice; selection-only dispatchers leave it None.
    last_scores: np.ndarray | None = None

    def reset(self, seed: int) -> None:
        """Called once per simulation run; stochastic dispatchers reseed here."""

    def score(self, fv: np.ndarray) -> float:
        raise NotImplementedError

    def score_batch(self, features: np.ndarray) -> np.ndarray:
        """Score a (k, 14) candidate matrix; default loops over `score`."""
        return np.array([self.score(row) for row in features], dtype=float)

    def select(self, decision_index: int, task_ids: np.ndarray,
               positions: np.ndarray, features: np.ndarray) -> int:
        """Return the index of the chosen candidate.

        Candidates arrive sorted by ascending task id, so argmax resolves
        score ties toward the smallest id.
        """
        scores = self.score_batch(features)
        if not np.all(np.isfinite(scores)):
            raise NonFiniteScoreError(decision_index)
        self.last_scores = scores
        return int(np.argmax(scores))


class NonFiniteScoreError(RuntimeError):
    """A dispatcher produced a non-finite score; names the decision index."""

    def __init__(self, decision_index: int) -> None:
        super().__init__(f"non-finite dispatcher score at decision {decision_index}")
        self.decision_index = decision_index


class TreeDispatcher(Dispatcher):
    """Scores candidates with a heuristic expression tree."""

    def __init__(self, tree: ExprNode, name: str = "tree") -> None:
        self.tree = tree
        self.name = name

    def score(self, fv) -> float:
        if isinstance(fv, Mapping):
            return eval_expr(self.tree, fv)
        return float(eval_expr_columns(self.tree, np.asarray(fv, dtype=float)[None, :])[0])

    def score_batch(self, features: np.ndarray) -> np.ndarray:
        return eval_expr_columns(self.tree, features)


# ---------------------------------------------------------------------------
# Manually crafted heuristic (the expert baseline)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ManualParams:
    """Coordinator-set knobs, applied uniformly across QCs.

    The scoring interface carries no crane identity, so per-QC values would
    be unreachable from a pure feature function; defaults follow the harness
    convention (desired = trucks/qcs rounded, priority 1, limit 2x desired).
    """

    desired_trucks: float = 3.0
    priority: float = 1.0
    truck_limit: float = 6.0


def manual_heuristic(params: ManualParams, fv) -> float:
    """Raw Algorithm-style score (lower is more attractive; see ManualDispatcher).

    fv may be a mapping with travel_time / qc_bound_trucks keys or a 14-wide
    feature row.
    """
    if isinstance(fv, Mapping):
        travel = float(fv["travel_time"])
        truck_num = float(fv["qc_bound_trucks"])
    else:
        row = np.asarray(fv, dtype=float)
        travel, truck_num = float(row[_TRAVEL]), float(row[_BOUND])
    if truck_num < params.desired_trucks:
        score = travel * (truck_num - params.priority)
    else:
        score = travel * params.desired_trucks
    if truck_num >= params.truck_limit:
        score += OVER_LIMIT_PENALTY
    return score


class ManualDispatcher(Dispatcher):
    """Engine-facing wrapper: negates the raw score so argmax prefers low cost
    and the over-limit penalty repels trucks."""

    name = "manual"

    def __init__(self, params: ManualParams | None = None) -> None:
        self.params = params or ManualParams()

    def score(self, fv) -> float:
        return -manual_heuristic(self.params, fv)

    def score_batch(self, features: np.ndarray) -> np.ndarray:
        travel = features[:, _TRAVEL]
        num = features[:, _BOUND]
        p = self.params
        raw = np.where(num < p.desired_trucks,
                       travel * (num - p.priority),
                       travel * p.desired_trucks)
        raw = raw + np.where(num >= p.truck_limit, OVER_LIMIT_PENALTY, 0.0)
        return -raw


# ---------------------------------------------------------------------------
# Classical baselines
# ---------------------------------------------------------------------------

class RandomDispatcher(Dispatcher):
    """Uniform over candidates, reseeded per run for reproducible sequences."""

    name = "random"

    def __init__(self) -> None:
        self._rng = np.random.default_rng(0)

    def reset(self, seed: int) -> None:
        self._rng = np.random.default_rng(seed)

    def score(self, fv) -> float:  # pragma: no cover - selection-based
        return 0.0

    def select(self, decision_index, task_ids, positions, features) -> int:
        return int(self._rng.integers(0, len(task_ids)))


class FifoDispatcher(Dispatcher):
    """Smallest instruction index first."""

    name = "fifo"

    def score(self, fv) -> float:  # pragma: no cover - selection-based
        return 0.0

    def select(self, decision_index, task_ids, positions, features) -> int:
        return int(np.argmin(positions))


class SttDispatcher(Dispatcher):
    """Shortest travel time."""

    name = "stt"

    def score(self, fv) -> float:
        row = np.asarray(fv, dtype=float)
        return -float(row[_TRAVEL])

    def score_batch(self, features: np.ndarray) -> np.ndarray:
        return -features[:, _TRAVEL]


class MtrDispatcher(Dispatcher):
    """Most tasks remaining at the candidate's QC."""

    name = "mtr"

    def score(self, fv) -> float:
        row = np.asarray(fv, dtype=float)
        return float(row[_REMAINING])

    def score_batch(self, features: np.ndarray) -> np.ndarray:
        return features[:, _REMAINING]


def baseline_dispatchers() -> dict[str, Dispatcher]:
    return {
        "random": RandomDispatcher(),
        "fifo": FifoDispatcher(),
        "stt": SttDispatcher(),
        "mtr": MtrDispatcher(),
    }


class ScriptDispatcher(Dispatcher):
    """Replays a fixed choice sequence; used by brute-force enumeration.

    Decisions beyond the script fall back to candidate 0 and are recorded in
    `overflow` as (decision_index, candidate_count).
    """

    name = "script"

    def __init__(self, script: list[int]) -> None:
        self.script = list(script)
        self.overflow: tuple[int, int] | None = None

    def reset(self, seed: int) -> None:
        self.overflow = None

    def score(self, fv) -> float:  # pragma: no cover - selection-based
        return 0.0

    def select(self, decision_index, task_ids, positions, features) -> int:
        if decision_index < len(self.script):
            return self.script[decision_index]
        if self.overflow is None:
            self.overflow = (decision_index, len(task_ids))
        return 0


# ---------------------------------------------------------------------------
# Candidate ranking (feeds the shaped-reward covariance)
# ---------------------------------------------------------------------------

def rank_from_scores(scores: np.ndarray, task_ids: np.ndarray) -> np.ndarray:
    """Ranks 1..k by descending score, ties broken by ascending task id."""
    scores = np.asarray(scores, dtype=float)
    order = np.lexsort((task_ids, -scores))
    ranks = np.empty(len(scores), dtype=float)
    ranks[order] = np.arange(1, len(scores) + 1)
    return ranks


def rank_candidates(dispatcher: Dispatcher, features: np.ndarray,
                    task_ids: np.ndarray | None = None) -> np.ndarray:
    """Rank candidate feature rows under a scoring dispatcher."""
    features = np.asarray(features, dtype=float)
    if task_ids is None:
        task_ids = np.arange(features.shape[0])
    return rank_from_scores(dispatcher.score_batch(features), np.asarray(task_ids))
