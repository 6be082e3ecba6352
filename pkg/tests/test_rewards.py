import numpy as np
import pytest

from portdispatch import (
    ManualDispatcher,
    ManualParams,
    TreeDispatcher,
    parse_heuristic_line,
    run_simulation,
)
from portdispatch.engine import DecisionRecord, SimResult
from portdispatch.policy import TrainState, rank_covariance, shaped_reward
from portdispatch.policy.lstm import LstmPolicy
from conftest import tiny_instance


def test_identical_rankings_covariance_two_thirds():
    ranks = np.array([1.0, 2.0, 3.0])
    assert rank_covariance(ranks, ranks) == pytest.approx(2.0 / 3.0)


def test_reversed_rankings_covariance_negative():
    assert rank_covariance(np.array([1.0, 2.0, 3.0]),
                           np.array([3.0, 2.0, 1.0])) == pytest.approx(-2.0 / 3.0)


def test_single_candidate_covariance_zero():
    assert rank_covariance(np.array([1.0]), np.array([1.0])) == 0.0


def test_delta_comes_from_kappa_over_episode():
    state = TrainState(policy=LstmPolicy(hidden=4, embed=3, seed=0))
    state.episodes = 100
    assert state.delta == pytest.approx(0.1)


def _stub_result(chains, start, end, decision_log=()):
    n = len(start)
    return SimResult(start=np.asarray(start, dtype=float),
                     end=np.asarray(end, dtype=float),
                     truck_of=np.zeros(n, dtype=int), chains=chains,
                     crane_visits={}, teu_per_hour=1.0, makespan=1.0,
                     decision_log=tuple(decision_log))


def test_no_idle_gap_contributes_zero_timing():
    inst = tiny_instance(0, trucks=1, tasks=2)
    result = _stub_result(((1, 2),), start=[0.0, 100.0], end=[100.0, 200.0])
    manual = ManualDispatcher(ManualParams())
    assert shaped_reward(result, inst, manual, delta=0.5) == 0.0


def test_timing_term_penalizes_gaps():
    inst = tiny_instance(0, trucks=1, tasks=2)
    result = _stub_result(((1, 2),), start=[0.0, 130.0], end=[100.0, 200.0])
    manual = ManualDispatcher(ManualParams())
    assert shaped_reward(result, inst, manual, delta=0.5) == -30.0


def test_covariance_term_scales_with_delta():
    inst = tiny_instance(0, trucks=1, tasks=2)
    manual = ManualDispatcher(ManualParams(desired_trucks=3, priority=1,
                                           truck_limit=6))
    features = np.zeros((3, 14))
    features[:, 0] = (10.0, 20.0, 30.0)   # travel_time
    features[:, 1] = 2.0                   # bound trucks between priority and desired
    record = DecisionRecord(time=0.0, truck=0, task_ids=(1, 2, 3), chosen_id=1,
                            features=features,
                            scores=np.array([3.0, 2.0, 1.0]))
    result = _stub_result(((1, 2),), start=[0.0, 100.0], end=[100.0, 200.0],
                          decision_log=[record])
    # raw manual score = travel * (2 - 1), negated by the dispatcher, so the
    # manual ranking matches the run's (1, 2, 3): identical ranks, cov 2/3
    value = shaped_reward(result, inst, manual, delta=0.3)
    assert value == pytest.approx(-0.3 * (2.0 / 3.0))
    flipped = shaped_reward(result, inst, manual, delta=0.3, cov_sign=1.0)
    assert flipped == pytest.approx(0.3 * (2.0 / 3.0))


def test_shaped_reward_runs_on_real_episode():
    inst = tiny_instance(1, trucks=2, tasks=8)
    tree = parse_heuristic_line("- 0.5 travel_time")
    result = run_simulation(inst, TreeDispatcher(tree), 0, collect_decisions=True)
    manual = ManualDispatcher(ManualParams())
    value = shaped_reward(result, inst, manual, delta=0.1)
    assert np.isfinite(value)
    # every timing term is nonpositive: a truck cannot start its next task
    # before finishing the previous one
    assert value <= 0.0 + 10.0  # covariance can add at most a small amount
