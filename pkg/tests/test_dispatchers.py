import numpy as np
import pytest

from portdispatch import (
    ManualDispatcher,
    ManualParams,
    TreeDispatcher,
    baseline_dispatchers,
    manual_heuristic,
    parse_heuristic_line,
    rank_candidates,
    rank_from_scores,
    run_simulation,
)
from portdispatch.features import FEATURE_INDEX, FEATURE_NAMES
from conftest import tiny_instance


def _fv(travel, bound):
    fv = {name: 0.0 for name in FEATURE_NAMES}
    fv["travel_time"] = travel
    fv["qc_bound_trucks"] = bound
    return fv


def test_manual_below_desired_branch():
    params = ManualParams(desired_trucks=4, priority=3, truck_limit=6)
    assert manual_heuristic(params, _fv(100, 2)) == -100.0


def test_manual_at_desired_branch():
    params = ManualParams(desired_trucks=4, priority=3, truck_limit=6)
    assert manual_heuristic(params, _fv(100, 5)) == 400.0


def test_manual_over_limit_penalty():
    params = ManualParams(desired_trucks=4, priority=3, truck_limit=6)
    assert manual_heuristic(params, _fv(100, 6)) == 200400.0


def test_manual_dispatcher_negates_and_batches():
    params = ManualParams(desired_trucks=4, priority=3, truck_limit=6)
    d = ManualDispatcher(params)
    rows = np.zeros((3, 14))
    rows[:, FEATURE_INDEX["travel_time"]] = 100.0
    rows[:, FEATURE_INDEX["qc_bound_trucks"]] = (2, 5, 6)
    assert d.score_batch(rows).tolist() == [100.0, -400.0, -200400.0]
    assert d.score(rows[0]) == 100.0


def test_stt_picks_shortest_travel():
    rows = np.zeros((3, 14))
    rows[:, FEATURE_INDEX["travel_time"]] = (50.0, 120.0, 80.0)
    d = baseline_dispatchers()["stt"]
    assert int(np.argmax(d.score_batch(rows))) == 0


def test_mtr_picks_most_remaining():
    rows = np.zeros((3, 14))
    rows[:, FEATURE_INDEX["qc_remaining_tasks"]] = (1.0, 9.0, 4.0)
    d = baseline_dispatchers()["mtr"]
    assert int(np.argmax(d.score_batch(rows))) == 1


def test_fifo_picks_smallest_instruction_index():
    d = baseline_dispatchers()["fifo"]
    ids = np.array([7, 2, 9])
    positions = np.array([6, 1, 8])
    choice = d.select(0, ids, positions, np.zeros((3, 14)))
    assert ids[choice] == 2


def test_random_dispatcher_reproducible():
    inst = tiny_instance(2, trucks=2, tasks=8)
    d = baseline_dispatchers()["random"]
    a = run_simulation(inst, d, seed=5)
    b = run_simulation(inst, d, seed=5)
    assert [r.chosen_id for r in a.decision_log] == [r.chosen_id for r in b.decision_log]
    c = run_simulation(inst, d, seed=6)
    assert a.teu_per_hour != c.teu_per_hour or \
        [r.chosen_id for r in a.decision_log] != [r.chosen_id for r in c.decision_log]


def test_rank_from_scores_basic():
    ranks = rank_from_scores(np.array([3.0, 1.0, 2.0]), np.array([1, 2, 3]))
    assert ranks.tolist() == [1.0, 3.0, 2.0]


def test_rank_ties_follow_task_id():
    ranks = rank_from_scores(np.array([2.0, 2.0, 2.0]), np.array([30, 10, 20]))
    assert ranks.tolist() == [3.0, 1.0, 2.0]


def test_rank_candidates_with_dispatcher():
    rows = np.zeros((3, 14))
    rows[:, FEATURE_INDEX["travel_time"]] = (50.0, 120.0, 80.0)
    ranks = rank_candidates(baseline_dispatchers()["stt"], rows, np.array([1, 2, 3]))
    assert ranks.tolist() == [1.0, 3.0, 2.0]


@pytest.mark.parametrize("scale", ["2", "0.5"])
def test_positive_scaling_leaves_choices_unchanged(scale):
    inst = tiny_instance(4, trucks=3, tasks=12)
    base = parse_heuristic_line("- 0.5 travel_time")
    scaled = parse_heuristic_line(f"* {scale} - 0.5 travel_time")
    a = run_simulation(inst, TreeDispatcher(base), 0)
    b = run_simulation(inst, TreeDispatcher(scaled), 0)
    assert [r.chosen_id for r in a.decision_log] == [r.chosen_id for r in b.decision_log]
    assert a.teu_per_hour == b.teu_per_hour
