"""Analytic start/end time recurrence and exhaustive dispatch enumeration.

compute_times replays a fixed assignment (per-truck task sequences plus
per-crane service orders) through the same arithmetic the event engine uses:

    arrival_i   = e_prev + travel(dst_prev, src_i)      (depot start otherwise)
    s_i         = max(arrival_i, source-crane release)
    arrival'_i  = s_i + d_i + travel(src_i, dst_i)
    e_i         = max(arrival'_i, dest-crane release) + h_i

where a visit releases its crane at s_i + d_i (source) or e_i (destination).
With empty crane orders the release terms vanish and the recurrence is the
plain two-branch start/end formula, exact on contention-free instances.
"""

from __future__ import annotations

from collections import deque
from typing import Mapping, Sequence

import numpy as np

from .dispatchers import ScriptDispatcher
from .engine import ROLE_DST, ROLE_SRC, SimResult, run_simulation
from .instance import TerminalInstance


class TimingError(ValueError):
    """The given chains/crane orders do not define a feasible schedule."""


def realized_crane_orders(result: SimResult) -> dict[str, list[tuple[int, str]]]:
    """Extract per-crane service orders from a simulation result."""
    orders: dict[str, list[tuple[int, str]]] = {}
    for node, visits in result.crane_visits.items():
        ordered = sorted(visits, key=lambda v: v.start)
        if ordered:
            orders[node] = [(v.task_id, v.role) for v in ordered]
    return orders


def compute_times(
    instance: TerminalInstance,
    chains: Sequence[Sequence[int]],
    crane_orders: Mapping[str, Sequence[tuple[int, str]]] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Start and end times for a fixed assignment, instruction order.

    chains holds task ids per truck in service order; crane_orders (optional)
    holds (task_id, role) service sequences per crane. Cranes without an
    entry are treated as uncontended. Raises TimingError on malformed chains
    or cyclic crane precedence.
    """
    tasks = instance.tasks
    pos_of = {t.id: i for i, t in enumerate(tasks)}
    n = len(tasks)

    truck_pred: dict[int, int | None] = {}
    seen: set[int] = set()
    for chain in chains:
        prev: int | None = None
        for tid in chain:
            if tid not in pos_of:
                raise TimingError(f"unknown task id {tid} in a chain")
            if tid in seen:
                raise TimingError(f"task {tid} appears in more than one chain slot")
            seen.add(tid)
            truck_pred[tid] = prev
            prev = tid
    if len(seen) != n:
        raise TimingError("chains must cover every task exactly once")

    crane_pred: dict[tuple[int, str], tuple[int, str]] = {}
    for node, order in (crane_orders or {}).items():
        prev_visit: tuple[int, str] | None = None
        for visit in order:
            tid, role = visit
            if tid not in pos_of or role not in (ROLE_SRC, ROLE_DST):
                raise TimingError(f"bad crane order entry {visit!r} at {node}")
            if prev_visit is not None:
                crane_pred[(tid, role)] = prev_visit
            prev_visit = (tid, role)

    # Dependency edges between visits; resolve with Kahn's algorithm so a
    # cyclic precedence surfaces as unprocessed visits rather than recursion.
    visits = [(t.id, ROLE_SRC) for t in tasks] + [(t.id, ROLE_DST) for t in tasks]
    deps: dict[tuple[int, str], list[tuple[int, str]]] = {v: [] for v in visits}
    for t in tasks:
        pred = truck_pred[t.id]
        if pred is not None:
            deps[(t.id, ROLE_SRC)].append((pred, ROLE_DST))
        deps[(t.id, ROLE_DST)].append((t.id, ROLE_SRC))
    for visit, pred_visit in crane_pred.items():
        deps[visit].append(pred_visit)

    dependents: dict[tuple[int, str], list[tuple[int, str]]] = {v: [] for v in visits}
    indegree = {v: len(deps[v]) for v in visits}
    for v, ds in deps.items():
        for dep in ds:
            dependents[dep].append(v)

    s = np.full(n, np.nan)
    e = np.full(n, np.nan)
    src_done = np.full(n, np.nan)

    def release(visit: tuple[int, str]) -> float:
        tid, role = visit
        return src_done[pos_of[tid]] if role == ROLE_SRC else e[pos_of[tid]]

    ready = deque(v for v in visits if indegree[v] == 0)
    processed = 0
    while ready:
        visit = ready.popleft()
        tid, role = visit
        i = pos_of[tid]
        task = tasks[i]
        if role == ROLE_SRC:
            pred = truck_pred[tid]
            if pred is None:
                arrival = instance.travel_time(instance.depot, task.src)
            else:
                j = pos_of[pred]
                arrival = e[j] + instance.travel_time(tasks[j].dst, task.src)
            start = arrival
            if visit in crane_pred:
                start = max(start, release(crane_pred[visit]))
            s[i] = start
            src_done[i] = start + task.src_op_time
        else:
            arrival = src_done[i] + instance.travel_time(task.src, task.dst)
            start = arrival
            if visit in crane_pred:
                start = max(start, release(crane_pred[visit]))
            e[i] = start + task.dst_op_time
        processed += 1
        for dependent in dependents[visit]:
            indegree[dependent] -= 1
            if indegree[dependent] == 0:
                ready.append(dependent)

    if processed != len(visits):
        stuck = sorted({tid for (tid, _), d in indegree.items() if d > 0})
        raise TimingError(f"cyclic crane precedence involving tasks {stuck}")
    return s, e


# ---------------------------------------------------------------------------
# Exhaustive enumeration over dispatch decision sequences
# ---------------------------------------------------------------------------

def enumerate_dispatch_optimum(
    instance: TerminalInstance, *, path_limit: int = 2_000_000
) -> tuple[float, list[int], int]:
    """Best achievable TEU/h over every dispatch-decision sequence.

    Walks the engine's decision tree depth first: at each dispatch decision
    every candidate is branched. Any dispatcher resolves each decision to one
    candidate, so no dispatcher can beat this optimum. Returns
    (best_teu_per_hour, best_choice_script, paths_explored); replaying the
    script through run_simulation reproduces the optimum.

    Only tractable for very small instances (a few tasks).
    """
    best_teu = -np.inf
    best_script: list[int] = []
    paths = 0
    stack: list[list[int]] = [[]]
    while stack:
        script = stack.pop()
        probe = ScriptDispatcher(script)
        result = run_simulation(instance, probe, seed=0, collect_decisions=False)
        if probe.overflow is None:
            paths += 1
            if paths > path_limit:
                raise RuntimeError("enumeration exceeded path limit")
            if result.teu_per_hour > best_teu:
                best_teu = result.teu_per_hour
                best_script = script
        else:
            _, k = probe.overflow
            for choice in range(k - 1, -1, -1):
                stack.append(script + [choice])
    return float(best_teu), best_script, paths
