"""Event-driven simulation of container-terminal truck dispatch.

Trucks start at the depot; whenever one goes idle the dispatcher scores every
dispatchable task and the truck takes the argmax (ties to the smallest task
id). Cranes serve one truck at a time, earliest arrival first; quay-crane
unloading follows the ship's stowage sequence, which releases at most the
next q instruction-order containers, so an unloading task becomes
dispatchable (and servable) only while it sits within the first q unstarted
unloads of its QC. Every quantity that could vary (operation times, jitter)
is frozen inside the instance, so a run is a pure function of
(instance, dispatcher, seed).

Times are plain float seconds and every event time is derived by the same
additions the analytic recurrence uses, which keeps the engine bit-exact
against compute_times on contention-free instances.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dispatchers import Dispatcher
from .instance import TaskSpec, TerminalInstance

ROLE_SRC = "src"
ROLE_DST = "dst"


class EngineError(RuntimeError):
    """Simulation could not complete or produced an inconsistent schedule."""


@dataclass(frozen=True)
class CraneVisit:
    """One crane service interval: a truck handled for a task at this crane."""

    task_id: int
    role: str          # "src" or "dst"
    start: float
    end: float


@dataclass(frozen=True)
class DecisionRecord:
    """One dispatch decision with everything needed to re-rank it later."""

    time: float
    truck: int
    task_ids: tuple[int, ...]
    chosen_id: int
    features: np.ndarray   # (k, 14), row order matches task_ids
    scores: np.ndarray     # (k,), zeros for selection-only dispatchers


@dataclass(frozen=True)
class SimResult:
    """Realized schedule for one simulation run."""

    start: np.ndarray                      # s_i, instruction order
    end: np.ndarray                        # e_i, instruction order
    truck_of: np.ndarray                   # assigned truck per task
    chains: tuple[tuple[int, ...], ...]    # per-truck task ids in service order
    crane_visits: dict[str, tuple[CraneVisit, ...]]
    teu_per_hour: float
    makespan: float
    decision_log: tuple[DecisionRecord, ...] = ()


def compute_teu_per_hour(result: SimResult, tasks: Sequence[TaskSpec]) -> float:
    """Containers moved per hour across the whole run: sum(size) over the
    span from the first service start to the last completion."""
    return _teu_from_times(result.start, result.end,
                           np.array([t.size for t in tasks], dtype=float))


def _teu_from_times(start: np.ndarray, end: np.ndarray, sizes: np.ndarray) -> float:
    span = float(np.max(end) - np.min(start))
    if span <= 0.0:
        raise EngineError("degenerate schedule: zero-length span")
    return float(np.sum(sizes)) * 3600.0 / span


@dataclass
class _Crane:
    node: str
    is_qc: bool
    busy: bool = False
    queue: list[tuple[float, int, int, str, int]] = field(default_factory=list)
    # queue entries: (arrival, task_id, task_pos, role, truck)
    visits: list[CraneVisit] = field(default_factory=list)
    unload_order: list[int] = field(default_factory=list)  # task positions, instruction order
    unload_head: int = 0


class _Simulation:
    def __init__(self, instance: TerminalInstance, dispatcher: Dispatcher,
                 seed: int, collect_decisions: bool) -> None:
        instance.validate()
        self.inst = instance
        self.dispatcher = dispatcher
        self.collect = collect_decisions
        self.tasks = instance.tasks
        n = len(self.tasks)
        m = instance.trucks
        idx = instance.node_index
        self.travel = np.asarray(instance.travel, dtype=float)

        self.ids = np.array([t.id for t in self.tasks], dtype=np.int64)
        self.src_idx = np.array([idx[t.src] for t in self.tasks], dtype=np.int64)
        self.dst_idx = np.array([idx[t.dst] for t in self.tasks], dtype=np.int64)
        self.ty = np.array([t.ty for t in self.tasks], dtype=float)
        self.size = np.array([t.size for t in self.tasks], dtype=float)
        self.d = np.array([t.src_op_time for t in self.tasks], dtype=float)
        self.h = np.array([t.dst_op_time for t in self.tasks], dtype=float)

        qc_pos = {name: i for i, name in enumerate(instance.qcs)}
        self.qc_of_task = np.array(
            [qc_pos[instance.qc_of(t)] for t in self.tasks], dtype=np.int64)
        qc_type_by_pos = np.array(instance.qc_types, dtype=float)
        self.qc_type = qc_type_by_pos[self.qc_of_task]

        # Mean realized operation time per node, over every task touching it.
        n_nodes = self.travel.shape[0]
        sums = np.zeros(n_nodes)
        counts = np.zeros(n_nodes)
        np.add.at(sums, self.src_idx, self.d)
        np.add.at(counts, self.src_idx, 1.0)
        np.add.at(sums, self.dst_idx, self.h)
        np.add.at(counts, self.dst_idx, 1.0)
        node_avg = np.divide(sums, counts, out=np.zeros(n_nodes), where=counts > 0)
        self.src_avg = node_avg[self.src_idx]
        self.dst_avg = node_avg[self.dst_idx]

        # Dynamic state
        self.assigned = np.zeros(n, dtype=bool)
        self.completed = np.zeros(n, dtype=bool)
        self.s = np.full(n, np.nan)
        self.e = np.full(n, np.nan)
        self.truck_of = np.full(n, -1, dtype=np.int64)
        self.src_started = np.zeros(n, dtype=bool)

        self.truck_loc = np.full(m, idx[instance.depot], dtype=np.int64)
        self.truck_idle = np.ones(m, dtype=bool)
        self.chains: list[list[int]] = [[] for _ in range(m)]

        self.bound = np.zeros(len(instance.qcs))
        self.remaining = np.zeros(len(instance.qcs))
        np.add.at(self.remaining, self.qc_of_task, 1.0)
        self.available = self.remaining.copy()
        self.waiting = np.zeros(n_nodes)
        self.idle_count = float(m)
        self.first_start: float | None = None

        self.cranes: dict[str, _Crane] = {}
        for name in instance.qcs:
            self.cranes[name] = _Crane(name, True)
        for name in instance.ycs:
            self.cranes[name] = _Crane(name, False)
        for p, t in enumerate(self.tasks):
            if t.ty == 1:
                self.cranes[t.src].unload_order.append(p)

        self.heap: list[tuple[float, int, int, tuple]] = []
        self._seq = 0
        self.decision_index = 0
        self.decisions: list[DecisionRecord] = []
        self.node_names = instance.node_order

        dispatcher.reset(seed)

    # -- event plumbing ---------------------------------------------------

    _TRUCK_IDLE = 0
    _ARRIVAL = 1
    _SERVICE_END = 2

    def _push(self, time: float, kind: int, data: tuple) -> None:
        heapq.heappush(self.heap, (time, self._seq, kind, data))
        self._seq += 1

    def run(self) -> SimResult:
        for truck in range(self.inst.trucks):
            self._push(0.0, self._TRUCK_IDLE, (truck,))
        while self.heap:
            time, _, kind, data = heapq.heappop(self.heap)
            if kind == self._TRUCK_IDLE:
                self._on_truck_idle(time, *data)
            elif kind == self._ARRIVAL:
                self._on_arrival(time, *data)
            else:
                self._on_service_end(time, *data)
        if not self.completed.all():
            raise EngineError("simulation drained its event queue with tasks unfinished")
        teu = _teu_from_times(self.s, self.e, self.size)
        makespan = float(np.max(self.e) - np.min(self.s))
        return SimResult(
            start=self.s,
            end=self.e,
            truck_of=self.truck_of,
            chains=tuple(tuple(c) for c in self.chains),
            crane_visits={name: tuple(c.visits) for name, c in self.cranes.items()},
            teu_per_hour=teu,
            makespan=makespan,
            decision_log=tuple(self.decisions),
        )

    # -- dispatch ----------------------------------------------------------

    def _window(self, crane: _Crane) -> set[int]:
        """First q unstarted unloads of a QC, in instruction order."""
        out: set[int] = set()
        i = crane.unload_head
        order = crane.unload_order
        while i < len(order) and self.src_started[order[i]]:
            i += 1
        crane.unload_head = i
        q = self.inst.q
        while i < len(order) and len(out) < q:
            if not self.src_started[order[i]]:
                out.add(order[i])
            i += 1
        return out

    def _dispatchable(self) -> np.ndarray:
        """Unassigned tasks, minus QC unloads still outside their window."""
        cand = np.flatnonzero(~self.assigned)
        if len(cand) == 0:
            return cand
        keep = np.ones(len(cand), dtype=bool)
        windows: dict[str, set[int]] = {}
        for j, p in enumerate(cand):
            if self.ty[p] == 1.0:
                qc = self.tasks[p].src
                if qc not in windows:
                    windows[qc] = self._window(self.cranes[qc])
                keep[j] = p in windows[qc]
        cand = cand[keep]
        return cand[np.argsort(self.ids[cand], kind="stable")]

    def _features(self, truck: int, cand: np.ndarray, now: float) -> np.ndarray:
        k = len(cand)
        F = np.empty((k, 14))
        F[:, 0] = self.travel[self.truck_loc[truck], self.src_idx[cand]]
        F[:, 1] = self.bound[self.qc_of_task[cand]]
        F[:, 2] = self.remaining[self.qc_of_task[cand]]
        F[:, 3] = self.available[self.qc_of_task[cand]]
        F[:, 4] = 1.0 - self.ty[cand]
        F[:, 5] = self.qc_type[cand]
        F[:, 6] = self.waiting[self.src_idx[cand]]
        F[:, 7] = self.waiting[self.dst_idx[cand]]
        F[:, 8] = self.src_avg[cand]
        F[:, 9] = self.dst_avg[cand]
        F[:, 10] = self.ty[cand]
        F[:, 11] = self.size[cand]
        F[:, 12] = self.idle_count
        F[:, 13] = 0.0 if self.first_start is None else now - self.first_start
        return F

    def _on_truck_idle(self, now: float, truck: int) -> None:
        if not self.truck_idle[truck]:
            return
        cand = self._dispatchable()
        if len(cand) == 0:
            return
        features = self._features(truck, cand, now)
        self.dispatcher.last_scores = None
        choice = self.dispatcher.select(
            self.decision_index, self.ids[cand], cand, features)
        if not 0 <= choice < len(cand):
            raise EngineError(
                f"dispatcher chose candidate {choice} of {len(cand)} "
                f"at decision {self.decision_index}")
        p = int(cand[choice])
        if self.collect:
            scores = self.dispatcher.last_scores
            self.decisions.append(DecisionRecord(
                time=now,
                truck=truck,
                task_ids=tuple(int(i) for i in self.ids[cand]),
                chosen_id=int(self.ids[p]),
                features=features,
                scores=np.zeros(len(cand)) if scores is None else np.array(scores),
            ))
        self.decision_index += 1

        self.assigned[p] = True
        self.truck_of[p] = truck
        self.truck_idle[truck] = False
        self.idle_count -= 1.0
        self.available[self.qc_of_task[p]] -= 1.0
        self.bound[self.qc_of_task[p]] += 1.0
        self.chains[truck].append(int(self.ids[p]))
        arrival = now + self.travel[self.truck_loc[truck], self.src_idx[p]]
        self._push(arrival, self._ARRIVAL, (self.tasks[p].src, p, ROLE_SRC, truck))

    def _wake_idle_trucks(self, now: float) -> None:
        for truck in np.flatnonzero(self.truck_idle):
            self._push(now, self._TRUCK_IDLE, (int(truck),))

    # -- crane service -----------------------------------------------------

    def _on_arrival(self, now: float, node: str, p: int, role: str, truck: int) -> None:
        crane = self.cranes[node]
        crane.queue.append((now, int(self.ids[p]), p, role, truck))
        self.waiting[self.inst.node_index[node]] += 1.0
        self._try_start(crane, now)

    def _eligible(self, crane: _Crane, p: int, role: str,
                  window: set[int] | None) -> bool:
        if not (crane.is_qc and role == ROLE_SRC):
            return True
        return window is not None and p in window

    def _try_start(self, crane: _Crane, now: float) -> None:
        if crane.busy or not crane.queue:
            return
        window = self._window(crane) if crane.is_qc else None
        best = None
        for entry in crane.queue:
            arrival, task_id, p, role, truck = entry
            if not self._eligible(crane, p, role, window):
                continue
            if best is None or (arrival, task_id) < (best[0], best[1]):
                best = entry
        if best is None:
            return
        crane.queue.remove(best)
        self.waiting[self.inst.node_index[crane.node]] -= 1.0
        arrival, task_id, p, role, truck = best
        crane.busy = True
        start = now
        if role == ROLE_SRC:
            self.s[p] = start
            self.src_started[p] = True
            if self.first_start is None:
                self.first_start = start
            if crane.is_qc and self.ty[p] == 1.0:
                # Window slid: blocked unloads may be dispatchable now.
                self._wake_idle_trucks(now)
            duration = self.d[p]
        else:
            duration = self.h[p]
        end = start + duration
        crane.visits.append(CraneVisit(int(self.ids[p]), role, start, end))
        self._push(end, self._SERVICE_END, (crane.node, p, role, truck))

    def _on_service_end(self, now: float, node: str, p: int, role: str, truck: int) -> None:
        crane = self.cranes[node]
        crane.busy = False
        if role == ROLE_SRC:
            arrival = now + self.travel[self.src_idx[p], self.dst_idx[p]]
            self._push(arrival, self._ARRIVAL, (self.tasks[p].dst, p, ROLE_DST, truck))
        else:
            self.e[p] = now
            self.completed[p] = True
            self.remaining[self.qc_of_task[p]] -= 1.0
            self.bound[self.qc_of_task[p]] -= 1.0
            self.truck_loc[truck] = self.dst_idx[p]
            self.truck_idle[truck] = True
            self.idle_count += 1.0
            self._push(now, self._TRUCK_IDLE, (truck,))
        self._try_start(crane, now)


def run_simulation(instance: TerminalInstance, dispatcher: Dispatcher,
                   seed: int = 0, *, collect_decisions: bool = True) -> SimResult:
    """Simulate one full work-instruction list under a dispatcher.

    Deterministic given (instance, dispatcher, seed); the seed only feeds
    stochastic dispatchers through their reset hook. Raises EngineError or
    NonFiniteScoreError (with the decision index) on dispatch failures.
    """
    return _Simulation(instance, dispatcher, seed, collect_decisions).run()


# ---------------------------------------------------------------------------
# Constraint validation (report-only)
# ---------------------------------------------------------------------------

def validate_schedule(result: SimResult, instance: TerminalInstance) -> list[str]:
    """Check a realized schedule against the assignment and crane constraints.

    Returns one message per violation: unique truck assignment, at most one
    successor per task, serial crane occupancy, and the QC unload swap
    window. An empty list means the schedule is feasible.
    """
    violations: list[str] = []
    tasks = instance.tasks
    id_of = [t.id for t in tasks]

    counts: dict[int, int] = {i: 0 for i in id_of}
    for chain in result.chains:
        seen_in_chain: set[int] = set()
        for tid in chain:
            if tid not in counts:
                violations.append(f"eq5: unknown task id {tid} in a truck chain")
                continue
            counts[tid] += 1
            if tid in seen_in_chain:
                violations.append(
                    f"eq6: task {tid} served more than once by one truck")
            seen_in_chain.add(tid)
    for tid, c in counts.items():
        chains_with = sum(1 for chain in result.chains if tid in chain)
        if chains_with > 1:
            violations.append(f"eq5: task {tid} assigned to {chains_with} trucks")
        elif c == 0:
            violations.append(f"eq5: task {tid} assigned to no truck")

    for node, visits in result.crane_visits.items():
        ordered = sorted(visits, key=lambda v: v.start)
        for prev, cur in zip(ordered, ordered[1:]):
            if cur.start < prev.end:
                violations.append(
                    f"eq11: crane {node} overlaps tasks {prev.task_id} and {cur.task_id}")

    # QC unload ordering: replaying service starts, each served task must sit
    # within the first q not-yet-served unloads of its crane.
    pos_of = {t.id: i for i, t in enumerate(tasks)}
    for qc in instance.qcs:
        visits = result.crane_visits.get(qc, ())
        order = [t.id for t in tasks if t.ty == 1 and t.src == qc]
        served_sequence = [v.task_id for v in sorted(visits, key=lambda v: v.start)
                           if v.role == ROLE_SRC and v.task_id in pos_of
                           and tasks[pos_of[v.task_id]].ty == 1]
        unserved = list(order)
        for tid in served_sequence:
            if tid not in unserved:
                continue
            rank = unserved.index(tid) + 1
            if rank > instance.q:
                violations.append(
                    f"eq11: QC {qc} served unload {tid} from window position "
                    f"{rank} > q={instance.q}")
            unserved.remove(tid)

    return violations


# ---------------------------------------------------------------------------
# QC unload swap rule as a standalone order computation
# ---------------------------------------------------------------------------

def qc_swap_reorder(ready_times: Sequence[float], q: int) -> list[int]:
    """Serving order for one QC's unload queue under the swap window.

    `ready_times[i]` is when the truck for the i-th instruction-order task is
    ready at the crane. The crane repeatedly serves, among the first q
    unserved instruction-order tasks, the one that is (or becomes) ready
    earliest, ties to instruction order. Returns instruction indices in
    serving order.
    """
    if q < 1:
        raise ValueError("swap window q must be >= 1")
    unserved = list(range(len(ready_times)))
    order: list[int] = []
    while unserved:
        window = unserved[:q]
        chosen = min(window, key=lambda i: (ready_times[i], i))
        order.append(chosen)
        unserved.remove(chosen)
    return order
