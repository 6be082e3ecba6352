"""Terminal instances: cranes, depot, travel times, trucks, and the task list.

An instance freezes everything stochastic (operation-time realizations,
travel jitter) at generation time, so every dispatcher faces identical
conditions and simulation is deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class InstanceError(ValueError):
    """Raised when an instance violates its structural invariants."""


@dataclass(frozen=True)
class TaskSpec:
    """One container move between a quay crane and a yard crane.

    ty is 1 for unloading (source is a QC) and 0 for loading (source is a
    YC); src_op_time / dst_op_time are the realized crane operation times.
    """

    id: int
    src: str
    dst: str
    ty: int
    size: int
    src_op_time: float
    dst_op_time: float

    @property
    def op_total(self) -> float:
        return self.src_op_time + self.dst_op_time


@dataclass(frozen=True)
class TerminalInstance:
    qcs: tuple[str, ...]
    ycs: tuple[str, ...]
    depot: str
    travel: np.ndarray            # dense seconds matrix over qcs + ycs + (depot,)
    trucks: int
    tasks: tuple[TaskSpec, ...]
    q: int = 3                    # QC unload swap window
    seed: int = 0                 # generation seed, recorded for provenance
    qc_types: tuple[int, ...] = ()  # 0 standard / 1 remote, parallel to qcs

    node_index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        order = self.node_order
        object.__setattr__(self, "node_index", {n: i for i, n in enumerate(order)})
        if not self.qc_types:
            object.__setattr__(self, "qc_types", (0,) * len(self.qcs))

    @property
    def node_order(self) -> tuple[str, ...]:
        return self.qcs + self.ycs + (self.depot,)

    def travel_time(self, a: str, b: str) -> float:
        return float(self.travel[self.node_index[a], self.node_index[b]])

    def qc_of(self, task: TaskSpec) -> str:
        """The quay crane a task works: its source when unloading, else its destination."""
        return task.src if task.ty == 1 else task.dst

    def validate(self) -> None:
        """Raise InstanceError on any violated invariant."""
        qcs, ycs = set(self.qcs), set(self.ycs)
        if not self.qcs or not self.ycs:
            raise InstanceError("need at least one QC and one YC")
        if qcs & ycs or self.depot in qcs | ycs:
            raise InstanceError("node ids must be distinct across QCs, YCs, depot")
        n_nodes = len(self.node_order)
        if self.travel.shape != (n_nodes, n_nodes):
            raise InstanceError(f"travel matrix must be {n_nodes}x{n_nodes}")
        if not np.isfinite(self.travel).all():
            raise InstanceError("travel times must be finite")
        if np.any(np.diag(self.travel) != 0.0):
            raise InstanceError("travel(x, x) must be 0")
        off = self.travel[~np.eye(n_nodes, dtype=bool)]
        if np.any(off <= 0.0):
            raise InstanceError("travel(x, y) must be positive for x != y")
        if self.trucks < 1:
            raise InstanceError("need at least one truck")
        if self.q < 1:
            raise InstanceError("swap window q must be >= 1")
        if not self.tasks:
            raise InstanceError("need at least one task")
        if len(self.qc_types) != len(self.qcs):
            raise InstanceError("qc_types must parallel qcs")
        seen_ids = set()
        for t in self.tasks:
            if t.id in seen_ids:
                raise InstanceError(f"duplicate task id {t.id}")
            seen_ids.add(t.id)
            if t.src not in self.node_index or t.dst not in self.node_index:
                raise InstanceError(f"task {t.id}: unreachable node {t.src!r} or {t.dst!r}")
            src_is_qc = t.src in qcs
            dst_is_qc = t.dst in qcs
            if src_is_qc == dst_is_qc or t.src == self.depot or t.dst == self.depot:
                raise InstanceError(
                    f"task {t.id}: source and destination must span a QC and a YC"
                )
            if t.ty != (1 if src_is_qc else 0):
                raise InstanceError(f"task {t.id}: ty inconsistent with source crane type")
            if t.size not in (1, 2):
                raise InstanceError(f"task {t.id}: size must be 1 or 2 TEU")
            if t.src_op_time <= 0 or t.dst_op_time <= 0:
                raise InstanceError(f"task {t.id}: operation times must be positive")


# ---------------------------------------------------------------------------
# Instance file format: sectioned text, floats written with full precision so
# a load(save(x)) round trip preserves every bit.
# ---------------------------------------------------------------------------

def save_instance(path, inst: TerminalInstance) -> None:
    lines = ["[meta]"]
    lines.append(f"trucks = {inst.trucks}")
    lines.append(f"q = {inst.q}")
    lines.append(f"seed = {inst.seed}")
    lines.append("[nodes]")
    for name, qc_type in zip(inst.qcs, inst.qc_types):
        lines.append(f"{name} qc {qc_type}")
    for name in inst.ycs:
        lines.append(f"{name} yc")
    lines.append(f"{inst.depot} depot")
    lines.append("[travel]")
    for row in inst.travel:
        lines.append(" ".join(repr(float(v)) for v in row))
    lines.append("[tasks]")
    lines.append("# id src dst ty size src_op dst_op")
    for t in inst.tasks:
        lines.append(
            f"{t.id} {t.src} {t.dst} {t.ty} {t.size} "
            f"{repr(float(t.src_op_time))} {repr(float(t.dst_op_time))}"
        )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_instance(path) -> TerminalInstance:
    meta: dict[str, int] = {}
    qcs: list[str] = []
    qc_types: list[int] = []
    ycs: list[str] = []
    depot = ""
    travel_rows: list[list[float]] = []
    tasks: list[TaskSpec] = []
    section = ""
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("["):
                section = line.strip("[]")
                continue
            if section == "meta":
                key, _, value = line.partition("=")
                meta[key.strip()] = int(value.strip())
            elif section == "nodes":
                parts = line.split()
                if parts[1] == "qc":
                    qcs.append(parts[0])
                    qc_types.append(int(parts[2]) if len(parts) > 2 else 0)
                elif parts[1] == "yc":
                    ycs.append(parts[0])
                else:
                    depot = parts[0]
            elif section == "travel":
                travel_rows.append([float(v) for v in line.split()])
            elif section == "tasks":
                p = line.split()
                tasks.append(
                    TaskSpec(int(p[0]), p[1], p[2], int(p[3]), int(p[4]),
                             float(p[5]), float(p[6]))
                )
            else:
                raise InstanceError(f"unexpected line outside any section: {line!r}")
    inst = TerminalInstance(
        qcs=tuple(qcs),
        ycs=tuple(ycs),
        depot=depot,
        travel=np.array(travel_rows, dtype=float),
        trucks=meta.get("trucks", 1),
        tasks=tuple(tasks),
        q=meta.get("q", 3),
        seed=meta.get("seed", 0),
        qc_types=tuple(qc_types),
    )
    inst.validate()
    return inst
