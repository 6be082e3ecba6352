"""Synthetic terminal instances.

Quay cranes sit along the quay line, yard cranes on a block grid behind it,
the depot off to the side. Travel time is rectilinear distance over a fixed
road speed plus a small per-direction jitter; crane operation times are
truncated normals (QC mean 90 s, YC mean 120 s, sigma 25%, floor 10 s)
realized once here so every dispatcher faces the same draw. Each QC works a
single mode over the horizon (alternating unload/load along the quay).
"""

from __future__ import annotations

import numpy as np

from .instance import TaskSpec, TerminalInstance

ROAD_SPEED = 6.0          # m/s
JITTER_MAX = 5.0          # s, per ordered node pair
QC_SPACING = 300.0        # m along the quay
YC_SPACING_X = 160.0
YC_SPACING_Y = 140.0
YARD_OFFSET = 240.0       # m from quay to first yard row
QC_OP_MEAN = 90.0
YC_OP_MEAN = 120.0
OP_SIGMA_FRACTION = 0.25
OP_FLOOR = 10.0
REMOTE_QC_FRACTION = 1.0 / 3.0


def _positions(qcs: int, ycs: int) -> list[tuple[float, float]]:
    coords = [(i * QC_SPACING, 0.0) for i in range(qcs)]
    columns = max(1, int(np.ceil(np.sqrt(ycs))))
    for j in range(ycs):
        col, row = j % columns, j // columns
        coords.append((80.0 + col * YC_SPACING_X, YARD_OFFSET + row * YC_SPACING_Y))
    coords.append((-250.0, 120.0))  # depot
    return coords


def _op_time(rng: np.random.Generator, mean: float) -> float:
    return float(max(OP_FLOOR, rng.normal(mean, OP_SIGMA_FRACTION * mean)))


def gen_instance(seed: int, qcs: int = 2, ycs: int = 4, trucks: int = 6,
                 tasks: int = 100, q: int = 3) -> TerminalInstance:
    """Build one deterministic instance from a seed."""
    if min(qcs, ycs, trucks, tasks) < 1:
        raise ValueError("qcs, ycs, trucks, tasks must all be >= 1")
    rng = np.random.default_rng(seed)
    qc_names = tuple(f"QC{i + 1}" for i in range(qcs))
    yc_names = tuple(f"YC{i + 1}" for i in range(ycs))
    coords = _positions(qcs, ycs)

    n_nodes = len(coords)
    travel = np.zeros((n_nodes, n_nodes))
    for a in range(n_nodes):
        for b in range(n_nodes):
            if a == b:
                continue
            dist = abs(coords[a][0] - coords[b][0]) + abs(coords[a][1] - coords[b][1])
            travel[a, b] = dist / ROAD_SPEED + rng.uniform(0.0, JITTER_MAX)

    qc_types = tuple(int(rng.random() < REMOTE_QC_FRACTION) for _ in range(qcs))
    qc_modes = [i % 2 for i in range(qcs)]  # 0 unload, 1 load, alternating

    specs: list[TaskSpec] = []
    for i in range(tasks):
        qc = int(rng.integers(qcs))
        yc = int(rng.integers(ycs))
        unloading = qc_modes[qc] == 0
        size = int(rng.integers(1, 3))
        qc_op = _op_time(rng, QC_OP_MEAN)
        yc_op = _op_time(rng, YC_OP_MEAN)
        if unloading:
            specs.append(TaskSpec(i + 1, qc_names[qc], yc_names[yc], 1, size,
                                  qc_op, yc_op))
        else:
            specs.append(TaskSpec(i + 1, yc_names[yc], qc_names[qc], 0, size,
                                  yc_op, qc_op))

    inst = TerminalInstance(
        qcs=qc_names, ycs=yc_names, depot="D", travel=travel, trucks=trucks,
        tasks=tuple(specs), q=q, seed=seed, qc_types=qc_types)
    inst.validate()
    return inst
