import numpy as np
import pytest

from portdispatch import TaskSpec, TerminalInstance, gen_instance


def contention_free_instance(seed: int, n_tasks: int = 4,
                             trucks: int = 2) -> TerminalInstance:
    """Every crane is used by exactly one task, so queues never form."""
    base = gen_instance(seed, qcs=n_tasks, ycs=n_tasks, trucks=trucks,
                        tasks=n_tasks)
    tasks = []
    for i, t in enumerate(base.tasks):
        if t.ty == 1:
            src, dst = f"QC{i + 1}", f"YC{i + 1}"
        else:
            src, dst = f"YC{i + 1}", f"QC{i + 1}"
        tasks.append(TaskSpec(i + 1, src, dst, t.ty, t.size,
                              t.src_op_time, t.dst_op_time))
    return TerminalInstance(
        qcs=base.qcs, ycs=base.ycs, depot=base.depot, travel=base.travel,
        trucks=trucks, tasks=tuple(tasks), q=base.q, seed=seed,
        qc_types=base.qc_types)


def tiny_instance(seed: int, trucks: int = 2, tasks: int = 4) -> TerminalInstance:
    return gen_instance(seed, qcs=2, ycs=2, trucks=trucks, tasks=tasks)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
