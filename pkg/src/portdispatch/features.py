"""Canonical state features scored by every dispatch heuristic.

Each dispatch decision describes one (truck, candidate task) pair with 14
real-valued features, assembled by the simulation engine in the fixed order
below. Heuristic files may refer to a feature either by its mnemonic name or
by its positional alias f1..f14.
"""

from __future__ import annotations

FEATURE_NAMES: tuple[str, ...] = (
    "travel_time",          # f1  travel from the truck's location to the task source
    "qc_bound_trucks",      # f2  trucks currently bound to the task's QC
    "qc_remaining_tasks",   # f3  uncompleted tasks of the task's QC
    "qc_available_tasks",   # f4  unassigned tasks of the task's QC
    "qc_working_status",    # f5  0 while the QC unloads, 1 while it loads
    "qc_type",              # f6  0 standard QC, 1 remote-controlled QC
    "src_waiting_trucks",   # f7  trucks queued at the source crane
    "dst_waiting_trucks",   # f8  trucks queued at the destination crane
    "src_avg_op_time",      # f9  mean operation time at the source crane
    "dst_avg_op_time",      # f10 mean operation time at the destination crane
    "task_type",            # f11 1 unload (ship to yard), 0 load
    "task_size",            # f12 container size in TEU (1 or 2)
    "total_idle_trucks",    # f13 trucks idle at decision time
    "elapsed_time",         # f14 seconds since the first service start
)

FEATURE_INDEX: dict[str, int] = {name: i for i, name in enumerate(FEATURE_NAMES)}

# f1..f14 positional aliases accepted wherever a feature name is parsed.
FEATURE_ALIASES: dict[str, str] = {
    f"f{i + 1}": name for i, name in enumerate(FEATURE_NAMES)
}


def canonical_feature(name: str) -> str:
    """Resolve a feature alias to its canonical name (unknown names pass through)."""
    return FEATURE_ALIASES.get(name, name)
