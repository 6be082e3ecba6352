import numpy as np
import pytest

from portdispatch import (
    InstanceError,
    TaskSpec,
    TerminalInstance,
    gen_instance,
    load_instance,
    save_instance,
)


def test_generated_instance_validates():
    inst = gen_instance(7, qcs=3, ycs=4, trucks=5, tasks=25)
    inst.validate()
    assert len(inst.tasks) == 25
    assert inst.travel.shape == (8, 8)
    assert all(t.src_op_time >= 10.0 and t.dst_op_time >= 10.0 for t in inst.tasks)


def test_generation_is_deterministic():
    a = gen_instance(3, qcs=2, ycs=2, trucks=3, tasks=10)
    b = gen_instance(3, qcs=2, ycs=2, trucks=3, tasks=10)
    assert np.array_equal(a.travel, b.travel)
    assert a.tasks == b.tasks
    assert a.qc_types == b.qc_types


def test_save_load_round_trip_bit_exact(tmp_path):
    inst = gen_instance(11, qcs=2, ycs=3, trucks=4, tasks=12)
    path = tmp_path / "inst.txt"
    save_instance(path, inst)
    loaded = load_instance(path)
    assert np.array_equal(loaded.travel, inst.travel)
    assert loaded.tasks == inst.tasks
    assert loaded.trucks == inst.trucks
    assert loaded.q == inst.q
    assert loaded.qc_types == inst.qc_types
    # saving again is byte-identical
    path2 = tmp_path / "inst2.txt"
    save_instance(path2, loaded)
    assert path.read_bytes() == path2.read_bytes()


def _manual_instance(**overrides):
    base = dict(
        qcs=("QC1",), ycs=("YC1",), depot="D",
        travel=np.array([[0.0, 5.0, 7.0], [5.0, 0.0, 4.0], [7.0, 4.0, 0.0]]),
        trucks=1,
        tasks=(TaskSpec(1, "QC1", "YC1", 1, 1, 30.0, 40.0),),
    )
    base.update(overrides)
    return TerminalInstance(**base)


def test_validation_catches_bad_travel_diagonal():
    travel = np.array([[1.0, 5.0, 7.0], [5.0, 0.0, 4.0], [7.0, 4.0, 0.0]])
    with pytest.raises(InstanceError):
        _manual_instance(travel=travel).validate()


def test_validation_catches_same_side_task():
    task = TaskSpec(1, "QC1", "QC1", 1, 1, 30.0, 40.0)
    with pytest.raises(InstanceError):
        _manual_instance(tasks=(task,)).validate()


def test_validation_catches_wrong_type_flag():
    task = TaskSpec(1, "YC1", "QC1", 1, 1, 30.0, 40.0)  # loading but flagged unload
    with pytest.raises(InstanceError):
        _manual_instance(tasks=(task,)).validate()


def test_validation_catches_unknown_node():
    task = TaskSpec(1, "QC9", "YC1", 1, 1, 30.0, 40.0)
    with pytest.raises(InstanceError):
        _manual_instance(tasks=(task,)).validate()


def test_validation_requires_positive_counts():
    with pytest.raises(InstanceError):
        _manual_instance(trucks=0).validate()
    with pytest.raises(InstanceError):
        _manual_instance(tasks=()).validate()
