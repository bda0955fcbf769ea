"""Structural checks for composition models.

Each checker raises ``AssertionError`` naming the first broken invariant.
Tests run every model a module produces through these.
"""

from __future__ import annotations

from collections import Counter

from vasgw.model import AGCM, ASCM, CCM, ClassBinding, NestedBinding, Origin, constraint_satisfies
from vasgw.ordering import is_linear_extension
from vasgw.registries import ArchitectureDescription, RegistrySnapshot


def check_agcm(agcm: AGCM, adm: ArchitectureDescription | None = None) -> None:
    ids = [s.slot_id for s in agcm.slots]
    assert len(set(ids)) == len(ids), f"slot ids repeat: {ids}"
    kinds = [s.kind for s in agcm.slots]
    assert len(set(kinds)) == len(kinds), f"kinds repeat: {kinds}"
    if adm is None:
        return
    assert agcm.adm_ref == adm.id, f"AGCM refers to {agcm.adm_ref}, not {adm.id}"
    assert is_linear_extension(kinds, adm.order), f"{[k.value for k in kinds]} violates the order of {adm.id}"
    counts = Counter(kinds)
    for kind in adm.mandatory:
        assert counts[kind] == 1, f"mandatory {kind.value} appears {counts[kind]} times"
    for pair in adm.exclusions:
        assert not pair <= set(kinds), f"excluded pair {sorted(k.value for k in pair)} both present"


def check_ascm(ascm: ASCM, snapshot: RegistrySnapshot | None = None, depth_limit: int | None = None) -> None:
    check_agcm(ascm.agcm, snapshot.architectures.get(ascm.agcm.adm_ref) if snapshot else None)
    bound = [sid for sid, _ in ascm.bindings]
    assert sorted(bound) == sorted(s.slot_id for s in ascm.agcm.slots), "slots not bound exactly once"
    assert len(set(bound)) == len(bound), "a slot is bound twice"
    if depth_limit is not None:
        assert ascm.depth() <= depth_limit, f"nesting depth {ascm.depth()} over limit {depth_limit}"
    for path in ascm.architecture_paths():
        assert len(set(path)) == len(path), f"architecture repeats along {path}"
    for slot in ascm.agcm.slots:
        b = ascm.binding(slot.slot_id)
        if isinstance(b, NestedBinding):
            sub = b.ascm.agcm
            if snapshot is not None:
                adm = snapshot.architectures[sub.adm_ref]
                assert adm.realizes is slot.kind, f"{adm.id} does not realise {slot.kind.value}"
            assert all(s.origin is slot.origin or s.origin is Origin.SYSTEM for s in sub.slots)
            check_ascm(b.ascm, snapshot, None)
        else:
            assert isinstance(b, ClassBinding)
            if snapshot is not None:
                classes = dict(snapshot.classes(slot.kind))
                assert b.class_id in classes, f"class {b.class_id} has no {slot.kind.value} instances"
                assert constraint_satisfies(classes[b.class_id], b.constraints)


def check_ccm(ccm: CCM, snapshot: RegistrySnapshot | None = None) -> None:
    check_ascm(ccm.ascm, snapshot)
    leaves = list(ccm.ascm.leaves())
    assert [s.slot_id for s, _ in leaves] == [b.slot_id for b in ccm.instances], "instance bindings out of leaf order"
    assert ccm.score >= 0, "negative score"
    expected_plan = []
    for (slot, binding), inst in zip(leaves, ccm.instances):
        assert inst.kind is slot.kind
        if snapshot is not None:
            d = snapshot.capabilities[inst.instance_id]
            assert d.kind is slot.kind and d.class_id == binding.class_id
            assert constraint_satisfies(d.offered, binding.constraints), f"{d.instance_id} misses slot constraints"
            expected_plan.extend((slot.slot_id, d.instance_id, step) for step in d.setup_steps)
    if snapshot is not None:
        got = [(a.slot_id, a.instance_id, a.step) for a in ccm.setup_plan]
        assert got == expected_plan, "setup plan does not list every bound instance's steps in slot order"
