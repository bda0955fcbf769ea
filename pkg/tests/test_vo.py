from __future__ import annotations

import copy

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import music_registry, request
from vasgw.clock import SimClock
from vasgw.errors import (
    AlreadyAnswered,
    InvalidState,
    NoMatchingFunction,
    NotAuthorized,
    PlanningFailed,
    RoleUncovered,
    UnknownInvitation,
    UnknownPartner,
    UnknownProfile,
    UnknownVo,
    VasError,
)
from vasgw.gateway.node import ProfileDefinition
from vasgw.gateway.scenario import Topology
from vasgw.model import Adaptability, MessageEnvelope, Placement, VasKind
from vasgw.trust import simulated_public_key
from vasgw.vo import (
    TRANSITIONS,
    Accept,
    BusinessCard,
    Decline,
    MemberJoin,
    MemberLeave,
    NewProfile,
    ProcessStep,
    Role,
    VoManager,
    VoState,
)

K = VasKind
STORE = ProcessStep(Role.OPERATOR, "storefront")
CATALOGUE = ProcessStep(Role.CONTENT_PROVIDER, "jazz-catalogue")


class FakeMember:
    """Records every call; ``fail`` maps a method name to the error it should raise."""

    def __init__(self) -> None:
        self.calls: list[tuple] = []
        self.fail: dict[str, VasError] = {}

    def _record(self, name: str, *args) -> None:
        self.calls.append((name, *args))
        if name in self.fail:
            raise self.fail[name]

    def receive_invitation(self, request):
        self._record("invite", request.invitation_id)

    def apply_creation_order(self, order):
        self._record("order", order.vo_id, order.collaboration_id, order.cards)

    def realize_profile(self, vo_id, collaboration_id, profile_ref):
        self._record("realize", vo_id, collaboration_id, profile_ref)
        return {}

    def refine_profile(self, collaboration_id, request):
        self._record("refine", collaboration_id)
        return {}

    def retire_profile(self, collaboration_id):
        self._record("retire", collaboration_id)

    def revoke_member(self, vo_id, card):
        self._record("revoke", vo_id, card.partner_id)


def _card(pid: str, role: Role) -> BusinessCard:
    return BusinessCard(pid, role, f"fip.{pid}", simulated_public_key(pid))


def _manager(labels=("label-a", "label-b", "label-c")):
    manager = VoManager("vhe")
    fakes = {"operator": FakeMember()}
    manager.register_partner(_card("operator", Role.OPERATOR), fakes["operator"], {"storefront"})
    for label in labels:
        fakes[label] = FakeMember()
        manager.register_partner(_card(label, Role.CONTENT_PROVIDER), fakes[label], {"jazz-catalogue"})
    manager.register_partner(_card("bank", Role.VAS_PROVIDER), FakeMember(), {"payments"})
    return manager, fakes


def _operational(manager, vo_id="vo-1", labels=("label-a", "label-b")):
    manager.create_vo("operator", "vhe", vo_id, "basic")
    manager.attach_process(vo_id, [STORE, CATALOGUE])
    for label in labels:
        manager.respond_invitation(manager.invite(vo_id, label), Accept("basic"))
    return manager.finalize_federation(vo_id)


def test_create_requires_known_initiator():
    manager, _ = _manager()
    with pytest.raises(UnknownPartner):
        manager.create_vo("stranger", "vhe", "vo-1")
    vo = manager.create_vo("operator", "vhe", "vo-1")
    assert vo.state is VoState.EMPTY
    with pytest.raises(InvalidState):
        manager.create_vo("operator", "vhe", "vo-1")
    with pytest.raises(UnknownVo):
        manager.status("vo-2")


def test_attach_process_configures():
    manager, _ = _manager()
    manager.create_vo("operator", "vhe", "vo-1")
    with pytest.raises(InvalidState):
        manager.attach_process("vo-1", [])
    assert manager.attach_process("vo-1", [STORE, CATALOGUE]).state is VoState.CONFIGURED
    # reconfiguring before anyone is invited is allowed
    assert manager.attach_process("vo-1", [STORE]).process == (STORE,)


def test_invite_checks_functions_and_state():
    manager, fakes = _manager()
    manager.create_vo("operator", "vhe", "vo-1")
    with pytest.raises(InvalidState):
        manager.invite("vo-1", "label-a")
    manager.attach_process("vo-1", [STORE, CATALOGUE])
    with pytest.raises(NoMatchingFunction):
        manager.invite("vo-1", "bank")
    inv = manager.invite("vo-1", "label-a")
    assert fakes["label-a"].calls == [("invite", inv)]
    assert manager.status("vo-1").state is VoState.INVITING
    with pytest.raises(InvalidState):
        manager.invite("vo-1", "label-a")
    manager.dissolve_vo("vo-1", "operator")
    with pytest.raises(InvalidState):
        manager.invite("vo-1", "label-b")


def test_accept_decline_and_answer_once():
    manager, _ = _manager()
    manager.create_vo("operator", "vhe", "vo-1")
    manager.attach_process("vo-1", [STORE, CATALOGUE])
    a = manager.invite("vo-1", "label-a")
    b = manager.invite("vo-1", "label-b")
    roster = manager.respond_invitation(a, Accept("basic"))
    assert roster["label-a"].status.value == "accepted" and roster["label-a"].profile_ref == "basic"
    assert manager.respond_invitation(b, Decline())["label-b"].status.value == "declined"
    with pytest.raises(AlreadyAnswered):
        manager.respond_invitation(a, Decline())
    with pytest.raises(UnknownInvitation):
        manager.respond_invitation("vo-1/inv-99", Accept("basic"))
    # a declined partner may be asked again
    again = manager.invite("vo-1", "label-b")
    assert again != b


def test_finalize_three_members():
    manager, fakes = _manager()
    vo = _operational(manager)
    assert vo.state is VoState.OPERATIONAL
    assert len(vo.trust_edges) == 3
    assert len(set(vo.collaboration_ids.values())) == 3
    assert [c.partner_id for c in vo.business_cards] == ["label-a", "label-b", "operator"]
    orders = [c for name in ("operator", "label-a", "label-b") for c in fakes[name].calls if c[0] == "order"]
    assert len(orders) == 3
    assert len({o[3] for o in orders}) == 1
    assert [h[1] for h in vo.history] == ["Configured", "Inviting", "Inviting", "Federated", "Virtualized", "Operational"]


def test_role_uncovered_leaves_state_unchanged():
    manager, _ = _manager()
    manager.create_vo("operator", "vhe", "vo-1")
    manager.attach_process("vo-1", [STORE, CATALOGUE])
    manager.respond_invitation(manager.invite("vo-1", "label-a"), Decline())
    before = copy.deepcopy(manager.status("vo-1").to_doc())
    with pytest.raises(RoleUncovered) as err:
        manager.finalize_federation("vo-1")
    assert err.value.details["role"] == "content-provider"
    assert manager.status("vo-1").to_doc() == before


def test_planning_failure_flags_only_that_partner():
    manager, fakes = _manager()
    fakes["label-b"].fail["realize"] = UnknownProfile("basic")
    with pytest.raises(PlanningFailed) as err:
        _operational(manager)
    assert err.value.partner == "label-b"
    vo = manager.status("vo-1")
    assert vo.state is VoState.FEDERATED
    assert vo.flagged == {"label-b": "unknown-profile"}
    assert vo.realized == {"operator", "label-a"}
    # once the partner is fixed, finishing realises only what is missing
    del fakes["label-b"].fail["realize"]
    realized_before = sum(c[0] == "realize" for c in fakes["label-a"].calls)
    assert manager.finalize_federation("vo-1").state is VoState.OPERATIONAL
    assert sum(c[0] == "realize" for c in fakes["label-a"].calls) == realized_before
    assert vo.flagged == {}


def test_adaptation_authorisation():
    manager, fakes = _manager()
    _operational(manager)
    change = NewProfile("label-a", request(K.AUDIT))
    with pytest.raises(NotAuthorized):
        manager.adapt_vo("vo-1", "label-b", change)
    manager.adapt_vo("vo-1", "label-a", change)
    manager.adapt_vo("vo-1", "operator", change)
    assert sum(c[0] == "refine" for c in fakes["label-a"].calls) == 2
    with pytest.raises(NotAuthorized):
        manager.dissolve_vo("vo-1", "label-a")


def test_member_join_and_leave_with_fakes():
    manager, fakes = _manager()
    _operational(manager)
    vo = manager.adapt_vo("vo-1", "operator", MemberJoin("label-c", "basic"))
    assert vo.state is VoState.OPERATIONAL
    assert len(vo.trust_edges) == 6 and len(vo.collaboration_ids) == 4
    vo = manager.adapt_vo("vo-1", "label-c", MemberLeave("label-c"))
    assert len(vo.trust_edges) == 3 and "label-c" not in vo.collaboration_ids
    assert ("revoke", "vo-1", "label-c") in fakes["label-a"].calls
    assert any(c[0] == "retire" for c in fakes["label-c"].calls)
    with pytest.raises(InvalidState):
        manager.adapt_vo("vo-1", "operator", MemberLeave("operator"))
    with pytest.raises(UnknownPartner):
        manager.adapt_vo("vo-1", "operator", MemberLeave("label-c"))
    assert vo.state is VoState.OPERATIONAL


def test_failed_join_rolls_back():
    manager, fakes = _manager()
    vo = _operational(manager)
    before = (set(vo.collaboration_ids), set(vo.trust_edges), list(vo.business_cards))
    fakes["label-c"].fail["realize"] = UnknownProfile("basic")
    with pytest.raises(UnknownProfile):
        manager.adapt_vo("vo-1", "operator", MemberJoin("label-c", "basic"))
    assert (set(vo.collaboration_ids), set(vo.trust_edges), list(vo.business_cards)) == before
    assert "label-c" not in vo.roster
    assert ("revoke", "vo-1", "label-c") in fakes["label-a"].calls


def test_collaboration_ids_are_unique_across_vos():
    manager, _ = _manager()
    seen = []
    for n in range(20):
        vo = _operational(manager, f"vo-{n}")
        seen.extend(vo.collaboration_ids.values())
    assert len(seen) == len(set(seen)) == 60


# -- random operation sequences ------------------------------------------------

OPS = st.lists(
    st.tuples(
        st.sampled_from(["attach", "invite", "accept", "decline", "finalize", "adapt", "join", "leave", "dissolve"]),
        st.sampled_from(["label-a", "label-b", "label-c"]),
    ),
    max_size=25,
)


def _apply(manager: VoManager, op: str, label: str) -> None:
    pending = [i for i, inv in manager.invitations.items() if inv.provider == label]
    if op == "attach":
        manager.attach_process("vo", [STORE, CATALOGUE])
    elif op == "invite":
        manager.invite("vo", label)
    elif op in ("accept", "decline"):
        manager.respond_invitation(pending[-1] if pending else "none", Accept("basic") if op == "accept" else Decline())
    elif op == "finalize":
        manager.finalize_federation("vo")
    elif op == "adapt":
        manager.adapt_vo("vo", "operator", NewProfile(label, request(K.AUDIT)))
    elif op == "join":
        manager.adapt_vo("vo", "operator", MemberJoin(label, "basic"))
    elif op == "leave":
        manager.adapt_vo("vo", label, MemberLeave(label))
    else:
        manager.dissolve_vo("vo", "operator")


@given(OPS)
@settings(max_examples=300, deadline=None)
def test_random_operations_follow_transition_table(ops):
    manager, _ = _manager()
    manager.create_vo("operator", "vhe", "vo", "basic")
    vo = manager.status("vo")
    for op, label in ops:
        state = vo.state
        try:
            _apply(manager, op, label)
        except VasError:
            # a rejected operation never leaves the VO mid-adaptation
            assert vo.state is not VoState.ADAPTING
            if op not in ("finalize", "join"):
                assert vo.state is state
        for source, target in vo.history:
            assert VoState(target) in TRANSITIONS[VoState(source)]
        if vo.state is VoState.OPERATIONAL:
            members = vo.accepted()
            assert len(vo.trust_edges) == len(members) * (len(members) - 1) // 2
            assert sorted(vo.collaboration_ids) == members
    chained = [vo.history[i][1] == vo.history[i + 1][0] for i in range(len(vo.history) - 1)]
    assert all(chained)


# -- over the wire ----------------------------------------------------------------


def _topology(labels=("label-1", "label-2")) -> Topology:
    topo = Topology(clock=SimClock())
    topo.add_gateway("vhe", Role.INFRASTRUCTURE_PROVIDER, {"hosting"})
    fill = music_registry().snapshot()
    for name in ("operator", *labels):
        node = topo.add_gateway(name, Role.OPERATOR if name == "operator" else Role.CONTENT_PROVIDER, {"storefront", "jazz-catalogue"})
        for d in fill.descriptors():
            node.registry.publish_capability(d)
        for a in fill.architecture_list():
            node.registry.publish_architecture(a)
        node.define_profile(ProfileDefinition("basic", request(K.AUDIT, K.MONITORING, owner=name, adaptability=Adaptability.OPEN)))
    return topo


def _federate(topo: Topology, vo_id: str, labels) -> None:
    manager = topo.host.host_vos()
    manager.create_vo("operator", "vhe", vo_id, "basic")
    manager.attach_process(vo_id, [STORE, CATALOGUE])
    for label in labels:
        manager.respond_invitation(manager.invite(vo_id, label), Accept("basic"))
    manager.finalize_federation(vo_id)


def _node_state(node) -> dict:
    return {
        "cards": {vo: sorted(c.partner_id for c in cs) for vo, cs in node.vo_cards.items()},
        "memberships": dict(node.memberships),
        "profiles": {p.collaboration_id: (p.ccm.ccm_id, p.state.value) for p in node.factory.profiles()},
        "trusted": sorted(k for k in ("fip.operator", "fip.label-1", "fip.label-2") if node.trust.key_of(k)),
    }


def test_adaptation_touches_only_its_own_vo():
    topo = _topology()
    _federate(topo, "vo-a", ["label-1", "label-2"])
    _federate(topo, "vo-b", ["label-1", "label-2"])
    manager = topo.host.host_vos()
    untouched = copy.deepcopy(manager.status("vo-b").to_doc())
    nodes_before = {n: _node_state(topo.nodes[n]) for n in ("operator", "label-1", "label-2")}
    manager.adapt_vo("vo-a", "label-1", NewProfile("label-1", request(K.AUDIT, K.MONITORING, K.BILLING, adaptability=Adaptability.OPEN)))
    assert manager.status("vo-b").to_doc() == untouched
    changed = {n: _node_state(topo.nodes[n]) for n in ("operator", "label-1", "label-2")}
    assert changed["operator"] == nodes_before["operator"]
    assert changed["label-2"] == nodes_before["label-2"]
    collab_a = manager.status("vo-a").collaboration_ids["label-1"]
    diff = {c for c in changed["label-1"]["profiles"] if changed["label-1"]["profiles"][c] != nodes_before["label-1"]["profiles"].get(c)}
    assert diff == {collab_a}


def test_member_leave_over_the_wire():
    topo = _topology()
    _federate(topo, "vo-a", ["label-1", "label-2"])
    _federate(topo, "vo-b", ["label-1"])
    manager = topo.host.host_vos()
    collab = manager.status("vo-a").collaboration_ids["label-2"]
    vo = manager.adapt_vo("vo-a", "label-2", MemberLeave("label-2"))
    assert all("fip.label-2" not in e for e in vo.trust_edges)
    assert [c.partner_id for c in topo.nodes["operator"].vo_cards["vo-a"]] == ["label-1", "operator"]
    # label-2 was only in vo-a, so nobody trusts it any more
    assert topo.nodes["operator"].trust.key_of("fip.label-2") is None
    envelope = MessageEnvelope(collab, Placement.REQUEST, {"token": topo.nodes["operator"].issue_token()}, b"{}")
    assert topo.send("operator", "label-2", envelope)["outcome"] == "NoProfile"
    # label-1 is still shared through vo-b, so its trust survives leaving vo-a
    manager.adapt_vo("vo-a", "label-1", MemberLeave("label-1"))
    assert topo.nodes["operator"].trust.key_of("fip.label-1") == topo.nodes["label-1"].public_key
