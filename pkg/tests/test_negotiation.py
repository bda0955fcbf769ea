from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import music_registry
from vasgw.clock import SimClock
from vasgw.errors import ProtocolViolation, SessionClosed
from vasgw.gateway.negotiation import (
    OWNER,
    REQUESTER,
    Agreed,
    Negotiating,
    Rejected,
    compatible,
    conclude,
    negotiate,
    negotiate_locally,
    open_session,
    opening_offer,
)
from vasgw.gateway.node import run_negotiation
from vasgw.gateway.scenario import Topology
from vasgw.model import Constraint, ProfileRequest, VasKind, WantedService
from vasgw.vo import Role

K = VasKind
TAGS = ("SAML", "SecPAL", "XACML")


def _position(owner: str, *wanted: tuple[VasKind, tuple[Constraint, ...]]) -> ProfileRequest:
    return ProfileRequest(owner, "r", tuple(WantedService(k, cs) for k, cs in wanted))


def test_compatible_positions_agree_at_once():
    req = _position("shop", (K.AUTHORISATION, (Constraint.semantics("XACML"),)))
    own = _position("label", (K.AUTHORISATION, (Constraint.semantics("SecPAL", "XACML"),)))
    mine, theirs = negotiate_locally(req, own)
    assert isinstance(mine.status, Agreed) and mine.status == theirs.status
    assert mine.round == theirs.round == 1
    assert len(mine.transcript) == len(theirs.transcript) == 2
    assert mine.status.offer.constraints_for(K.AUTHORISATION) == (Constraint.semantics("XACML"),)


def test_disjoint_semantics_never_converge():
    req = _position("shop", (K.AUTHORISATION, (Constraint.semantics("XACML"),)))
    own = _position("label", (K.AUTHORISATION, (Constraint.semantics("SecPAL"),)))
    mine, theirs = negotiate_locally(req, own, max_rounds=4)
    assert mine.status == theirs.status == Rejected("no-convergence")
    assert mine.round == theirs.round == 4


def test_owner_concedes_latency():
    req = _position("shop", (K.AUTHENTICATION, (Constraint.max_latency(10),)))
    own = _position("label", (K.AUTHENTICATION, (Constraint.max_latency(20),)))
    mine, theirs = negotiate_locally(req, own)
    assert isinstance(mine.status, Agreed)
    assert [p for p, _ in mine.transcript] == [REQUESTER, OWNER, REQUESTER]
    assert theirs.envelope.constraints_for(K.AUTHENTICATION) == (Constraint.max_latency(10),)
    assert mine.status.offer.constraints_for(K.AUTHENTICATION) == (Constraint.max_latency(10),)


def test_single_round_budget_rejects_instead_of_conceding():
    req = _position("shop", (K.AUTHENTICATION, (Constraint.max_latency(10),)))
    own = _position("label", (K.AUTHENTICATION, (Constraint.max_latency(20),)))
    mine, theirs = negotiate_locally(req, own, max_rounds=1)
    assert isinstance(mine.status, Rejected) and isinstance(theirs.status, Rejected)
    assert theirs.envelope == own


def test_requester_relaxes_to_owner_guarantee():
    # the owner already conceded once, so the requester moves on its throughput need
    req = _position("shop", (K.AUDIT, (Constraint.max_latency(5), Constraint.min_throughput(400))))
    own = _position("label", (K.AUDIT, (Constraint.min_throughput(100), Constraint.max_latency(40))))
    mine, _ = negotiate_locally(req, own)
    assert isinstance(mine.status, Agreed)
    assert set(mine.status.offer.constraints_for(K.AUDIT)) == {Constraint.max_latency(5), Constraint.min_throughput(100)}


def test_closed_and_out_of_turn_sessions():
    req = _position("shop", (K.AUDIT, ()))
    mine = open_session("s", REQUESTER, OWNER, REQUESTER, req)
    with pytest.raises(ProtocolViolation):
        negotiate(mine, req)
    opening_offer(mine)
    with pytest.raises(ProtocolViolation):
        opening_offer(mine)
    theirs = open_session("s", REQUESTER, OWNER, OWNER, _position("label", (K.AUDIT, ())))
    with pytest.raises(ProtocolViolation):
        opening_offer(theirs)
    negotiate(theirs, req)
    assert isinstance(theirs.status, Agreed)
    with pytest.raises(SessionClosed):
        negotiate(theirs, req)
    conclude(mine, theirs.status)
    with pytest.raises(SessionClosed):
        conclude(mine, Rejected("late"))
    with pytest.raises(ValueError):
        open_session("s", REQUESTER, OWNER, REQUESTER, req, max_rounds=0)


# -- independent protocol oracle -------------------------------------------------


def _oracle(req: ProfileRequest, own: ProfileRequest, max_rounds: int) -> tuple[str, int]:
    """Every round fixes exactly one unmet QoS bound; semantics never move.

    Offer r is judged after r - 1 concessions, so with f unmet bounds the
    session agrees on offer f + 1 if the budget allows it.
    """
    blocked = False
    unmet = 0
    for w in req.wanted:
        have = {c.kind.value: c.value for c in own.constraints_for(w.kind)}
        for c in w.constraints:
            name = c.kind.value
            if name == "semantics":
                blocked |= not (set(have.get(name, ())) & set(c.value))
            elif name == "qos-max-latency-ms":
                unmet += name not in have or have[name] > c.value
            else:
                unmet += name not in have or have[name] < c.value
    if blocked or unmet + 1 > max_rounds:
        return "Rejected", max_rounds
    return "Agreed", unmet + 1


@st.composite
def positions(draw, owner: bool):
    kinds = draw(st.lists(st.sampled_from(list(VasKind)), min_size=1, max_size=3, unique=True))
    wanted = []
    for kind in kinds:
        cs = []
        if draw(st.booleans()):
            cs.append(Constraint.semantics(*draw(st.sets(st.sampled_from(TAGS), min_size=1))))
        if draw(st.booleans()):
            cs.append(Constraint.max_latency(draw(st.sampled_from([5, 10, 20, 40]))))
        if draw(st.booleans()):
            cs.append(Constraint.min_throughput(draw(st.sampled_from([50, 100, 200]))))
        cs = draw(st.permutations(cs))
        wanted.append((kind, tuple(cs)))
    return _position("label" if owner else "shop", *wanted)


@given(positions(False), positions(True), st.integers(1, 8))
@settings(max_examples=400, deadline=None)
def test_protocol_matches_oracle(req, own, max_rounds):
    # the owner speaks for every kind the requester asks about
    extra = tuple((k, ()) for k in req.kinds if k not in own.kinds)
    own = _position("label", *((w.kind, w.constraints) for w in own.wanted), *extra)
    mine, theirs = negotiate_locally(req, own, max_rounds)
    status, rounds = _oracle(req, own, max_rounds)
    assert type(mine.status).__name__ == type(theirs.status).__name__ == status
    assert mine.round == theirs.round == rounds
    assert len(mine.offers()) == len(theirs.offers()) == rounds
    if status == "Agreed":
        assert compatible(mine.status.offer, theirs.envelope)
        assert compatible(mine.envelope, mine.status.offer)


def test_sessions_are_isolated():
    rng = random.Random(3)
    req = _position("shop", (K.AUTHENTICATION, (Constraint.max_latency(10),)))
    own = _position("label", (K.AUTHENTICATION, (Constraint.max_latency(20),)))
    pairs = [negotiate_locally(req, own, rng.randint(2, 5)) for _ in range(10)]
    assert len({m.session_id for m, _ in pairs}) == 10
    # the envelopes passed in are values; nothing a session does leaks back
    assert own.constraints_for(K.AUTHENTICATION) == (Constraint.max_latency(20),)


# -- over the wire -----------------------------------------------------------------


def _pair() -> Topology:
    topo = Topology(clock=SimClock())
    topo.add_gateway("vhe", Role.INFRASTRUCTURE_PROVIDER, {"hosting"})
    topo.add_gateway("operator", Role.OPERATOR, {"storefront"})
    label = topo.add_gateway("label-1", Role.CONTENT_PROVIDER, {"jazz-catalogue"})
    for d in music_registry().snapshot().descriptors():
        label.registry.publish_capability(d)
    return topo


def test_run_negotiation_over_network():
    topo = _pair()
    requester = topo.nodes["operator"]
    envelope = _position("operator", (K.AUTHORISATION, (Constraint.semantics("XACML"),)))
    session = run_negotiation(topo.network, requester, "label-1", envelope, "sess-1")
    other = topo.nodes["label-1"].sessions["sess-1"]
    assert isinstance(session.status, Agreed)
    assert session.status == other.status
    assert len(session.transcript) == len(other.transcript)
    assert session.round == other.round


def test_run_negotiation_rejects_impossible_terms():
    topo = _pair()
    envelope = _position("operator", (K.AUTHORISATION, (Constraint.semantics("WS-Policy"),)))
    session = run_negotiation(topo.network, topo.nodes["operator"], "label-1", envelope)
    other = topo.nodes["label-1"].sessions[session.session_id]
    assert isinstance(session.status, Rejected) and isinstance(other.status, Rejected)
    assert not isinstance(other.status, Negotiating)
