from __future__ import annotations

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import music_registry, request
from vasgw.errors import DuplicateKind, EmptyRequest, MalformedConstraint, MalformedDocument, UnknownKind
from vasgw.model import (
    AGCM,
    CCM,
    Adaptability,
    Constraint,
    ConstraintKind,
    MessageEnvelope,
    Placement,
    ProfileRequest,
    Slot,
    VasKind,
    WantedService,
    constraint_satisfies,
    model_from_doc,
    serialize_profile_request,
    validate_profile_request,
    well_formed_collaboration_id,
)
from vasgw.planner import plan

TAGS = ["SAML", "SecPAL", "XACML", "WS-Policy"]


def test_request_defaults_filled():
    req = validate_profile_request(
        {"owner-id": "shop", "resource-id": "cat", "wanted": ["authentication", "authorisation"], "direction": "request", "adaptability": "Open"}
    )
    assert req.kinds == (VasKind.AUTHENTICATION, VasKind.AUTHORISATION)
    assert req.direction is Placement.REQUEST
    assert req.adaptability is Adaptability.OPEN
    bare = validate_profile_request({"owner-id": "shop", "resource-id": "cat", "wanted": ["audit"]})
    assert bare.direction is Placement.BOTH
    assert bare.adaptability is Adaptability.GUARDED


def test_empty_request_rejected():
    with pytest.raises(EmptyRequest):
        validate_profile_request({"owner-id": "a", "resource-id": "b", "wanted": []})


def test_unknown_kind_rejected():
    with pytest.raises(UnknownKind) as err:
        validate_profile_request({"owner-id": "a", "resource-id": "b", "wanted": [{"kind": "firewall", "constraints": []}]})
    assert err.value.details["tag"] == "firewall"


def test_duplicate_kind_rejected():
    with pytest.raises(DuplicateKind):
        validate_profile_request({"owner-id": "a", "resource-id": "b", "wanted": ["audit", "audit"]})


@pytest.mark.parametrize(
    "constraint",
    [
        {"kind": "qos-max-latency-ms", "value": 0},
        {"kind": "qos-max-latency-ms", "value": "fast"},
        {"kind": "semantics", "value": []},
        {"kind": "semantics", "value": 7},
        {"kind": "placement", "value": "sideways"},
        {"kind": "colour", "value": 3},
        {"value": 3},
    ],
)
def test_malformed_constraints(constraint):
    doc = {"owner-id": "a", "resource-id": "b", "wanted": [{"kind": "audit", "constraints": [constraint]}]}
    with pytest.raises(MalformedDocument):
        validate_profile_request(doc)


def test_malformed_json_text():
    with pytest.raises(MalformedDocument):
        validate_profile_request("{not json")


def test_constraint_examples():
    assert constraint_satisfies([Constraint.max_latency(20)], [Constraint.max_latency(50)])
    assert not constraint_satisfies([Constraint.semantics("XACML")], [Constraint.semantics("SecPAL")])
    assert constraint_satisfies([Constraint.semantics("XACML"), Constraint.max_latency(999)], [])
    assert constraint_satisfies([], [])


def test_missing_offer_fails_except_placement():
    assert not constraint_satisfies([], [Constraint.max_latency(50)])
    assert not constraint_satisfies([], [Constraint.semantics("XACML")])
    assert constraint_satisfies([], [Constraint.placement(Placement.REQUEST)])
    assert not constraint_satisfies([Constraint.placement(Placement.RESPONSE)], [Constraint.placement(Placement.REQUEST)])
    assert constraint_satisfies([Constraint.placement(Placement.BOTH)], [Constraint.placement(Placement.RESPONSE)])


def test_latency_matches_interval_inclusion_oracle():
    # an offered bound o is acceptable for required bound r iff every latency <= o is also <= r
    for offered in range(1, 101):
        for required in range(1, 101):
            oracle = all(x <= required for x in range(1, offered + 1))
            assert constraint_satisfies([Constraint.max_latency(offered)], [Constraint.max_latency(required)]) == oracle


def test_throughput_matches_interval_inclusion_oracle():
    for offered in range(1, 41):
        for required in range(1, 41):
            oracle = all(x <= offered for x in range(1, required + 1))
            assert constraint_satisfies([Constraint.min_throughput(offered)], [Constraint.min_throughput(required)]) == oracle


# -- property tests ----------------------------------------------------------

constraints = st.one_of(
    st.integers(1, 500).map(Constraint.max_latency),
    st.integers(1, 500).map(Constraint.min_throughput),
    st.sets(st.sampled_from(TAGS), min_size=1).map(lambda s: Constraint.semantics(*s)),
    st.sampled_from(list(Placement)).map(Constraint.placement),
)


@st.composite
def requests(draw):
    direction = draw(st.sampled_from(list(Placement)))
    kinds = draw(st.lists(st.sampled_from(list(VasKind)), min_size=1, max_size=5, unique=True))
    wanted = []
    for k in kinds:
        cs = draw(st.lists(constraints, max_size=3, unique=True))
        cs = [c for c in cs if c.kind is not ConstraintKind.PLACEMENT or direction.covers(c.value)]
        wanted.append({"kind": k.value, "constraints": [c.to_doc() for c in cs]})
    doc = {"owner-id": draw(st.sampled_from(["shop", "label-blue"])), "resource-id": "r", "wanted": wanted}
    if direction is not Placement.BOTH or draw(st.booleans()):
        doc["direction"] = direction.value
    if draw(st.booleans()):
        doc["adaptability"] = draw(st.sampled_from(list(Adaptability))).value
    if draw(st.booleans()):
        doc["preferred-architecture"] = {"category": "Security", "name": "Baseline-Security"}
    return doc


@given(requests())
@settings(max_examples=200)
def test_request_round_trip(doc):
    req = validate_profile_request(doc)
    text = serialize_profile_request(req)
    again = validate_profile_request(text)
    assert again == req
    assert serialize_profile_request(again) == text


def _loosen(c: Constraint, amount: int) -> Constraint:
    if c.kind is ConstraintKind.MAX_LATENCY:
        return Constraint.max_latency(c.value + amount)
    if c.kind is ConstraintKind.MIN_THROUGHPUT:
        return Constraint.min_throughput(max(1, c.value - amount))
    if c.kind is ConstraintKind.SEMANTICS:
        return Constraint.semantics(*(c.value | {TAGS[amount % len(TAGS)]}))
    return Constraint.placement(Placement.REQUEST if amount % 2 else Placement.RESPONSE) if c.value is Placement.BOTH else c


@given(st.lists(constraints, max_size=4), st.lists(constraints, min_size=1, max_size=4), st.integers(0, 3), st.integers(0, 200))
@settings(max_examples=300)
def test_loosening_never_breaks_satisfaction(offered, required, index, amount):
    index %= len(required)
    looser = list(required)
    looser[index] = _loosen(required[index], amount)
    if constraint_satisfies(offered, required):
        assert constraint_satisfies(offered, looser)


@given(constraints)
def test_constraint_doc_round_trip(c):
    assert Constraint.from_doc(json.loads(json.dumps(c.to_doc()))) == c


def test_constraint_rejects_bad_values():
    with pytest.raises(MalformedConstraint):
        Constraint.max_latency(-1)
    with pytest.raises(MalformedConstraint):
        Constraint(ConstraintKind.MAX_LATENCY, True)
    with pytest.raises(MalformedConstraint):
        Constraint.semantics()


def test_agcm_rejects_duplicate_slots():
    with pytest.raises(ValueError):
        AGCM("A", (Slot("audit", VasKind.AUDIT), Slot("audit", VasKind.AUDIT)))


def test_composition_model_round_trip():
    outcome = plan(request(VasKind.AUTHENTICATION, VasKind.AUTHORISATION, VasKind.AUDIT), music_registry().snapshot())
    ccm = outcome.ccm
    for model in (ccm, ccm.ascm, ccm.ascm.agcm):
        doc = json.loads(json.dumps(model.to_doc()))
        assert model_from_doc(doc) == model
    assert CCM.from_doc(ccm.to_doc()).ccm_id == ccm.ccm_id


def test_envelope_validation():
    assert well_formed_collaboration_id("collab-1a2b")
    assert not well_formed_collaboration_id("")
    assert not well_formed_collaboration_id("has space")
    with pytest.raises(MalformedDocument):
        MessageEnvelope("", Placement.REQUEST)
    with pytest.raises(MalformedDocument):
        MessageEnvelope("c1", Placement.BOTH)
    env = MessageEnvelope("c1", Placement.RESPONSE, {"token": "t"}, b"\x00\xffpayload")
    assert MessageEnvelope.from_doc(json.loads(json.dumps(env.to_doc()))) == env


def test_placement_must_fit_direction():
    with pytest.raises(MalformedConstraint):
        ProfileRequest("a", "b", (WantedService(VasKind.AUDIT, (Constraint.placement("request"),)),), Placement.RESPONSE)


def test_request_digest_is_order_sensitive():
    first = request(VasKind.AUDIT, VasKind.BILLING)
    second = request(VasKind.BILLING, VasKind.AUDIT)
    assert first.digest() != second.digest()
    assert first.digest() == request(VasKind.AUDIT, VasKind.BILLING).digest()
