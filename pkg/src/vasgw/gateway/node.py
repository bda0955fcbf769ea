"""A B2B gateway: registries, planner, profile factory and trust, behind a frame endpoint.

:class:`GatewayNode` implements the :class:`~vasgw.vo.MemberGateway` calls
locally; :class:`RemoteMember` implements the same calls by sending frames
over a network, which is how the hosting gateway's :class:`~vasgw.vo.VoManager`
reaches the members.
"""

from __future__ import annotations

import itertools
from collections import defaultdict
from collections.abc import Mapping
from dataclasses import dataclass, field, replace
from typing import Any

from vasgw.errors import ApprovalRequired, ProtocolViolation, UnknownProfile, VasError, rebuild
from vasgw.factory import ProfileFactory
from vasgw.gateway.frames import Frame
from vasgw.gateway.negotiation import (
    DEFAULT_MAX_ROUNDS,
    Agreed,
    NegotiationSession,
    Rejected,
    conclude,
    negotiate,
    open_session,
    opening_offer,
)
from vasgw.model import (
    CCM,
    Constraint,
    ConstraintKind,
    Lifecycle,
    MessageEnvelope,
    ProfileRequest,
    WantedService,
    validate_profile_request,
)
from vasgw.planner import Accept, CostWeights, Failed, PredicationEngine, ProposalPending, deviations_of
from vasgw.registries import Registry
from vasgw.trust import PeerDirectory, TrustStore, issue_token, simulated_public_key
from vasgw.vo import BusinessCard, CreationOrder, ParticipationRequest, Role, VoManager


@dataclass(frozen=True)
class ProfileDefinition:
    """A named VAS profile a partner can attach to a federation."""

    ref: str
    request: ProfileRequest
    lifecycle: Lifecycle = field(default_factory=Lifecycle.eager)

    def to_doc(self) -> dict[str, Any]:
        return {"ref": self.ref, "request": self.request.to_doc(), "lifecycle": self.lifecycle.to_doc()}

    @classmethod
    def from_doc(cls, doc: Mapping[str, Any]) -> ProfileDefinition:
        return cls(doc["ref"], validate_profile_request(doc["request"]), Lifecycle.from_doc(doc.get("lifecycle", "Eager")))


class GatewayNode:
    def __init__(
        self,
        gateway_id: str,
        role: Role,
        *,
        clock: Any = None,
        registry: Registry | None = None,
        weights: CostWeights = CostWeights(),
        depth_limit: int = 3,
        max_rounds: int = DEFAULT_MAX_ROUNDS,
        auto_accept: bool = True,
    ) -> None:
        self.gateway_id = gateway_id
        self.clock = clock
        self.registry = registry or Registry(clock=clock)
        self.engine = PredicationEngine(self.registry, weights, depth_limit)
        self.trust = TrustStore()
        self.peers = PeerDirectory()
        self.factory = ProfileFactory(gateway_id, clock=clock, trust=self.trust, peers=self.peers)
        self.public_key = simulated_public_key(gateway_id)
        self.card = BusinessCard(gateway_id, role, f"fip.{gateway_id}", self.public_key)
        self.max_rounds = max_rounds
        self.auto_accept = auto_accept
        self.definitions: dict[str, ProfileDefinition] = {}
        self.invitations: list[ParticipationRequest] = []
        self.vo_cards: dict[str, list[BusinessCard]] = {}
        self.memberships: dict[str, str] = {}
        self.notices: list[dict[str, Any]] = []
        self.sessions: dict[str, NegotiationSession] = {}
        self._claims: dict[str, set[str]] = defaultdict(set)
        self.vo_manager: VoManager | None = None

    # configuration

    def define_profile(self, definition: ProfileDefinition) -> None:
        self.definitions[definition.ref] = definition

    def host_vos(self) -> VoManager:
        if self.vo_manager is None:
            self.vo_manager = VoManager(self.gateway_id)
        return self.vo_manager

    def issue_token(self) -> str:
        return issue_token(self.card.fip_ref, self.public_key)

    # MemberGateway

    def receive_invitation(self, request: ParticipationRequest) -> None:
        self.invitations.append(request)

    def apply_creation_order(self, order: CreationOrder) -> None:
        if order.partner_id != self.gateway_id:
            raise ProtocolViolation(f"creation order for {order.partner_id!r} sent to {self.gateway_id!r}")
        self.vo_cards[order.vo_id] = list(order.cards)
        self.memberships[order.vo_id] = order.collaboration_id
        for card in order.peers():
            self.peers.register(card.fip_ref, card.public_key)
            self.trust.trust(card.fip_ref, card.public_key)
            self._claims[card.fip_ref].add(order.vo_id)
        self.factory.push_policy(order.collaboration_id, dict(order.policy))

    def realize_profile(self, vo_id: str, collaboration_id: str, profile_ref: str) -> dict[str, Any]:
        definition = self.definitions.get(profile_ref)
        if definition is None:
            raise UnknownProfile(profile_ref)
        request = replace(definition.request, owner_id=self.gateway_id)
        ccm = self._plan(request, collaboration_id)
        profile = self.factory.enact(ccm, collaboration_id, definition.lifecycle)
        return _profile_summary(profile)

    def refine_profile(self, collaboration_id: str, request: ProfileRequest) -> dict[str, Any]:
        request = replace(request, owner_id=self.gateway_id)
        ccm = self._plan(request, collaboration_id)
        if self.factory.profile(collaboration_id, ccm.direction) is None:
            profile = self.factory.enact(ccm, collaboration_id)
        else:
            profile = self.factory.swap_profile(collaboration_id, ccm)
        return _profile_summary(profile)

    def retire_profile(self, collaboration_id: str) -> None:
        self.factory.retire(collaboration_id)

    def revoke_member(self, vo_id: str, card: BusinessCard) -> None:
        cards = self.vo_cards.get(vo_id)
        if cards is not None:
            self.vo_cards[vo_id] = [c for c in cards if c.partner_id != card.partner_id]
        if card.partner_id == self.gateway_id:
            return
        claims = self._claims.get(card.fip_ref)
        if claims is None:
            return
        claims.discard(vo_id)
        if not claims:
            # no other federation still relies on this identity provider
            self.trust.revoke(card.fip_ref)
            del self._claims[card.fip_ref]

    def _plan(self, request: ProfileRequest, collaboration_id: str) -> CCM:
        outcome = self.engine.plan(request)
        if isinstance(outcome, ProposalPending):
            if not self.auto_accept:
                raise ApprovalRequired(list(outcome.deviations))
            self.notices.append(
                {
                    "collaboration-id": collaboration_id,
                    "ccm-id": outcome.ccm.ccm_id,
                    "deviations": [d.to_doc() for d in outcome.deviations],
                }
            )
            outcome = self.engine.review_ccm(outcome, Accept())
        if isinstance(outcome, Failed):
            raise outcome.error
        return outcome.ccm  # type: ignore[union-attr]

    # negotiation (owner side)

    def capability_envelope(self, request: ProfileRequest) -> ProfileRequest:
        """What this gateway can guarantee for the kinds in ``request``, from its capability registry."""
        snapshot = self.registry.snapshot()
        wanted = []
        for kind in request.kinds:
            latencies: list[int] = []
            throughputs: list[int] = []
            tags: set[str] = set()
            for d in snapshot.descriptors():
                if d.kind is not kind:
                    continue
                for c in d.offered:
                    if c.kind is ConstraintKind.MAX_LATENCY:
                        latencies.append(c.value)  # type: ignore[arg-type]
                    elif c.kind is ConstraintKind.MIN_THROUGHPUT:
                        throughputs.append(c.value)  # type: ignore[arg-type]
                    elif c.kind is ConstraintKind.SEMANTICS:
                        tags |= c.value  # type: ignore[arg-type]
            constraints: list[Constraint] = []
            if tags:
                constraints.append(Constraint.semantics(*sorted(tags)))
            if latencies:
                constraints.append(Constraint.max_latency(min(latencies)))
            if throughputs:
                constraints.append(Constraint.min_throughput(max(throughputs)))
            wanted.append(WantedService(kind, tuple(constraints)))
        return ProfileRequest(self.gateway_id, request.resource_id, tuple(wanted))

    def _on_offer(self, frame: Frame) -> Frame:
        body = frame.body
        sid = str(body["session-id"])
        offer = validate_profile_request(body["offer"])
        session = self.sessions.get(sid)
        if session is None:
            rounds = int(body.get("max-rounds", self.max_rounds))
            session = open_session(sid, frame.sender, self.gateway_id, self.gateway_id, self.capability_envelope(offer), rounds)
            self.sessions[sid] = session
        negotiate(session, offer)
        return frame.reply("negotiate-reply", self.gateway_id, _verdict_doc(session))

    def _on_verdict(self, frame: Frame) -> None:
        body = frame.body
        session = self.sessions.get(str(body["session-id"]))
        if session is None:
            raise ProtocolViolation(f"no session {body['session-id']!r}")
        if body["status"] == "Agreed":
            conclude(session, Agreed(validate_profile_request(body["offer"])))
        elif body["status"] == "Rejected":
            conclude(session, Rejected(body["reason"]))
        else:
            raise ProtocolViolation("a verdict must be Agreed or Rejected")

    # frame endpoint

    def handle_frame(self, frame: Frame) -> Frame:
        try:
            return self._dispatch(frame)
        except VasError as exc:
            return frame.reply("error", self.gateway_id, exc.to_doc())

    def _dispatch(self, frame: Frame) -> Frame:
        body = frame.body
        kind = frame.frame_type
        ack = {}
        if kind == "ping":
            pass
        elif kind == "invitation":
            self.receive_invitation(ParticipationRequest.from_doc(body))
        elif kind == "creation-order":
            self.apply_creation_order(CreationOrder.from_doc(body))
            ack = {"cards": len(self.vo_cards[body["vo-id"]])}
        elif kind == "realize-profile":
            ack = self.realize_profile(body["vo-id"], body["collaboration-id"], body["profile-ref"])
        elif kind == "refine-profile":
            ack = self.refine_profile(body["collaboration-id"], validate_profile_request(body["request"]))
        elif kind == "retire-profile":
            self.retire_profile(body["collaboration-id"])
        elif kind == "revoke-member":
            self.revoke_member(body["vo-id"], BusinessCard.from_doc(body["card"]))
        elif kind == "negotiate-offer":
            return self._on_offer(frame)
        elif kind == "negotiate-reply":
            self._on_verdict(frame)
        elif kind == "message":
            result = self.factory.intercept(MessageEnvelope.from_doc(body["envelope"]))
            return frame.reply("message-result", self.gateway_id, _result_doc(result))
        else:
            raise ProtocolViolation(f"{self.gateway_id} does not accept {kind!r} frames")
        return frame.reply("ack", self.gateway_id, ack)


class RemoteMember:
    """The :class:`~vasgw.vo.MemberGateway` calls, carried as frames to another gateway."""

    def __init__(self, network: Any, local: str, remote: str) -> None:
        self.network = network
        self.local = local
        self.remote = remote

    def call(self, frame_type: str, ref: str, body: Mapping[str, Any]) -> Frame:
        reply = self.network.route(self.local, self.remote, Frame(frame_type, ref, self.local, dict(body)))
        if reply.frame_type == "error":
            raise rebuild(dict(reply.body))
        return reply

    def receive_invitation(self, request: ParticipationRequest) -> None:
        self.call("invitation", request.vo_id, request.to_doc())

    def apply_creation_order(self, order: CreationOrder) -> None:
        self.call("creation-order", order.vo_id, order.to_doc())

    def realize_profile(self, vo_id: str, collaboration_id: str, profile_ref: str) -> dict[str, Any]:
        body = {"vo-id": vo_id, "collaboration-id": collaboration_id, "profile-ref": profile_ref}
        return dict(self.call("realize-profile", vo_id, body).body)

    def refine_profile(self, collaboration_id: str, request: ProfileRequest) -> dict[str, Any]:
        body = {"collaboration-id": collaboration_id, "request": request.to_doc()}
        return dict(self.call("refine-profile", collaboration_id, body).body)

    def retire_profile(self, collaboration_id: str) -> None:
        self.call("retire-profile", collaboration_id, {"collaboration-id": collaboration_id})

    def revoke_member(self, vo_id: str, card: BusinessCard) -> None:
        self.call("revoke-member", vo_id, {"vo-id": vo_id, "card": card.to_doc()})

    def send_message(self, envelope: MessageEnvelope) -> dict[str, Any]:
        return dict(self.call("message", envelope.collaboration_id, {"envelope": envelope.to_doc()}).body)


_session_ids = itertools.count(1)


def run_negotiation(
    network: Any, requester: GatewayNode, owner_id: str, envelope: ProfileRequest, session_id: str | None = None
) -> NegotiationSession:
    """Drive a session from the requester's side, one frame per offer."""
    sid = session_id or f"{requester.gateway_id}/neg-{next(_session_ids)}"
    session = open_session(sid, requester.gateway_id, owner_id, requester.gateway_id, envelope, requester.max_rounds)
    requester.sessions[sid] = session
    link = RemoteMember(network, requester.gateway_id, owner_id)
    offer = opening_offer(session)
    while True:
        body = {"session-id": sid, "max-rounds": session.max_rounds, "offer": offer.to_doc()}
        reply = link.call("negotiate-offer", sid, body).body
        status = reply["status"]
        if status == "Agreed":
            conclude(session, Agreed(validate_profile_request(reply["offer"])))
            return session
        if status == "Rejected":
            conclude(session, Rejected(reply["reason"]))
            return session
        negotiate(session, validate_profile_request(reply["offer"]))
        if not session.is_open:
            # the requester decided on receipt; tell the owner so both copies close
            link.call("negotiate-reply", sid, {"session-id": sid, **_verdict_doc(session)})
            return session
        offer = session.transcript[-1][1]


def _verdict_doc(session: NegotiationSession) -> dict[str, Any]:
    status = session.status
    if isinstance(status, Agreed):
        return {"status": "Agreed", "offer": status.offer.to_doc(), "round": session.round}
    if isinstance(status, Rejected):
        return {"status": "Rejected", "reason": status.reason, "round": session.round}
    return {"status": "Counter", "offer": session.transcript[-1][1].to_doc(), "round": session.round}


def _result_doc(result: Any) -> dict[str, Any]:
    return result.to_doc()


def _profile_summary(profile: Any) -> dict[str, Any]:
    return {
        "collaboration-id": profile.collaboration_id,
        "ccm-id": profile.ccm.ccm_id,
        "chain": list(profile.chain_slots),
        "state": profile.state.value,
        "deviations": [d.to_doc() for d in deviations_of(profile.ccm.ascm)],
    }
