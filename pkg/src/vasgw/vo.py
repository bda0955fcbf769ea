"""Virtual-organisation lifecycle: foundation, federation, virtualisation, adaptation.

:class:`VoManager` runs at the hosting gateway (the infrastructure provider's
VHE).  It never touches partner state directly; everything a partner must do
goes through the :class:`MemberGateway` calls, which the gateway service
carries over the wire and acknowledges before the VO state commits.
"""

from __future__ import annotations

import hashlib
import itertools
import threading
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Protocol, Union

from vasgw.errors import (
    AlreadyAnswered,
    InvalidState,
    NoMatchingFunction,
    NotAuthorized,
    PlanningFailed,
    RoleUncovered,
    UnknownInvitation,
    UnknownPartner,
    UnknownVo,
    VasError,
)
from vasgw.model import ProfileRequest


class VoState(str, Enum):
    EMPTY = "Empty"
    CONFIGURED = "Configured"
    INVITING = "Inviting"
    FEDERATED = "Federated"
    VIRTUALIZED = "Virtualized"
    OPERATIONAL = "Operational"
    ADAPTING = "Adapting"
    DISSOLVED = "Dissolved"


S = VoState
TRANSITIONS: dict[VoState, frozenset[VoState]] = {
    S.EMPTY: frozenset({S.CONFIGURED, S.DISSOLVED}),
    S.CONFIGURED: frozenset({S.CONFIGURED, S.INVITING, S.DISSOLVED}),
    S.INVITING: frozenset({S.INVITING, S.FEDERATED, S.DISSOLVED}),
    S.FEDERATED: frozenset({S.VIRTUALIZED, S.DISSOLVED}),
    S.VIRTUALIZED: frozenset({S.OPERATIONAL}),
    S.OPERATIONAL: frozenset({S.ADAPTING, S.DISSOLVED}),
    S.ADAPTING: frozenset({S.OPERATIONAL}),
    S.DISSOLVED: frozenset(),
}


class Role(str, Enum):
    INFRASTRUCTURE_PROVIDER = "infrastructure-provider"
    CONTENT_PROVIDER = "content-provider"
    OPERATOR = "operator"
    VAS_PROVIDER = "vas-provider"


@dataclass(frozen=True)
class BusinessCard:
    partner_id: str
    role: Role
    fip_ref: str
    public_key: str

    def to_doc(self) -> dict[str, str]:
        return {
            "partner-id": self.partner_id,
            "role": self.role.value,
            "fip-ref": self.fip_ref,
            "public-key": self.public_key,
        }

    @classmethod
    def from_doc(cls, doc: Mapping[str, Any]) -> BusinessCard:
        return cls(doc["partner-id"], Role(doc["role"]), doc["fip-ref"], doc["public-key"])


@dataclass(frozen=True)
class ProcessStep:
    role: Role
    function: str

    def to_doc(self) -> dict[str, str]:
        return {"role": self.role.value, "business-function": self.function}

    @classmethod
    def from_doc(cls, doc: Mapping[str, Any]) -> ProcessStep:
        return cls(Role(doc["role"]), doc["business-function"])


class InvitationStatus(str, Enum):
    INVITED = "invited"
    ACCEPTED = "accepted"
    DECLINED = "declined"


@dataclass
class RosterEntry:
    role: Role
    profile_ref: str | None
    status: InvitationStatus
    invitation_id: str | None = None

    def to_doc(self) -> dict[str, Any]:
        return {
            "role": self.role.value,
            "profile-ref": self.profile_ref,
            "status": self.status.value,
            "invitation-id": self.invitation_id,
        }


@dataclass
class VoRecord:
    vo_id: str
    initiator: str
    vhe_ref: str
    state: VoState = VoState.EMPTY
    process: tuple[ProcessStep, ...] = ()
    roster: dict[str, RosterEntry] = field(default_factory=dict)
    business_cards: list[BusinessCard] = field(default_factory=list)
    trust_edges: set[frozenset[str]] = field(default_factory=set)
    collaboration_ids: dict[str, str] = field(default_factory=dict)
    realized: set[str] = field(default_factory=set)
    flagged: dict[str, str] = field(default_factory=dict)
    history: list[tuple[str, str]] = field(default_factory=list)

    def accepted(self) -> list[str]:
        return sorted(p for p, e in self.roster.items() if e.status is InvitationStatus.ACCEPTED)

    def to_doc(self) -> dict[str, Any]:
        return {
            "vo-id": self.vo_id,
            "initiator": self.initiator,
            "vhe-ref": self.vhe_ref,
            "state": self.state.value,
            "process": [s.to_doc() for s in self.process],
            "roster": {p: e.to_doc() for p, e in sorted(self.roster.items())},
            "business-cards": [c.to_doc() for c in self.business_cards],
            "trust-edges": sorted(sorted(e) for e in self.trust_edges),
            "collaboration-ids": dict(sorted(self.collaboration_ids.items())),
            "flagged": dict(sorted(self.flagged.items())),
            "history": [list(h) for h in self.history],
        }


@dataclass(frozen=True)
class ParticipationRequest:
    invitation_id: str
    vo_id: str
    initiator: str
    process: tuple[ProcessStep, ...]

    def to_doc(self) -> dict[str, Any]:
        return {
            "invitation-id": self.invitation_id,
            "vo-id": self.vo_id,
            "initiator": self.initiator,
            "process": [s.to_doc() for s in self.process],
        }

    @classmethod
    def from_doc(cls, doc: Mapping[str, Any]) -> ParticipationRequest:
        return cls(doc["invitation-id"], doc["vo-id"], doc["initiator"], tuple(ProcessStep.from_doc(s) for s in doc["process"]))


@dataclass(frozen=True)
class CreationOrder:
    """Everything one member needs to join a federation: cards, peers to trust, its collaboration id and policy."""

    vo_id: str
    partner_id: str
    collaboration_id: str
    cards: tuple[BusinessCard, ...]
    policy: Mapping[str, Any] = field(default_factory=dict, hash=False)

    def peers(self) -> list[BusinessCard]:
        return [c for c in self.cards if c.partner_id != self.partner_id]

    def to_doc(self) -> dict[str, Any]:
        return {
            "vo-id": self.vo_id,
            "partner-id": self.partner_id,
            "collaboration-id": self.collaboration_id,
            "cards": [c.to_doc() for c in self.cards],
            "policy": dict(self.policy),
        }

    @classmethod
    def from_doc(cls, doc: Mapping[str, Any]) -> CreationOrder:
        return cls(
            doc["vo-id"],
            doc["partner-id"],
            doc["collaboration-id"],
            tuple(BusinessCard.from_doc(c) for c in doc["cards"]),
            dict(doc.get("policy", {})),
        )


@dataclass(frozen=True)
class Invitation:
    invitation_id: str
    vo_id: str
    provider: str


@dataclass(frozen=True)
class Accept:
    profile_ref: str


@dataclass(frozen=True)
class Decline:
    pass


@dataclass(frozen=True)
class NewProfile:
    partner: str
    request: ProfileRequest


@dataclass(frozen=True)
class MemberJoin:
    provider: str
    profile_ref: str


@dataclass(frozen=True)
class MemberLeave:
    partner: str


Change = Union[NewProfile, MemberJoin, MemberLeave]


class MemberGateway(Protocol):
    def receive_invitation(self, request: ParticipationRequest) -> None: ...

    def apply_creation_order(self, order: CreationOrder) -> None: ...

    def realize_profile(self, vo_id: str, collaboration_id: str, profile_ref: str) -> Mapping[str, Any]: ...

    def refine_profile(self, collaboration_id: str, request: ProfileRequest) -> Mapping[str, Any]: ...

    def retire_profile(self, collaboration_id: str) -> None: ...

    def revoke_member(self, vo_id: str, card: BusinessCard) -> None: ...


@dataclass
class PartnerEntry:
    card: BusinessCard
    gateway: MemberGateway
    functions: set[str] = field(default_factory=set)


class VoManager:
    def __init__(self, host_id: str) -> None:
        self.host_id = host_id
        self.partners: dict[str, PartnerEntry] = {}
        self.vos: dict[str, VoRecord] = {}
        self.invitations: dict[str, Invitation] = {}
        self._answered: set[str] = set()
        self._locks: dict[str, threading.RLock] = {}
        self._guard = threading.Lock()
        self._mint = itertools.count(1)
        self._issued: set[str] = set()

    # foundation

    def register_partner(self, card: BusinessCard, gateway: MemberGateway, functions: Iterable[str] = ()) -> None:
        with self._guard:
            self.partners[card.partner_id] = PartnerEntry(card, gateway, set(functions))

    def publish_function(self, partner_id: str, function: str) -> None:
        self._partner(partner_id).functions.add(function)

    def create_vo(self, initiator: str, vhe_ref: str, vo_id: str, profile_ref: str | None = None) -> VoRecord:
        entry = self._partner(initiator)
        with self._guard:
            if vo_id in self.vos:
                raise InvalidState(f"VO {vo_id!r} already exists", vo_id=vo_id)
            vo = VoRecord(vo_id=vo_id, initiator=initiator, vhe_ref=vhe_ref)
            vo.roster[initiator] = RosterEntry(entry.card.role, profile_ref, InvitationStatus.ACCEPTED)
            self.vos[vo_id] = vo
            self._locks[vo_id] = threading.RLock()
        return vo

    def attach_process(self, vo_id: str, steps: Iterable[ProcessStep]) -> VoRecord:
        with self._locked(vo_id) as vo:
            self._require(vo, S.EMPTY, S.CONFIGURED)
            steps = tuple(steps)
            if not steps:
                raise InvalidState("a collaborative process needs at least one step", vo_id=vo_id)
            vo.process = steps
            self._transition(vo, S.CONFIGURED)
            return vo

    # partner federation

    def invite(self, vo_id: str, provider: str, process_view: Iterable[ProcessStep] | None = None) -> str:
        with self._locked(vo_id) as vo:
            self._require(vo, S.CONFIGURED, S.INVITING)
            invitation_id = self._invite(vo, provider, process_view)
            self._transition(vo, S.INVITING)
            return invitation_id

    def _invite(self, vo: VoRecord, provider: str, process_view: Iterable[ProcessStep] | None) -> str:
        entry = self._partner(provider)
        wanted = {s.function for s in vo.process}
        if not entry.functions & wanted:
            raise NoMatchingFunction(provider)
        current = vo.roster.get(provider)
        if current is not None and current.status is not InvitationStatus.DECLINED:
            raise InvalidState(f"{provider!r} is already {current.status.value}", provider=provider)
        invitation_id = f"{vo.vo_id}/inv-{len(self.invitations) + 1}"
        view = tuple(process_view) if process_view is not None else vo.process
        entry.gateway.receive_invitation(ParticipationRequest(invitation_id, vo.vo_id, vo.initiator, view))
        self.invitations[invitation_id] = Invitation(invitation_id, vo.vo_id, provider)
        vo.roster[provider] = RosterEntry(entry.card.role, None, InvitationStatus.INVITED, invitation_id)
        return invitation_id

    def respond_invitation(self, invitation_id: str, answer: Accept | Decline) -> dict[str, RosterEntry]:
        invitation = self.invitations.get(invitation_id)
        if invitation is None:
            raise UnknownInvitation(f"no invitation {invitation_id!r}", invitation_id=invitation_id)
        with self._locked(invitation.vo_id) as vo:
            return self._respond(vo, invitation, answer)

    def _respond(self, vo: VoRecord, invitation: Invitation, answer: Accept | Decline) -> dict[str, RosterEntry]:
        if invitation.invitation_id in self._answered:
            raise AlreadyAnswered(f"invitation {invitation.invitation_id!r} already answered")
        self._require(vo, S.INVITING, S.ADAPTING)
        entry = vo.roster[invitation.provider]
        if isinstance(answer, Accept):
            entry.status = InvitationStatus.ACCEPTED
            entry.profile_ref = answer.profile_ref
        else:
            entry.status = InvitationStatus.DECLINED
        self._answered.add(invitation.invitation_id)
        return vo.roster

    def finalize_federation(self, vo_id: str) -> VoRecord:
        with self._locked(vo_id) as vo:
            if vo.state is S.INVITING:
                for step in vo.process:
                    if not any(vo.roster[p].role is step.role for p in vo.accepted()):
                        raise RoleUncovered(step.role.value)
                members = vo.accepted()
                collab = {p: vo.collaboration_ids.get(p) or self._mint_collaboration_id(vo.vo_id, p) for p in members}
                cards = self._cards(members)
                for partner in members:
                    self._send_creation_order(vo, partner, collab[partner], cards)
                # every member acknowledged: commit
                vo.collaboration_ids.update(collab)
                vo.business_cards = list(cards)
                vo.trust_edges = _complete_edges(cards)
                self._transition(vo, S.FEDERATED)
            elif vo.state is not S.FEDERATED:
                raise InvalidState(f"cannot finalize a VO in state {vo.state.value}", state=vo.state.value)
            return self._virtualize(vo)

    def _virtualize(self, vo: VoRecord) -> VoRecord:
        failures: dict[str, VasError] = {}
        for partner in vo.accepted():
            ref = vo.roster[partner].profile_ref
            if partner in vo.realized or ref is None:
                continue
            try:
                self.partners[partner].gateway.realize_profile(vo.vo_id, vo.collaboration_ids[partner], ref)
            except VasError as exc:
                failures[partner] = exc
                vo.flagged[partner] = exc.code
                continue
            vo.realized.add(partner)
            vo.flagged.pop(partner, None)
        if failures:
            first = sorted(failures)[0]
            raise PlanningFailed(first, failures[first], failures)
        self._transition(vo, S.VIRTUALIZED)
        self._transition(vo, S.OPERATIONAL)
        return vo

    # adaptation

    def adapt_vo(self, vo_id: str, initiator: str, change: Change) -> VoRecord:
        with self._locked(vo_id) as vo:
            self._require(vo, S.OPERATIONAL)
            affected = {NewProfile: "partner", MemberJoin: "provider", MemberLeave: "partner"}[type(change)]
            subject = getattr(change, affected)
            if initiator not in (vo.initiator, subject):
                raise NotAuthorized(f"{initiator!r} may not change {subject!r} in {vo_id!r}", initiator=initiator)
            self._transition(vo, S.ADAPTING)
            try:
                if isinstance(change, NewProfile):
                    self._new_profile(vo, change)
                elif isinstance(change, MemberJoin):
                    self._member_join(vo, change)
                else:
                    self._member_leave(vo, change)
            finally:
                self._transition(vo, S.OPERATIONAL)
            return vo

    def _new_profile(self, vo: VoRecord, change: NewProfile) -> None:
        if change.partner not in vo.accepted():
            raise UnknownPartner(change.partner)
        self.partners[change.partner].gateway.refine_profile(vo.collaboration_ids[change.partner], change.request)

    def _member_join(self, vo: VoRecord, change: MemberJoin) -> None:
        provider = change.provider
        invitation_id = self._invite(vo, provider, None)
        self._respond(vo, self.invitations[invitation_id], Accept(change.profile_ref))
        members = vo.accepted()
        collab = self._mint_collaboration_id(vo.vo_id, provider)
        cards = self._cards(members)
        try:
            self._send_creation_order(vo, provider, collab, cards)
            for partner in members:
                if partner != provider:
                    self._send_creation_order(vo, partner, vo.collaboration_ids[partner], cards)
            vo.collaboration_ids[provider] = collab
            self.partners[provider].gateway.realize_profile(vo.vo_id, collab, change.profile_ref)
        except VasError:
            vo.collaboration_ids.pop(provider, None)
            del vo.roster[provider]
            card = self.partners[provider].card
            for partner in members:
                if partner != provider:
                    self._quietly(self.partners[partner].gateway.revoke_member, vo.vo_id, card)
            raise
        vo.realized.add(provider)
        vo.business_cards = list(cards)
        vo.trust_edges = _complete_edges(cards)

    def _member_leave(self, vo: VoRecord, change: MemberLeave) -> None:
        leaver = change.partner
        if leaver not in vo.accepted():
            raise UnknownPartner(leaver)
        if leaver == vo.initiator:
            raise InvalidState("the initiator cannot leave its own VO; dissolve it instead")
        gateway = self.partners[leaver].gateway
        gateway.retire_profile(vo.collaboration_ids[leaver])
        card = self.partners[leaver].card
        for partner in vo.accepted():
            if partner == leaver:
                continue
            self.partners[partner].gateway.revoke_member(vo.vo_id, card)
            gateway.revoke_member(vo.vo_id, self.partners[partner].card)
        del vo.roster[leaver]
        del vo.collaboration_ids[leaver]
        vo.realized.discard(leaver)
        vo.business_cards = [c for c in vo.business_cards if c.partner_id != leaver]
        vo.trust_edges = {e for e in vo.trust_edges if card.fip_ref not in e}

    def dissolve_vo(self, vo_id: str, initiator: str) -> VoRecord:
        with self._locked(vo_id) as vo:
            if initiator != vo.initiator:
                raise NotAuthorized(f"only {vo.initiator!r} may dissolve {vo_id!r}", initiator=initiator)
            if S.DISSOLVED not in TRANSITIONS[vo.state]:
                raise InvalidState(f"cannot dissolve a VO in state {vo.state.value}", state=vo.state.value)
            members = [p for p in vo.accepted() if p in vo.collaboration_ids]
            for partner in members:
                gateway = self.partners[partner].gateway
                self._quietly(gateway.retire_profile, vo.collaboration_ids[partner])
                for other in members:
                    if other != partner:
                        self._quietly(gateway.revoke_member, vo_id, self.partners[other].card)
            vo.trust_edges = set()
            self._transition(vo, S.DISSOLVED)
            return vo

    def status(self, vo_id: str) -> VoRecord:
        vo = self.vos.get(vo_id)
        if vo is None:
            raise UnknownVo(f"no VO {vo_id!r}", vo_id=vo_id)
        return vo

    # helpers

    def _partner(self, partner_id: str) -> PartnerEntry:
        entry = self.partners.get(partner_id)
        if entry is None:
            raise UnknownPartner(partner_id)
        return entry

    def _cards(self, members: Iterable[str]) -> tuple[BusinessCard, ...]:
        return tuple(self.partners[p].card for p in sorted(members))

    def _send_creation_order(self, vo: VoRecord, partner: str, collaboration_id: str, cards: tuple[BusinessCard, ...]) -> None:
        role = vo.roster[partner].role
        policy = {
            "vo": vo.vo_id,
            "roles": sorted({s.role.value for s in vo.process} | {c.role.value for c in cards}),
            "functions": sorted(s.function for s in vo.process if s.role is role),
        }
        order = CreationOrder(vo.vo_id, partner, collaboration_id, cards, policy)
        self.partners[partner].gateway.apply_creation_order(order)

    def _mint_collaboration_id(self, vo_id: str, partner: str) -> str:
        while True:
            seed = f"{self.host_id}/{vo_id}/{partner}/{next(self._mint)}"
            cid = "collab-" + hashlib.sha256(seed.encode("utf-8")).hexdigest()[:16]
            if cid not in self._issued:
                self._issued.add(cid)
                return cid

    def _locked(self, vo_id: str) -> _VoLock:
        vo = self.status(vo_id)
        return _VoLock(self._locks[vo_id], vo)

    @staticmethod
    def _require(vo: VoRecord, *allowed: VoState) -> None:
        if vo.state not in allowed:
            raise InvalidState(
                f"{vo.vo_id!r} is {vo.state.value}; needs {' or '.join(s.value for s in allowed)}",
                state=vo.state.value,
            )

    @staticmethod
    def _transition(vo: VoRecord, target: VoState) -> None:
        if target not in TRANSITIONS[vo.state]:
            raise InvalidState(f"{vo.state.value} -> {target.value} is not a VO transition", state=vo.state.value)
        vo.history.append((vo.state.value, target.value))
        vo.state = target

    @staticmethod
    def _quietly(fn: Any, *args: Any) -> None:
        try:
            fn(*args)
        except VasError:
            pass


class _VoLock:
    def __init__(self, lock: threading.RLock, vo: VoRecord) -> None:
        self._lock = lock
        self._vo = vo

    def __enter__(self) -> VoRecord:
        self._lock.acquire()
        return self._vo

    def __exit__(self, *exc: object) -> None:
        self._lock.release()


def _complete_edges(cards: Iterable[BusinessCard]) -> set[frozenset[str]]:
    fips = sorted({c.fip_ref for c in cards})
    return {frozenset(pair) for pair in itertools.combinations(fips, 2)}
