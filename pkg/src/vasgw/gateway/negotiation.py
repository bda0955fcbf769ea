"""Bounded negotiation of VAS terms between a requester and a resource owner.

Both parties describe their position as a :class:`ProfileRequest`: the
requester's constraints are what it needs, the owner's are what it can
guarantee.  The positions are compatible when, for every kind the
requester wants, the owner's guarantees satisfy the requester's needs.

Each party keeps its own copy of the session.  An offer is appended to the
transcript once on each side; ``round`` counts the offers exchanged.  A
receiver that finds the positions compatible concludes with the agreed
offer (requester's terms, semantics narrowed to what both accept).  If not,
it concedes its lowest-priority incompatible QoS constraint (last declared
first) and counters.  Semantics and placement are never conceded.  Once
``max_rounds`` offers have been exchanged without agreement the session is
rejected.
"""

from __future__ import annotations

import itertools
from collections.abc import Callable
from dataclasses import dataclass, field, replace
from typing import Union

from vasgw.errors import ProtocolViolation, SessionClosed
from vasgw.model import Constraint, ConstraintKind, ProfileRequest, VasKind, WantedService, constraint_satisfies

DEFAULT_MAX_ROUNDS = 4
REQUESTER = "requester"
OWNER = "owner"
QOS = (ConstraintKind.MAX_LATENCY, ConstraintKind.MIN_THROUGHPUT)


@dataclass(frozen=True)
class Negotiating:
    pass


@dataclass(frozen=True)
class Agreed:
    offer: ProfileRequest


@dataclass(frozen=True)
class Rejected:
    reason: str


Status = Union[Negotiating, Agreed, Rejected]


@dataclass
class NegotiationSession:
    session_id: str
    requester: str
    owner: str
    local: str
    envelope: ProfileRequest
    max_rounds: int = DEFAULT_MAX_ROUNDS
    round: int = 0
    transcript: list[tuple[str, ProfileRequest]] = field(default_factory=list)
    status: Status = field(default_factory=Negotiating)
    awaiting: str = ""

    def __post_init__(self) -> None:
        if self.max_rounds < 1:
            raise ValueError("max-rounds must be positive")
        if self.local not in (self.requester, self.owner) or self.requester == self.owner:
            raise ValueError("local party must be exactly one of requester and owner")
        if not self.awaiting:
            self.awaiting = self.requester

    @property
    def counterparty(self) -> str:
        return self.owner if self.local == self.requester else self.requester

    @property
    def is_open(self) -> bool:
        return isinstance(self.status, Negotiating)

    def offers(self) -> list[tuple[str, ProfileRequest]]:
        if isinstance(self.status, Agreed):
            return self.transcript[:-1]
        return list(self.transcript)

    def summary(self) -> dict[str, object]:
        status = self.status
        doc: dict[str, object] = {
            "session-id": self.session_id,
            "round": self.round,
            "transcript": [{"party": p, "offer": o.to_doc()} for p, o in self.transcript],
        }
        if isinstance(status, Agreed):
            doc["status"] = "Agreed"
            doc["agreed"] = status.offer.to_doc()
        elif isinstance(status, Rejected):
            doc["status"] = "Rejected"
            doc["reason"] = status.reason
        else:
            doc["status"] = "Negotiating"
        return doc


def compatible(requester: ProfileRequest, owner: ProfileRequest) -> bool:
    return all(constraint_satisfies(owner.constraints_for(k), requester.constraints_for(k)) for k in requester.kinds)


def agreement(requester: ProfileRequest, owner: ProfileRequest) -> ProfileRequest:
    """The requester's terms with every semantics set narrowed to what the owner also accepts."""
    wanted = []
    for w in requester.wanted:
        offered_tags: set[str] = set()
        for c in owner.constraints_for(w.kind):
            if c.kind is ConstraintKind.SEMANTICS:
                offered_tags |= c.value  # type: ignore[arg-type]
        constraints = tuple(
            Constraint(c.kind, frozenset(c.value & offered_tags)) if c.kind is ConstraintKind.SEMANTICS else c  # type: ignore[operator]
            for c in w.constraints
        )
        wanted.append(WantedService(w.kind, constraints))
    return replace(requester, wanted=tuple(wanted))


def _failing(requester: ProfileRequest, owner: ProfileRequest) -> list[tuple[VasKind, Constraint]]:
    out = []
    for k in requester.kinds:
        offered = owner.constraints_for(k)
        for c in requester.constraints_for(k):
            if not constraint_satisfies(offered, [c]):
                out.append((k, c))
    return out


def _value_of(constraints: tuple[Constraint, ...], kind: ConstraintKind) -> int | None:
    values = [c.value for c in constraints if c.kind is kind]
    if not values:
        return None
    # the guarantee a list of bounds actually gives
    return min(values) if kind is ConstraintKind.MAX_LATENCY else max(values)  # type: ignore[type-var,return-value]


def _rewrite(request: ProfileRequest, kind: VasKind, change: Callable[[tuple[Constraint, ...]], tuple[Constraint, ...]]) -> ProfileRequest:
    wanted = list(request.wanted)
    for i, w in enumerate(wanted):
        if w.kind is kind:
            wanted[i] = WantedService(kind, change(w.constraints))
            break
    else:
        wanted.append(WantedService(kind, change(())))
    return replace(request, wanted=tuple(wanted))


def concede_requester(requester: ProfileRequest, owner: ProfileRequest) -> ProfileRequest | None:
    """Relax the requester's last-declared unmet QoS need to what the owner offers (or drop it)."""
    failing = [(k, c) for k, c in _failing(requester, owner) if c.kind in QOS]
    if not failing:
        return None
    order = [(w.kind, c) for w in requester.wanted for c in w.constraints]
    kind, target = max(failing, key=order.index)
    offered = _value_of(owner.constraints_for(kind), target.kind)

    def change(cs: tuple[Constraint, ...]) -> tuple[Constraint, ...]:
        i = cs.index(target)
        if offered is None:
            return cs[:i] + cs[i + 1:]
        return cs[:i] + (Constraint(target.kind, offered),) + cs[i + 1:]

    return _rewrite(requester, kind, change)


def concede_owner(requester: ProfileRequest, owner: ProfileRequest) -> ProfileRequest | None:
    """Commit the owner to the requester's bound for its last-declared unmet QoS guarantee.

    A guarantee the owner never declared ranks after every declared one, so
    it is conceded first.
    """
    failing = [(k, c) for k, c in _failing(requester, owner) if c.kind in QOS]
    if not failing:
        return None
    order = [(w.kind, c.kind) for w in owner.wanted for c in w.constraints]

    def rank(item: tuple[VasKind, Constraint]) -> tuple[int, int]:
        key = (item[0], item[1].kind)
        if key in order:
            return (0, len(order) - 1 - order[::-1].index(key))
        return (1, failing.index(item))

    kind, need = max(failing, key=rank)

    def change(cs: tuple[Constraint, ...]) -> tuple[Constraint, ...]:
        positions = [i for i, c in enumerate(cs) if c.kind is need.kind]
        if not positions:
            return cs + (need,)
        # one guarantee replaces all declared bounds of that type, at the first one's position
        first = positions[0]
        rest = tuple(c for i, c in enumerate(cs) if i not in positions[1:])
        return rest[:first] + (need,) + rest[first + 1:]

    return _rewrite(owner, kind, change)


def open_session(
    session_id: str, requester: str, owner: str, local: str, envelope: ProfileRequest, max_rounds: int = DEFAULT_MAX_ROUNDS
) -> NegotiationSession:
    return NegotiationSession(session_id, requester, owner, local, envelope, max_rounds)


def opening_offer(session: NegotiationSession) -> ProfileRequest:
    """The requester's first move: its own envelope."""
    if not session.is_open:
        raise SessionClosed(f"session {session.session_id!r} is closed")
    if session.local != session.requester or session.round != 0:
        raise ProtocolViolation("only the requester opens, and only once")
    return _send(session, session.envelope)


def _send(session: NegotiationSession, offer: ProfileRequest) -> ProfileRequest:
    session.transcript.append((session.local, offer))
    session.round += 1
    session.awaiting = session.counterparty
    return offer


def negotiate(session: NegotiationSession, incoming: ProfileRequest) -> NegotiationSession:
    """Receive the counterparty's offer and decide: agree, counter, or reject.

    After the call, a still-open session has the counter-offer as the last
    transcript entry; an agreed one has the agreed offer there.
    """
    if not session.is_open:
        raise SessionClosed(f"session {session.session_id!r} is closed")
    if session.awaiting != session.counterparty:
        raise ProtocolViolation(f"{session.counterparty!r} sent out of turn in {session.session_id!r}")
    if session.round >= session.max_rounds:
        raise SessionClosed(f"session {session.session_id!r} has used all its rounds")
    session.transcript.append((session.counterparty, incoming))
    session.round += 1
    local_is_requester = session.local == session.requester
    req, own = (session.envelope, incoming) if local_is_requester else (incoming, session.envelope)
    if compatible(req, own):
        agreed = agreement(req, own)
        session.transcript.append((session.local, agreed))
        session.status = Agreed(agreed)
        return session
    if session.round >= session.max_rounds:
        session.status = Rejected("no-convergence")
        return session
    conceded = concede_requester(req, own) if local_is_requester else concede_owner(req, own)
    if conceded is not None:
        session.envelope = conceded
    _send(session, session.envelope)
    return session


def conclude(session: NegotiationSession, status: Status) -> NegotiationSession:
    """Apply the counterparty's final verdict to the local copy."""
    if not session.is_open:
        raise SessionClosed(f"session {session.session_id!r} is closed")
    if session.awaiting != session.counterparty:
        raise ProtocolViolation("a verdict arrived out of turn")
    if isinstance(status, Agreed):
        session.transcript.append((session.counterparty, status.offer))
    session.status = status
    return session


def negotiate_locally(
    requester: ProfileRequest, owner: ProfileRequest, max_rounds: int = DEFAULT_MAX_ROUNDS, session_id: str | None = None
) -> tuple[NegotiationSession, NegotiationSession]:
    """Run a whole session between two in-memory parties; returns (requester copy, owner copy)."""
    sid = session_id or f"neg-{next(_ids)}"
    mine = open_session(sid, REQUESTER, OWNER, REQUESTER, requester, max_rounds)
    theirs = open_session(sid, REQUESTER, OWNER, OWNER, owner, max_rounds)
    offer = opening_offer(mine)
    sides = [theirs, mine]
    turn = 0
    while True:
        receiver, sender = sides[turn % 2], sides[(turn + 1) % 2]
        negotiate(receiver, offer)
        if not receiver.is_open:
            conclude(sender, receiver.status)
            return mine, theirs
        offer = receiver.transcript[-1][1]
        turn += 1


_ids = itertools.count(1)
