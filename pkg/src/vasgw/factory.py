"""Secured-profile factory: the enactment engine and the message broker.

:meth:`ProfileFactory.enact` turns a CCM into a handler chain and runs its
setup plan according to the profile's lifecycle mode.  :meth:`ProfileFactory.intercept`
is the broker: it finds the profile for an envelope and runs the chain,
writing one audit entry per handler invocation.

Messages for one collaboration are processed FIFO under a ticket lock; a
profile swap takes the same lock, so a message sees either the old chain or
the new one and never a mix.
"""

from __future__ import annotations

import hashlib
import itertools
import threading
from collections import Counter
from collections.abc import Iterator
from dataclasses import dataclass, replace
from datetime import datetime
from pathlib import Path
from typing import Any, Union

from vasgw.clock import SystemClock, iso
from vasgw.errors import NoProfileError, ProfileConflict, SetupFailed
from vasgw.handlers import Continue, Handler, HandlerContext
from vasgw.model import (
    CCM,
    Lifecycle,
    LifecycleMode,
    MessageEnvelope,
    Placement,
    ProfileState,
    SecuredProfile,
    StepKind,
    canonical_json,
)
from vasgw.trust import PeerDirectory, TrustStore


@dataclass(frozen=True)
class Forwarded:
    envelope: MessageEnvelope
    message: int

    def to_doc(self) -> dict[str, Any]:
        return {"outcome": "Forwarded", "message": self.message, "envelope": self.envelope.to_doc()}


@dataclass(frozen=True)
class Rejected:
    reason: str
    slot_id: str

    def to_doc(self) -> dict[str, Any]:
        return {"outcome": "Rejected", "reason": self.reason, "slot-id": self.slot_id}


@dataclass(frozen=True)
class NoProfile:
    collaboration_id: str

    def to_doc(self) -> dict[str, Any]:
        return {"outcome": "NoProfile", "collaboration-id": self.collaboration_id}


@dataclass(frozen=True)
class Unavailable:
    collaboration_id: str

    def to_doc(self) -> dict[str, Any]:
        return {"outcome": "Unavailable", "collaboration-id": self.collaboration_id}


InterceptResult = Union[Forwarded, Rejected, NoProfile, Unavailable]


# -- audit log ---------------------------------------------------------------


@dataclass(frozen=True)
class AuditEntry:
    sequence: int
    collaboration_id: str
    slot_id: str
    kind: str
    verdict: str
    timestamp: str
    message: int = 0
    reason: str = ""

    def to_doc(self) -> dict[str, Any]:
        doc = {
            "sequence": self.sequence,
            "collaboration-id": self.collaboration_id,
            "slot-id": self.slot_id,
            "kind": self.kind,
            "verdict": self.verdict,
            "timestamp": self.timestamp,
            "message": self.message,
        }
        if self.reason:
            doc["reason"] = self.reason
        return doc

    @classmethod
    def from_doc(cls, doc: dict[str, Any]) -> AuditEntry:
        return cls(
            sequence=doc["sequence"],
            collaboration_id=doc["collaboration-id"],
            slot_id=doc["slot-id"],
            kind=doc["kind"],
            verdict=doc["verdict"],
            timestamp=doc["timestamp"],
            message=doc.get("message", 0),
            reason=doc.get("reason", ""),
        )


class AuditLog:
    """Totally ordered per gateway; optionally written through to a file."""

    def __init__(self, path: str | Path | None = None, start: int = 0) -> None:
        self.path = Path(path) if path is not None else None
        self._entries: list[AuditEntry] = []
        self._lock = threading.Lock()
        self._seq = start

    def append(self, collaboration_id: str, slot_id: str, kind: str, verdict: str, timestamp: str, message: int = 0, reason: str = "") -> AuditEntry:
        with self._lock:
            self._seq += 1
            entry = AuditEntry(self._seq, collaboration_id, slot_id, kind, verdict, timestamp, message, reason)
            self._entries.append(entry)
            if self.path is not None:
                with self.path.open("a", encoding="utf-8") as fh:
                    fh.write(canonical_json(entry.to_doc()) + "\n")
            return entry

    def entries(self, collaboration_id: str | None = None) -> list[AuditEntry]:
        with self._lock:
            items = list(self._entries)
        if collaboration_id is None:
            return items
        return [e for e in items if e.collaboration_id == collaboration_id]

    def lines(self, collaboration_id: str | None = None) -> list[str]:
        return [canonical_json(e.to_doc()) for e in self.entries(collaboration_id)]

    def digest(self) -> str:
        return hashlib.sha256("\n".join(self.lines()).encode("utf-8")).hexdigest()

    def traces(self, collaboration_id: str | None = None) -> dict[int, list[AuditEntry]]:
        """Handler entries grouped per message, in log order."""
        out: dict[int, list[AuditEntry]] = {}
        for e in self.entries(collaboration_id):
            if e.message:
                out.setdefault(e.message, []).append(e)
        return out


# -- FIFO lock ---------------------------------------------------------------


class FifoLock:
    """Ticket lock: waiters are admitted strictly in arrival order."""

    def __init__(self) -> None:
        self._cond = threading.Condition()
        self._next = 0
        self._serving = 0

    def __enter__(self) -> FifoLock:
        with self._cond:
            ticket = self._next
            self._next += 1
            while self._serving != ticket:
                self._cond.wait()
        return self

    def __exit__(self, *exc: object) -> None:
        with self._cond:
            self._serving += 1
            self._cond.notify_all()


# -- factory -----------------------------------------------------------------


Key = tuple[str, Placement]


class ProfileFactory:
    def __init__(
        self,
        gateway_id: str = "gateway",
        *,
        clock: Any = None,
        trust: TrustStore | None = None,
        peers: PeerDirectory | None = None,
        audit: AuditLog | None = None,
    ) -> None:
        self.gateway_id = gateway_id
        self.clock = clock or SystemClock()
        self.trust = trust or TrustStore()
        self.peers = peers or PeerDirectory()
        self.audit = audit or AuditLog()
        self.context = HandlerContext(trust=self.trust, clock=self.clock)
        self._profiles: dict[Key, SecuredProfile] = {}
        self._locks: dict[Key, FifoLock] = {}
        self._table_lock = threading.Lock()
        self._message_ids = itertools.count(1)
        self.retired: list[SecuredProfile] = []
        self.transitions: list[tuple[str, str, str, str]] = []
        self.setup_runs: Counter[Key] = Counter()
        self.step_runs: Counter[tuple[str, int, str]] = Counter()

    # lookups

    def _lock_for(self, key: Key) -> FifoLock:
        with self._table_lock:
            return self._locks.setdefault(key, FifoLock())

    def _key_for(self, collaboration_id: str, direction: Placement) -> Key | None:
        with self._table_lock:
            for key in ((collaboration_id, direction), (collaboration_id, Placement.BOTH)):
                if key in self._profiles:
                    return key
        return None

    def profile(self, collaboration_id: str, direction: Placement = Placement.BOTH) -> SecuredProfile | None:
        key = self._key_for(collaboration_id, direction)
        if key is None:
            with self._table_lock:
                matches = [p for (cid, _), p in sorted(self._profiles.items()) if cid == collaboration_id]
            return matches[0] if matches else None
        return self._profiles.get(key)

    def profiles(self) -> list[SecuredProfile]:
        with self._table_lock:
            return [self._profiles[k] for k in sorted(self._profiles)]

    def push_policy(self, collaboration_id: str, policy: dict[str, Any]) -> None:
        self.context.policies[collaboration_id] = dict(policy)

    # enactment

    def enact(self, ccm: CCM, collaboration_id: str, lifecycle: Lifecycle = Lifecycle.eager()) -> SecuredProfile:
        key = (collaboration_id, ccm.direction)
        with self._lock_for(key):
            existing = self._profiles.get(key)
            if existing is not None:
                if existing.ccm.ccm_id == ccm.ccm_id:
                    return existing
                raise ProfileConflict(collaboration_id)
            chain = self._build_chain(ccm, collaboration_id)
            profile = SecuredProfile(collaboration_id, ccm, lifecycle, ProfileState.VALIDATED, chain)
            self._note(profile, ProfileState.VALIDATED, ProfileState.VALIDATED)
            if lifecycle.mode is LifecycleMode.ON_DEMAND:
                profile = self._move(profile, ProfileState.LATENT)
            else:
                self._run_setup(key, ccm, chain)
                profile = self._move(profile, ProfileState.ENACTED)
                profile = self._move(profile, self._evaluate(profile, self.clock.now()))
            with self._table_lock:
                self._profiles[key] = profile
            return profile

    def _build_chain(self, ccm: CCM, collaboration_id: str) -> tuple[Handler, ...]:
        return tuple(
            Handler(b.slot_id, b.kind, b.instance_id, collaboration_id, self.context) for b in ccm.instances
        )

    def _run_setup(self, key: Key, ccm: CCM, chain: tuple[Handler, ...]) -> None:
        handlers = {h.slot_id: h for h in chain}
        for index, action in enumerate(ccm.setup_plan):
            step = action.step
            if step.kind is StepKind.TRUST_BOOTSTRAP:
                peer = str(step.params.get("peer", ""))
                public_key = self.peers.resolve(peer)
                if public_key is None:
                    raise SetupFailed(action.label, f"unknown peer {peer!r}")
                self.trust.trust(peer, public_key)
            elif step.kind is StepKind.CONFIG_PUSH:
                handler = handlers.get(action.slot_id)
                if handler is None:
                    raise SetupFailed(action.label, f"no handler for slot {action.slot_id!r}")
                handler.configure(step.params.get("document", {}))
            self.step_runs[(key[0], index, action.label)] += 1
        self.setup_runs[key] += 1

    # availability

    def _evaluate(self, profile: SecuredProfile, now: datetime) -> ProfileState:
        if profile.state is ProfileState.RETIRED:
            return ProfileState.RETIRED
        mode = profile.lifecycle.mode
        if mode is LifecycleMode.EAGER:
            return ProfileState.ACTIVE
        if mode is LifecycleMode.SCHEDULED:
            inside = any(w.contains(now) for w in profile.lifecycle.windows)
            return ProfileState.ACTIVE if inside else ProfileState.DORMANT
        return ProfileState.LATENT if profile.state in (ProfileState.LATENT, ProfileState.VALIDATED) else ProfileState.ACTIVE

    def set_availability(self, profile: SecuredProfile, now: datetime | None = None) -> ProfileState:
        key = self._key_for(profile.collaboration_id, profile.direction)
        if key is None:
            raise NoProfileError(profile.collaboration_id)
        with self._lock_for(key):
            return self._refresh(key, now or self.clock.now()).state

    def _refresh(self, key: Key, now: datetime) -> SecuredProfile:
        current = self._profiles[key]
        target = self._evaluate(current, now)
        if target is not current.state:
            current = self._move(current, target)
            with self._table_lock:
                self._profiles[key] = current
        return current

    def _move(self, profile: SecuredProfile, state: ProfileState) -> SecuredProfile:
        self._note(profile, profile.state, state)
        return replace(profile, state=state)

    def _note(self, profile: SecuredProfile, old: ProfileState, new: ProfileState) -> None:
        self.transitions.append((profile.collaboration_id, profile.direction.value, old.value, new.value))

    # broker

    def intercept(self, envelope: MessageEnvelope) -> InterceptResult:
        collab = envelope.collaboration_id
        key = self._key_for(collab, envelope.direction)
        if key is None:
            return NoProfile(collab)
        with self._lock_for(key):
            if key not in self._profiles:
                return NoProfile(collab)
            profile = self._refresh(key, self.clock.now())
            if profile.state is ProfileState.DORMANT:
                return Unavailable(collab)
            if profile.state is ProfileState.LATENT:
                try:
                    self._run_setup(key, profile.ccm, profile.chain)
                except SetupFailed as exc:
                    return Rejected(exc.message, exc.step.split("/")[0])
                profile = self._move(profile, ProfileState.ACTIVE)
                with self._table_lock:
                    self._profiles[key] = profile
            message = next(self._message_ids)
            current = envelope
            for handler in profile.chain:
                verdict = handler(current)
                stamp = iso(self.clock.now())
                if not isinstance(verdict, Continue):
                    self.audit.append(collab, handler.slot_id, handler.kind.value, "rejected", stamp, message, verdict.reason)
                    return Rejected(verdict.reason, handler.slot_id)
                self.audit.append(collab, handler.slot_id, handler.kind.value, "continued", stamp, message)
                current = verdict.envelope
            return Forwarded(current, message)

    # adaptation

    def swap_profile(self, collaboration_id: str, new_ccm: CCM) -> SecuredProfile:
        key = (collaboration_id, new_ccm.direction)
        with self._table_lock:
            old = self._profiles.get(key)
        if old is None:
            raise NoProfileError(collaboration_id)
        if old.ccm.ccm_id == new_ccm.ccm_id:
            return old
        # set up the replacement before taking the lock; failure leaves the old chain serving
        chain = self._build_chain(new_ccm, collaboration_id)
        self._run_setup(key, new_ccm, chain)
        with self._lock_for(key):
            old = self._profiles.get(key)
            if old is None:
                raise NoProfileError(collaboration_id)
            fresh = SecuredProfile(collaboration_id, new_ccm, old.lifecycle, ProfileState.ENACTED, chain)
            self._note(fresh, ProfileState.VALIDATED, ProfileState.ENACTED)
            state = self._evaluate(fresh, self.clock.now())
            if state is ProfileState.LATENT:
                state = ProfileState.ACTIVE
            fresh = self._move(fresh, state)
            with self._table_lock:
                self._profiles[key] = fresh
            self.retired.append(self._move(old, ProfileState.RETIRED))
            self.audit.append(collaboration_id, "*", "swap", f"swap:{old.ccm.ccm_id}->{new_ccm.ccm_id}", iso(self.clock.now()))
            return fresh

    def retire(self, collaboration_id: str) -> list[SecuredProfile]:
        with self._table_lock:
            keys = [k for k in self._profiles if k[0] == collaboration_id]
        out = []
        for key in keys:
            with self._lock_for(key):
                profile = self._profiles.pop(key, None)
                if profile is None:
                    continue
                gone = self._move(profile, ProfileState.RETIRED)
                self.retired.append(gone)
                out.append(gone)
                self.audit.append(collaboration_id, "*", "retire", "retired", iso(self.clock.now()))
        return out

    def chain_counters(self, collaboration_id: str) -> Iterator[tuple[str, int, int]]:
        profile = self.profile(collaboration_id)
        if profile is not None:
            for h in profile.chain:
                yield h.slot_id, h.invoked, h.rejected
