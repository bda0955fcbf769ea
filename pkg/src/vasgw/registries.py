"""Capability, architecture-description and client registries.

All three live behind one :class:`Registry` whose writes go through a single
append-only journal.  The live state is an immutable :class:`RegistrySnapshot`
that is swapped on every write, so taking a snapshot is just reading a
reference and readers never wait on writers.
"""

from __future__ import annotations

import json
import threading
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from types import MappingProxyType
from typing import Any, Union

from vasgw.clock import SystemClock, iso
from vasgw.errors import DuplicateInstance, InvalidDescriptor, JournalCorrupt, VasError
from vasgw.model import (
    CompositionModel,
    Constraint,
    ProfileRequest,
    SetupStep,
    StepKind,
    VasKind,
    as_fraction,
    canonical_json,
    constraint_satisfies,
    fraction_text,
    model_from_doc,
    validate_profile_request,
)


@dataclass(frozen=True)
class CapabilityDescriptor:
    instance_id: str
    class_id: str
    kind: VasKind
    endpoint: str
    offered: tuple[Constraint, ...]
    latency_ms: Fraction
    failure_rate: Fraction
    setup_steps: tuple[SetupStep, ...] = ()

    def __post_init__(self) -> None:
        for name in ("instance_id", "class_id", "endpoint"):
            if not isinstance(getattr(self, name), str) or not getattr(self, name):
                raise InvalidDescriptor(f"{name.replace('_', '-')} must be a non-empty string")
        if not isinstance(self.kind, VasKind):
            raise InvalidDescriptor(f"kind {self.kind!r} is not a VAS kind")
        if not self.latency_ms > 0:
            raise InvalidDescriptor(f"latency-ms must be positive, got {self.latency_ms}")
        if not 0 <= self.failure_rate <= 1:
            raise InvalidDescriptor(f"failure-rate must lie in [0,1], got {self.failure_rate}")
        for step in self.setup_steps:
            if step.kind is StepKind.TRUST_BOOTSTRAP and not step.params.get("peer"):
                raise InvalidDescriptor("trust-bootstrap step needs a peer")
            if step.kind is StepKind.CONFIG_PUSH and not isinstance(step.params.get("document"), Mapping):
                raise InvalidDescriptor("config-push step needs a document")

    @property
    def class_signature(self) -> tuple[VasKind, frozenset[Constraint]]:
        return self.kind, frozenset(self.offered)

    def to_doc(self) -> dict[str, Any]:
        return {
            "instance-id": self.instance_id,
            "class-id": self.class_id,
            "kind": self.kind.value,
            "endpoint": self.endpoint,
            "offered": [c.to_doc() for c in sorted(self.offered, key=Constraint.sort_key)],
            "measured": {
                "latency-ms": fraction_text(self.latency_ms),
                "failure-rate": fraction_text(self.failure_rate),
            },
            "setup-steps": [s.to_doc() for s in self.setup_steps],
        }

    @classmethod
    def from_doc(cls, doc: Mapping[str, Any]) -> CapabilityDescriptor:
        try:
            measured = doc.get("measured", {})
            return cls(
                instance_id=doc["instance-id"],
                class_id=doc["class-id"],
                kind=VasKind.parse(doc["kind"]),
                endpoint=doc["endpoint"],
                offered=tuple(sorted((Constraint.from_doc(c) for c in doc.get("offered", [])), key=Constraint.sort_key)),
                latency_ms=as_fraction(measured["latency-ms"]),
                failure_rate=as_fraction(measured["failure-rate"]),
                setup_steps=tuple(SetupStep.from_doc(s) for s in doc.get("setup-steps", [])),
            )
        except InvalidDescriptor:
            raise
        except (KeyError, TypeError, ValueError, ZeroDivisionError, VasError) as exc:
            raise InvalidDescriptor(f"unreadable descriptor: {exc}") from None


@dataclass(frozen=True)
class ArchitectureDescription:
    id: str
    category: str
    mandatory: frozenset[VasKind]
    optional: frozenset[VasKind] = frozenset()
    order: frozenset[tuple[VasKind, VasKind]] = frozenset()
    exclusions: frozenset[frozenset[VasKind]] = frozenset()
    realizes: VasKind | None = None

    def __post_init__(self) -> None:
        if not self.id or not self.category:
            raise InvalidDescriptor("architecture needs an id and a category")
        members = self.members
        if self.mandatory & self.optional:
            raise InvalidDescriptor(f"{self.id}: kinds both mandatory and optional")
        for a, b in self.order:
            if a not in members or b not in members:
                raise InvalidDescriptor(f"{self.id}: order pair ({a.value}, {b.value}) names a non-member")
            if a is b:
                raise InvalidDescriptor(f"{self.id}: reflexive order pair on {a.value}")
        if _has_cycle(self.order):
            raise InvalidDescriptor(f"{self.id}: order relation is cyclic")
        for pair in self.exclusions:
            if len(pair) != 2:
                raise InvalidDescriptor(f"{self.id}: exclusions must be pairs")
            if pair <= self.mandatory:
                raise InvalidDescriptor(f"{self.id}: exclusion pairs two mandatory kinds")
        if self.realizes is not None and self.realizes in members:
            raise InvalidDescriptor(f"{self.id}: realizes a kind it also contains")

    @property
    def members(self) -> frozenset[VasKind]:
        return self.mandatory | self.optional

    def to_doc(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "category": self.category,
            "mandatory": sorted(k.value for k in self.mandatory),
            "optional": sorted(k.value for k in self.optional),
            "order": sorted([a.value, b.value] for a, b in self.order),
            "exclusions": sorted(sorted(k.value for k in pair) for pair in self.exclusions),
            "realizes": self.realizes.value if self.realizes else None,
        }

    @classmethod
    def from_doc(cls, doc: Mapping[str, Any]) -> ArchitectureDescription:
        try:
            return cls(
                id=doc["id"],
                category=doc["category"],
                mandatory=frozenset(VasKind.parse(k) for k in doc.get("mandatory", [])),
                optional=frozenset(VasKind.parse(k) for k in doc.get("optional", [])),
                order=frozenset((VasKind.parse(a), VasKind.parse(b)) for a, b in doc.get("order", [])),
                exclusions=frozenset(frozenset(VasKind.parse(k) for k in p) for p in doc.get("exclusions", [])),
                realizes=VasKind.parse(doc["realizes"]) if doc.get("realizes") else None,
            )
        except InvalidDescriptor:
            raise
        except (KeyError, TypeError, ValueError, VasError) as exc:
            raise InvalidDescriptor(f"unreadable architecture: {exc}") from None


def _has_cycle(pairs: Iterable[tuple[VasKind, VasKind]]) -> bool:
    succ: dict[VasKind, set[VasKind]] = {}
    for a, b in pairs:
        succ.setdefault(a, set()).add(b)
    state: dict[VasKind, int] = {}

    def visit(node: VasKind) -> bool:
        state[node] = 1
        for nxt in succ.get(node, ()):
            mark = state.get(nxt, 0)
            if mark == 1 or (mark == 0 and visit(nxt)):
                return True
        state[node] = 2
        return False

    return any(state.get(n, 0) == 0 and visit(n) for n in list(succ))


# -- client records ----------------------------------------------------------


@dataclass(frozen=True)
class Usage:
    collaboration_id: str


@dataclass(frozen=True)
class Failure:
    instance_id: str


@dataclass(frozen=True)
class Decision:
    ccm_id: str
    accepted: bool


@dataclass(frozen=True)
class CacheStage:
    stage_key: str
    model: CompositionModel


@dataclass(frozen=True)
class RequestLogged:
    request: ProfileRequest


ClientEvent = Union[Usage, Failure, Decision, CacheStage, RequestLogged]


@dataclass(frozen=True)
class ClientRecord:
    owner_id: str
    requests: tuple[ProfileRequest, ...] = ()
    stage_cache: Mapping[str, CompositionModel] = field(default_factory=dict, hash=False)
    decisions: tuple[tuple[str, bool], ...] = ()
    usage_count: Mapping[str, int] = field(default_factory=dict, hash=False)
    failure_count: Mapping[str, int] = field(default_factory=dict, hash=False)

    @property
    def acceptance_degree(self) -> Fraction:
        if not self.decisions:
            return Fraction(1)
        return Fraction(sum(1 for _, ok in self.decisions if ok), len(self.decisions))

    def failures_of(self, instance_id: str) -> int:
        return self.failure_count.get(instance_id, 0)

    def apply(self, event: ClientEvent) -> ClientRecord:
        if isinstance(event, Usage):
            counts = dict(self.usage_count)
            counts[event.collaboration_id] = counts.get(event.collaboration_id, 0) + 1
            return replace(self, usage_count=MappingProxyType(counts))
        if isinstance(event, Failure):
            counts = dict(self.failure_count)
            counts[event.instance_id] = counts.get(event.instance_id, 0) + 1
            return replace(self, failure_count=MappingProxyType(counts))
        if isinstance(event, Decision):
            return replace(self, decisions=self.decisions + ((event.ccm_id, event.accepted),))
        if isinstance(event, CacheStage):
            cache = dict(self.stage_cache)
            cache[event.stage_key] = event.model
            return replace(self, stage_cache=MappingProxyType(cache))
        if isinstance(event, RequestLogged):
            return replace(self, requests=self.requests + (event.request,))
        raise TypeError(f"unknown client event {event!r}")

    def to_doc(self) -> dict[str, Any]:
        return {
            "owner-id": self.owner_id,
            "requests": [r.to_doc() for r in self.requests],
            "stage-cache": {k: m.to_doc() for k, m in sorted(self.stage_cache.items())},
            "decisions": [{"ccm-id": c, "accepted": a} for c, a in self.decisions],
            "usage-count": dict(sorted(self.usage_count.items())),
            "failure-count": dict(sorted(self.failure_count.items())),
            "acceptance-degree": fraction_text(self.acceptance_degree),
        }


def event_to_doc(event: ClientEvent) -> tuple[str, dict[str, Any]]:
    if isinstance(event, Usage):
        return "usage", {"collaboration-id": event.collaboration_id}
    if isinstance(event, Failure):
        return "failure", {"instance-id": event.instance_id}
    if isinstance(event, Decision):
        return "decision", {"ccm-id": event.ccm_id, "accepted": event.accepted}
    if isinstance(event, CacheStage):
        return "cache-stage", {"stage-key": event.stage_key, "model": event.model.to_doc()}
    if isinstance(event, RequestLogged):
        return "request", {"request": event.request.to_doc()}
    raise TypeError(f"unknown client event {event!r}")


def event_from_doc(name: str, body: Mapping[str, Any]) -> ClientEvent:
    if name == "usage":
        return Usage(body["collaboration-id"])
    if name == "failure":
        return Failure(body["instance-id"])
    if name == "decision":
        return Decision(body["ccm-id"], bool(body["accepted"]))
    if name == "cache-stage":
        return CacheStage(body["stage-key"], model_from_doc(body["model"]))
    if name == "request":
        return RequestLogged(validate_profile_request(body["request"]))
    raise JournalCorrupt(f"unknown client event {name!r}")


# -- snapshots ---------------------------------------------------------------


@dataclass(frozen=True)
class RegistrySnapshot:
    """Point-in-time view of all three registries."""

    capabilities: Mapping[str, CapabilityDescriptor] = field(default_factory=lambda: MappingProxyType({}))
    architectures: Mapping[str, ArchitectureDescription] = field(default_factory=lambda: MappingProxyType({}))
    clients: Mapping[str, ClientRecord] = field(default_factory=lambda: MappingProxyType({}))
    seq: int = 0
    catalog_seq: int = 0

    def descriptors(self) -> list[CapabilityDescriptor]:
        return [self.capabilities[k] for k in sorted(self.capabilities)]

    def architecture_list(self) -> list[ArchitectureDescription]:
        return sorted(self.architectures.values(), key=lambda a: (a.category, a.id))

    def find_capabilities(
        self, kind: VasKind, required: Sequence[Constraint] = (), class_id: str | None = None
    ) -> list[CapabilityDescriptor]:
        return [
            d
            for d in self.descriptors()
            if d.kind is kind
            and (class_id is None or d.class_id == class_id)
            and constraint_satisfies(d.offered, required)
        ]

    def find_architectures(
        self, category: str | None = None, realizes: VasKind | None = None
    ) -> list[ArchitectureDescription]:
        return [
            a
            for a in self.architecture_list()
            if (category is None or a.category == category) and (realizes is None or a.realizes is realizes)
        ]

    def classes(self, kind: VasKind) -> list[tuple[str, tuple[Constraint, ...]]]:
        """(class-id, offered constraints) for every class of ``kind``, class-id ascending."""
        seen: dict[str, tuple[Constraint, ...]] = {}
        for d in self.descriptors():
            if d.kind is kind:
                seen.setdefault(d.class_id, d.offered)
        return sorted(seen.items())

    def client(self, owner_id: str) -> ClientRecord:
        return self.clients.get(owner_id) or ClientRecord(owner_id)

    def to_doc(self) -> dict[str, Any]:
        return {
            "seq": self.seq,
            "catalog-seq": self.catalog_seq,
            "capabilities": [d.to_doc() for d in self.descriptors()],
            "architectures": [a.to_doc() for a in sorted(self.architectures.values(), key=lambda a: a.id)],
            "clients": [self.clients[k].to_doc() for k in sorted(self.clients)],
        }

    def dump(self) -> str:
        return canonical_json(self.to_doc())


def find_capabilities(snapshot: RegistrySnapshot, kind: VasKind, required: Sequence[Constraint]) -> list[CapabilityDescriptor]:
    return snapshot.find_capabilities(kind, required)


def find_architectures(
    snapshot: RegistrySnapshot, category: str | None = None, realizes: VasKind | None = None
) -> list[ArchitectureDescription]:
    return snapshot.find_architectures(category, realizes)


# -- journal -----------------------------------------------------------------


class Journal:
    """Append-only event log, one canonical JSON record per line.

    With a ``path`` every append is also written through to disk.
    """

    def __init__(self, path: str | Path | None = None) -> None:
        self.path = Path(path) if path is not None else None
        self._lines: list[str] = []
        if self.path is not None and self.path.exists():
            self._lines = [ln for ln in self.path.read_text(encoding="utf-8").splitlines() if ln.strip()]

    def append(self, seq: int, timestamp: str, event_type: str, body: Mapping[str, Any]) -> str:
        line = canonical_json({"seq": seq, "timestamp": timestamp, "event-type": event_type, "body": body})
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(line + "\n")
        self._lines.append(line)
        return line

    def lines(self) -> list[str]:
        return list(self._lines)

    def records(self) -> list[dict[str, Any]]:
        out = []
        for n, line in enumerate(self._lines, 1):
            try:
                out.append(json.loads(line))
            except json.JSONDecodeError:
                raise JournalCorrupt(f"journal line {n} is not valid JSON") from None
        return out

    def __len__(self) -> int:
        return len(self._lines)


class Registry:
    def __init__(self, journal: Journal | None = None, clock: Any = None, *, _replaying: bool = False) -> None:
        self.journal = journal if journal is not None else Journal()
        self.clock = clock or SystemClock()
        self._state = RegistrySnapshot()
        self._lock = threading.Lock()
        if not _replaying and len(self.journal):
            for record in self.journal.records():
                self._apply(record)

    # reads

    def snapshot(self) -> RegistrySnapshot:
        return self._state

    def client(self, owner_id: str) -> ClientRecord:
        return self._state.client(owner_id)

    # writes

    def publish_capability(self, descriptor: CapabilityDescriptor) -> str:
        with self._lock:
            self._check_capability(self._state, descriptor)
            self._write("publish-capability", descriptor.to_doc())
        return descriptor.instance_id

    def publish_architecture(self, description: ArchitectureDescription) -> str:
        with self._lock:
            if description.id in self._state.architectures:
                raise InvalidDescriptor(f"architecture {description.id!r} already published")
            self._write("publish-architecture", description.to_doc())
        return description.id

    def record_outcome(self, owner_id: str, event: ClientEvent) -> ClientRecord:
        name, body = event_to_doc(event)
        with self._lock:
            self._write("record", {"owner-id": owner_id, "event": name, "data": body})
            return self._state.client(owner_id)

    def _write(self, event_type: str, body: dict[str, Any]) -> None:
        seq = self._state.seq + 1
        line = self.journal.append(seq, iso(self.clock.now()), event_type, body)
        self._apply(json.loads(line))

    # state transitions, shared by live writes and replay

    @staticmethod
    def _check_capability(state: RegistrySnapshot, d: CapabilityDescriptor) -> None:
        if d.instance_id in state.capabilities:
            raise DuplicateInstance(d.instance_id)
        for other in state.capabilities.values():
            if other.class_id == d.class_id and other.class_signature != d.class_signature:
                raise InvalidDescriptor(
                    f"class {d.class_id!r} already groups instances with a different kind or offer"
                )

    def _apply(self, record: Mapping[str, Any]) -> None:
        state = self._state
        seq = record.get("seq")
        if seq != state.seq + 1:
            raise JournalCorrupt(f"journal sequence gap: expected {state.seq + 1}, found {seq}")
        kind = record.get("event-type")
        body = record.get("body", {})
        if kind == "publish-capability":
            d = CapabilityDescriptor.from_doc(body)
            self._check_capability(state, d)
            caps = dict(state.capabilities)
            caps[d.instance_id] = d
            state = replace(state, capabilities=MappingProxyType(caps), catalog_seq=seq)
        elif kind == "publish-architecture":
            a = ArchitectureDescription.from_doc(body)
            archs = dict(state.architectures)
            archs[a.id] = a
            state = replace(state, architectures=MappingProxyType(archs), catalog_seq=seq)
        elif kind == "record":
            owner = body["owner-id"]
            event = event_from_doc(body["event"], body["data"])
            clients = dict(state.clients)
            clients[owner] = state.client(owner).apply(event)
            state = replace(state, clients=MappingProxyType(clients))
        else:
            raise JournalCorrupt(f"unknown journal event {kind!r}")
        self._state = replace(state, seq=seq)

    # persistence

    def checkpoint(self, path: str | Path) -> None:
        """Write a whole-state snapshot file; journal records up to its ``seq`` are then redundant."""
        Path(path).write_text(self._state.dump() + "\n", encoding="utf-8")

    def dump_state(self) -> str:
        return self._state.dump()

    @classmethod
    def replay(cls, lines: Iterable[str], clock: Any = None) -> Registry:
        journal = Journal()
        journal._lines = [ln for ln in lines if ln.strip()]
        return cls(journal, clock)

    @classmethod
    def open(cls, journal_path: str | Path, snapshot_path: str | Path | None = None, clock: Any = None) -> Registry:
        """Restore from an optional checkpoint file plus the journal tail after it."""
        journal = Journal(journal_path)
        reg = cls(journal, clock, _replaying=True)
        start = 0
        if snapshot_path is not None and Path(snapshot_path).exists():
            reg._state = load_snapshot(snapshot_path)
            start = reg._state.seq
        for record in journal.records():
            if record.get("seq", 0) > start:
                reg._apply(record)
        return reg


def load_snapshot(path: str | Path) -> RegistrySnapshot:
    """Rebuild a :class:`RegistrySnapshot` from a checkpoint file."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return snapshot_from_doc(doc)


def snapshot_from_doc(doc: Mapping[str, Any]) -> RegistrySnapshot:
    caps = {d["instance-id"]: CapabilityDescriptor.from_doc(d) for d in doc.get("capabilities", [])}
    archs = {a["id"]: ArchitectureDescription.from_doc(a) for a in doc.get("architectures", [])}
    clients = {}
    for c in doc.get("clients", []):
        clients[c["owner-id"]] = ClientRecord(
            owner_id=c["owner-id"],
            requests=tuple(validate_profile_request(r) for r in c.get("requests", [])),
            stage_cache=MappingProxyType({k: model_from_doc(m) for k, m in c.get("stage-cache", {}).items()}),
            decisions=tuple((d["ccm-id"], bool(d["accepted"])) for d in c.get("decisions", [])),
            usage_count=MappingProxyType(dict(c.get("usage-count", {}))),
            failure_count=MappingProxyType(dict(c.get("failure-count", {}))),
        )
    return RegistrySnapshot(
        capabilities=MappingProxyType(caps),
        architectures=MappingProxyType(archs),
        clients=MappingProxyType(clients),
        seq=int(doc.get("seq", 0)),
        catalog_seq=int(doc.get("catalog-seq", 0)),
    )
