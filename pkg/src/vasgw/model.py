"""Domain types shared by the planner, registries, enactment engine and VO manager.

Every value here is immutable once built.  Documents use kebab-case field
names and are exchanged as UTF-8 JSON; :func:`canonical_json` gives the
byte-stable encoding used for digests and journals.
"""

from __future__ import annotations

import hashlib
import json
import re
from collections.abc import Iterator, Mapping, Sequence
from dataclasses import dataclass, field
from datetime import datetime, time
from enum import Enum
from fractions import Fraction
from typing import Any, Union

from vasgw.errors import (
    DuplicateKind,
    EmptyRequest,
    MalformedConstraint,
    MalformedDocument,
    UnknownKind,
)


class VasKind(str, Enum):
    POLICY_ENFORCEMENT = "policy-enforcement"
    AUTHENTICATION = "authentication"
    AUTHORISATION = "authorisation"
    AUDIT = "audit"
    BILLING = "billing"
    TRANSLATION = "translation"
    MONITORING = "monitoring"
    TOKEN_ISSUANCE = "token-issuance"
    TOKEN_VALIDATION = "token-validation"

    @classmethod
    def parse(cls, tag: Any) -> VasKind:
        if isinstance(tag, cls):
            return tag
        try:
            return cls(tag)
        except ValueError:
            raise UnknownKind(str(tag)) from None


class Placement(str, Enum):
    REQUEST = "request"
    RESPONSE = "response"
    BOTH = "both"

    def covers(self, other: Placement) -> bool:
        return self is Placement.BOTH or self is other


class Adaptability(str, Enum):
    OPEN = "Open"
    GUARDED = "Guarded"
    LOCKED = "Locked"


class ConstraintKind(str, Enum):
    MAX_LATENCY = "qos-max-latency-ms"
    MIN_THROUGHPUT = "qos-min-throughput-rps"
    SEMANTICS = "semantics"
    PLACEMENT = "placement"


ConstraintValue = Union[int, frozenset, Placement]


@dataclass(frozen=True)
class Constraint:
    kind: ConstraintKind
    value: ConstraintValue

    def __post_init__(self) -> None:
        kind = self.kind
        if kind in (ConstraintKind.MAX_LATENCY, ConstraintKind.MIN_THROUGHPUT):
            if isinstance(self.value, bool) or not isinstance(self.value, int) or self.value <= 0:
                raise MalformedConstraint(kind.value, "bound must be a positive integer")
        elif kind is ConstraintKind.SEMANTICS:
            if not isinstance(self.value, frozenset) or not self.value:
                raise MalformedConstraint(kind.value, "needs a non-empty tag set")
            if not all(isinstance(t, str) and t for t in self.value):
                raise MalformedConstraint(kind.value, "tags must be non-empty strings")
        elif kind is ConstraintKind.PLACEMENT:
            if not isinstance(self.value, Placement):
                raise MalformedConstraint(kind.value, "unknown placement")

    @classmethod
    def max_latency(cls, ms: int) -> Constraint:
        return cls(ConstraintKind.MAX_LATENCY, ms)

    @classmethod
    def min_throughput(cls, rps: int) -> Constraint:
        return cls(ConstraintKind.MIN_THROUGHPUT, rps)

    @classmethod
    def semantics(cls, *tags: str) -> Constraint:
        return cls(ConstraintKind.SEMANTICS, frozenset(tags))

    @classmethod
    def placement(cls, where: Placement | str) -> Constraint:
        try:
            return cls(ConstraintKind.PLACEMENT, Placement(where))
        except ValueError:
            raise MalformedConstraint("placement", f"unknown placement {where!r}") from None

    def to_doc(self) -> dict[str, Any]:
        if self.kind is ConstraintKind.SEMANTICS:
            value: Any = sorted(self.value)  # type: ignore[arg-type]
        elif self.kind is ConstraintKind.PLACEMENT:
            value = self.value.value  # type: ignore[union-attr]
        else:
            value = self.value
        return {"kind": self.kind.value, "value": value}

    @classmethod
    def from_doc(cls, doc: Any) -> Constraint:
        if not isinstance(doc, Mapping) or "kind" not in doc or "value" not in doc:
            raise MalformedConstraint("constraint", "expected an object with kind and value")
        try:
            kind = ConstraintKind(doc["kind"])
        except ValueError:
            raise MalformedConstraint("kind", f"unknown constraint kind {doc['kind']!r}") from None
        value = doc["value"]
        if kind is ConstraintKind.SEMANTICS:
            tags = [value] if isinstance(value, str) else value
            if not isinstance(tags, list):
                raise MalformedConstraint(kind.value, "tags must be a string or a list")
            return cls(kind, frozenset(tags))
        if kind is ConstraintKind.PLACEMENT:
            return cls.placement(value)
        return cls(kind, value)

    def sort_key(self) -> tuple[str, str]:
        return (self.kind.value, canonical_json(self.to_doc()))


def constraint_satisfies(offered: Sequence[Constraint], required: Sequence[Constraint]) -> bool:
    """True when the offered guarantees meet every required constraint.

    A missing offered latency/throughput/semantics guarantee never satisfies a
    requirement of that type; a missing offered placement counts as ``both``.
    """
    latencies = [c.value for c in offered if c.kind is ConstraintKind.MAX_LATENCY]
    throughputs = [c.value for c in offered if c.kind is ConstraintKind.MIN_THROUGHPUT]
    tags: set[str] = set()
    for c in offered:
        if c.kind is ConstraintKind.SEMANTICS:
            tags |= c.value  # type: ignore[arg-type]
    placements = [c.value for c in offered if c.kind is ConstraintKind.PLACEMENT]
    offered_placement = Placement.BOTH
    for p in placements:
        # several offered placements: the narrowest one is the guarantee
        if p is not Placement.BOTH:
            offered_placement = p  # type: ignore[assignment]
    for req in required:
        if req.kind is ConstraintKind.MAX_LATENCY:
            if not latencies or min(latencies) > req.value:  # type: ignore[operator]
                return False
        elif req.kind is ConstraintKind.MIN_THROUGHPUT:
            if not throughputs or max(throughputs) < req.value:  # type: ignore[operator]
                return False
        elif req.kind is ConstraintKind.SEMANTICS:
            if not tags & req.value:  # type: ignore[operator]
                return False
        elif req.kind is ConstraintKind.PLACEMENT:
            if not offered_placement.covers(req.value):  # type: ignore[arg-type]
                return False
    return True


@dataclass(frozen=True)
class WantedService:
    kind: VasKind
    constraints: tuple[Constraint, ...] = ()

    def to_doc(self) -> dict[str, Any]:
        return {"kind": self.kind.value, "constraints": [c.to_doc() for c in self.constraints]}


@dataclass(frozen=True)
class ArchitectureRef:
    category: str
    name: str

    def to_doc(self) -> dict[str, str]:
        return {"category": self.category, "name": self.name}


@dataclass(frozen=True)
class ProfileRequest:
    owner_id: str
    resource_id: str
    wanted: tuple[WantedService, ...]
    direction: Placement = Placement.BOTH
    adaptability: Adaptability = Adaptability.GUARDED
    preferred_architecture: ArchitectureRef | None = None

    def __post_init__(self) -> None:
        if not self.wanted:
            raise EmptyRequest()
        seen: set[VasKind] = set()
        for entry in self.wanted:
            if entry.kind in seen:
                raise DuplicateKind(entry.kind.value)
            seen.add(entry.kind)
            for c in entry.constraints:
                if c.kind is ConstraintKind.PLACEMENT and not self.direction.covers(c.value):  # type: ignore[arg-type]
                    raise MalformedConstraint(
                        "placement", f"{c.value.value} conflicts with direction {self.direction.value}"  # type: ignore[union-attr]
                    )

    @property
    def kinds(self) -> tuple[VasKind, ...]:
        return tuple(w.kind for w in self.wanted)

    def constraints_for(self, kind: VasKind) -> tuple[Constraint, ...]:
        for w in self.wanted:
            if w.kind is kind:
                return w.constraints
        return ()

    def to_doc(self) -> dict[str, Any]:
        doc: dict[str, Any] = {
            "owner-id": self.owner_id,
            "resource-id": self.resource_id,
            "wanted": [w.to_doc() for w in self.wanted],
            "direction": self.direction.value,
            "adaptability": self.adaptability.value,
        }
        if self.preferred_architecture is not None:
            doc["preferred-architecture"] = self.preferred_architecture.to_doc()
        return doc

    def digest(self) -> str:
        return digest(self.to_doc())


def validate_profile_request(document: str | bytes | Mapping[str, Any]) -> ProfileRequest:
    """Parse a profile-request document into a normalised :class:`ProfileRequest`.

    Absent ``direction`` becomes ``both`` and absent ``adaptability`` becomes
    ``Guarded``.  ``wanted`` entries may be bare kind tags, ``[kind, constraints]``
    pairs, or ``{"kind": ..., "constraints": [...]}`` objects.
    """
    doc = _load(document)
    for key in ("owner-id", "resource-id"):
        if not isinstance(doc.get(key), str) or not doc[key]:
            raise MalformedDocument(f"field {key!r} must be a non-empty string", field=key)
    raw_wanted = doc.get("wanted")
    if raw_wanted is None or raw_wanted == []:
        raise EmptyRequest()
    if not isinstance(raw_wanted, list):
        raise MalformedDocument("field 'wanted' must be a list", field="wanted")
    wanted = tuple(_parse_wanted(entry) for entry in raw_wanted)
    try:
        direction = Placement(doc.get("direction", Placement.BOTH.value))
    except ValueError:
        raise MalformedDocument(f"unknown direction {doc.get('direction')!r}", field="direction") from None
    try:
        adaptability = Adaptability(doc.get("adaptability", Adaptability.GUARDED.value))
    except ValueError:
        raise MalformedDocument(f"unknown adaptability {doc.get('adaptability')!r}", field="adaptability") from None
    pref = doc.get("preferred-architecture")
    preferred = None
    if pref is not None:
        if not isinstance(pref, Mapping) or not pref.get("category") or not pref.get("name"):
            raise MalformedDocument("preferred-architecture needs category and name", field="preferred-architecture")
        preferred = ArchitectureRef(str(pref["category"]), str(pref["name"]))
    return ProfileRequest(
        owner_id=doc["owner-id"],
        resource_id=doc["resource-id"],
        wanted=wanted,
        direction=direction,
        adaptability=adaptability,
        preferred_architecture=preferred,
    )


def _parse_wanted(entry: Any) -> WantedService:
    if isinstance(entry, str):
        return WantedService(VasKind.parse(entry))
    if isinstance(entry, list) and len(entry) == 2:
        tag, constraints = entry
    elif isinstance(entry, Mapping) and "kind" in entry:
        tag, constraints = entry["kind"], entry.get("constraints", [])
    else:
        raise MalformedDocument(f"cannot read wanted entry {entry!r}", field="wanted")
    if not isinstance(constraints, list):
        raise MalformedConstraint("constraints", "must be a list")
    kind = VasKind.parse(tag)
    return WantedService(kind, tuple(Constraint.from_doc(c) for c in constraints))


def serialize_profile_request(request: ProfileRequest) -> str:
    return canonical_json(request.to_doc())


# -- composition models ------------------------------------------------------


class Origin(str, Enum):
    CLIENT = "client-requested"
    SYSTEM = "system-added"


@dataclass(frozen=True)
class Slot:
    slot_id: str
    kind: VasKind
    constraints: tuple[Constraint, ...] = ()
    origin: Origin = Origin.CLIENT

    def to_doc(self) -> dict[str, Any]:
        return {
            "slot-id": self.slot_id,
            "kind": self.kind.value,
            "constraints": [c.to_doc() for c in self.constraints],
            "origin": self.origin.value,
        }

    @classmethod
    def from_doc(cls, doc: Mapping[str, Any]) -> Slot:
        return cls(
            slot_id=doc["slot-id"],
            kind=VasKind.parse(doc["kind"]),
            constraints=tuple(Constraint.from_doc(c) for c in doc.get("constraints", [])),
            origin=Origin(doc.get("origin", Origin.CLIENT.value)),
        )


@dataclass(frozen=True)
class AGCM:
    adm_ref: str
    slots: tuple[Slot, ...]
    direction: Placement = Placement.BOTH

    def __post_init__(self) -> None:
        ids = [s.slot_id for s in self.slots]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate slot ids in {ids}")

    @property
    def kinds(self) -> tuple[VasKind, ...]:
        return tuple(s.kind for s in self.slots)

    def slot(self, slot_id: str) -> Slot:
        for s in self.slots:
            if s.slot_id == slot_id:
                return s
        raise KeyError(slot_id)

    def to_doc(self) -> dict[str, Any]:
        return {
            "stage": "agcm",
            "adm-ref": self.adm_ref,
            "direction": self.direction.value,
            "slots": [s.to_doc() for s in self.slots],
        }

    @classmethod
    def from_doc(cls, doc: Mapping[str, Any]) -> AGCM:
        return cls(
            adm_ref=doc["adm-ref"],
            slots=tuple(Slot.from_doc(s) for s in doc["slots"]),
            direction=Placement(doc.get("direction", Placement.BOTH.value)),
        )


@dataclass(frozen=True)
class ClassBinding:
    class_id: str
    constraints: tuple[Constraint, ...] = ()

    def to_doc(self) -> dict[str, Any]:
        return {"capability-class": self.class_id, "constraints": [c.to_doc() for c in self.constraints]}


@dataclass(frozen=True)
class NestedBinding:
    ascm: ASCM

    def to_doc(self) -> dict[str, Any]:
        return {"nested": self.ascm.to_doc()}


Binding = Union[ClassBinding, NestedBinding]


@dataclass(frozen=True)
class ASCM:
    agcm: AGCM
    bindings: tuple[tuple[str, Binding], ...]

    def binding(self, slot_id: str) -> Binding:
        for sid, b in self.bindings:
            if sid == slot_id:
                return b
        raise KeyError(slot_id)

    def leaves(self) -> Iterator[tuple[Slot, ClassBinding]]:
        """Leaf slots depth-first, nested compositions expanded in place."""
        for slot in self.agcm.slots:
            b = self.binding(slot.slot_id)
            if isinstance(b, NestedBinding):
                yield from b.ascm.leaves()
            else:
                yield slot, b

    def depth(self) -> int:
        nested = [b.ascm.depth() + 1 for _, b in self.bindings if isinstance(b, NestedBinding)]
        return max(nested, default=0)

    def architecture_paths(self) -> Iterator[tuple[str, ...]]:
        nested = [b.ascm for _, b in self.bindings if isinstance(b, NestedBinding)]
        if not nested:
            yield (self.agcm.adm_ref,)
        for sub in nested:
            for path in sub.architecture_paths():
                yield (self.agcm.adm_ref, *path)

    def to_doc(self) -> dict[str, Any]:
        return {
            "stage": "ascm",
            "agcm": self.agcm.to_doc(),
            "bindings": [{"slot-id": sid, **b.to_doc()} for sid, b in self.bindings],
        }

    @classmethod
    def from_doc(cls, doc: Mapping[str, Any]) -> ASCM:
        bindings: list[tuple[str, Binding]] = []
        for b in doc["bindings"]:
            if "nested" in b:
                bindings.append((b["slot-id"], NestedBinding(ASCM.from_doc(b["nested"]))))
            else:
                cons = tuple(Constraint.from_doc(c) for c in b.get("constraints", []))
                bindings.append((b["slot-id"], ClassBinding(b["capability-class"], cons)))
        return cls(agcm=AGCM.from_doc(doc["agcm"]), bindings=tuple(bindings))


class StepKind(str, Enum):
    TRUST_BOOTSTRAP = "trust-bootstrap"
    CONFIG_PUSH = "config-push"
    NONE = "none"


@dataclass(frozen=True)
class SetupStep:
    kind: StepKind
    params: Mapping[str, Any] = field(default_factory=dict, hash=False)

    @classmethod
    def trust_bootstrap(cls, peer: str) -> SetupStep:
        return cls(StepKind.TRUST_BOOTSTRAP, {"peer": peer})

    @classmethod
    def config_push(cls, document: Mapping[str, Any]) -> SetupStep:
        return cls(StepKind.CONFIG_PUSH, {"document": dict(document)})

    def to_doc(self) -> dict[str, Any]:
        return {"step-kind": self.kind.value, "params": json.loads(canonical_json(dict(self.params)))}

    @classmethod
    def from_doc(cls, doc: Mapping[str, Any]) -> SetupStep:
        try:
            kind = StepKind(doc["step-kind"])
        except (KeyError, ValueError):
            raise MalformedDocument(f"bad setup step {doc!r}", field="step-kind") from None
        return cls(kind, dict(doc.get("params", {})))


@dataclass(frozen=True)
class InstanceBinding:
    slot_id: str
    kind: VasKind
    instance_id: str
    endpoint: str

    def to_doc(self) -> dict[str, Any]:
        return {
            "slot-id": self.slot_id,
            "kind": self.kind.value,
            "instance-id": self.instance_id,
            "endpoint": self.endpoint,
        }


@dataclass(frozen=True)
class SetupAction:
    slot_id: str
    instance_id: str
    step: SetupStep

    @property
    def label(self) -> str:
        return f"{self.slot_id}/{self.instance_id}/{self.step.kind.value}"

    def to_doc(self) -> dict[str, Any]:
        return {"slot-id": self.slot_id, "instance-id": self.instance_id, **self.step.to_doc()}


@dataclass(frozen=True)
class CCM:
    ascm: ASCM
    instances: tuple[InstanceBinding, ...]
    setup_plan: tuple[SetupAction, ...]
    score: Fraction

    @property
    def ccm_id(self) -> str:
        return digest(self.to_doc())[:16]

    @property
    def direction(self) -> Placement:
        return self.ascm.agcm.direction

    def instance_for(self, slot_id: str) -> InstanceBinding:
        for b in self.instances:
            if b.slot_id == slot_id:
                return b
        raise KeyError(slot_id)

    def to_doc(self) -> dict[str, Any]:
        return {
            "stage": "ccm",
            "ascm": self.ascm.to_doc(),
            "instance-bindings": [b.to_doc() for b in self.instances],
            "setup-plan": [a.to_doc() for a in self.setup_plan],
            "score": fraction_text(self.score),
        }

    @classmethod
    def from_doc(cls, doc: Mapping[str, Any]) -> CCM:
        return cls(
            ascm=ASCM.from_doc(doc["ascm"]),
            instances=tuple(
                InstanceBinding(b["slot-id"], VasKind.parse(b["kind"]), b["instance-id"], b["endpoint"])
                for b in doc["instance-bindings"]
            ),
            setup_plan=tuple(
                SetupAction(a["slot-id"], a["instance-id"], SetupStep.from_doc(a)) for a in doc["setup-plan"]
            ),
            score=Fraction(doc["score"]),
        )


CompositionModel = Union[AGCM, ASCM, CCM]


def model_from_doc(doc: Mapping[str, Any]) -> CompositionModel:
    stage = doc.get("stage")
    if stage == "agcm":
        return AGCM.from_doc(doc)
    if stage == "ascm":
        return ASCM.from_doc(doc)
    if stage == "ccm":
        return CCM.from_doc(doc)
    raise MalformedDocument(f"unknown model stage {stage!r}", field="stage")


# -- enacted profiles --------------------------------------------------------


class LifecycleMode(str, Enum):
    EAGER = "Eager"
    SCHEDULED = "Scheduled"
    ON_DEMAND = "OnDemand"


@dataclass(frozen=True)
class Window:
    """Daily availability window, start inclusive and end exclusive.

    ``start > end`` wraps past midnight.
    """

    start: time
    end: time

    def contains(self, moment: datetime | time) -> bool:
        t = moment.time() if isinstance(moment, datetime) else moment
        t = t.replace(tzinfo=None)
        if self.start <= self.end:
            return self.start <= t < self.end
        return t >= self.start or t < self.end

    @classmethod
    def parse(cls, text: str) -> Window:
        try:
            a, b = text.split("-")
            return cls(time.fromisoformat(a.strip()), time.fromisoformat(b.strip()))
        except ValueError:
            raise MalformedDocument(f"bad window {text!r}, expected HH:MM-HH:MM", field="window") from None

    def to_doc(self) -> str:
        return f"{self.start.isoformat(timespec='minutes')}-{self.end.isoformat(timespec='minutes')}"


@dataclass(frozen=True)
class Lifecycle:
    mode: LifecycleMode
    windows: tuple[Window, ...] = ()

    @classmethod
    def eager(cls) -> Lifecycle:
        return cls(LifecycleMode.EAGER)

    @classmethod
    def on_demand(cls) -> Lifecycle:
        return cls(LifecycleMode.ON_DEMAND)

    @classmethod
    def scheduled(cls, *windows: Window) -> Lifecycle:
        return cls(LifecycleMode.SCHEDULED, tuple(windows))

    def to_doc(self) -> dict[str, Any]:
        return {"mode": self.mode.value, "windows": [w.to_doc() for w in self.windows]}

    @classmethod
    def from_doc(cls, doc: Mapping[str, Any] | str) -> Lifecycle:
        if isinstance(doc, str):
            doc = {"mode": doc}
        try:
            mode = LifecycleMode(doc["mode"])
        except (KeyError, ValueError):
            raise MalformedDocument(f"unknown lifecycle {doc!r}", field="lifecycle") from None
        return cls(mode, tuple(Window.parse(w) for w in doc.get("windows", [])))


class ProfileState(str, Enum):
    VALIDATED = "Validated"
    ENACTED = "Enacted"
    ACTIVE = "Active"
    DORMANT = "Dormant"
    LATENT = "Latent"
    RETIRED = "Retired"


@dataclass(frozen=True)
class SecuredProfile:
    collaboration_id: str
    ccm: CCM
    lifecycle: Lifecycle
    state: ProfileState
    chain: tuple[Any, ...] = field(compare=False)

    @property
    def direction(self) -> Placement:
        return self.ccm.direction

    @property
    def chain_slots(self) -> tuple[str, ...]:
        return tuple(h.slot_id for h in self.chain)

    def to_doc(self) -> dict[str, Any]:
        return {
            "collaboration-id": self.collaboration_id,
            "direction": self.direction.value,
            "ccm": self.ccm.to_doc(),
            "lifecycle": self.lifecycle.to_doc(),
            "state": self.state.value,
            "chain": [{"slot-id": h.slot_id, "kind": h.kind.value} for h in self.chain],
        }


_COLLAB_RE = re.compile(r"^[A-Za-z0-9][A-Za-z0-9._:-]{0,127}$")


def well_formed_collaboration_id(value: Any) -> bool:
    return isinstance(value, str) and bool(_COLLAB_RE.match(value))


@dataclass(frozen=True)
class MessageEnvelope:
    collaboration_id: str
    direction: Placement
    headers: Mapping[str, str] = field(default_factory=dict, hash=False)
    payload: bytes = b""

    def __post_init__(self) -> None:
        if not well_formed_collaboration_id(self.collaboration_id):
            raise MalformedDocument(f"bad collaboration-id {self.collaboration_id!r}", field="collaboration-id")
        if self.direction is Placement.BOTH:
            raise MalformedDocument("a message travels as request or response", field="direction")
        object.__setattr__(self, "headers", dict(self.headers))

    def with_headers(self, **updates: str) -> MessageEnvelope:
        headers = dict(self.headers)
        headers.update(updates)
        return MessageEnvelope(self.collaboration_id, self.direction, headers, self.payload)

    def with_payload(self, payload: bytes) -> MessageEnvelope:
        return MessageEnvelope(self.collaboration_id, self.direction, self.headers, payload)

    def to_doc(self) -> dict[str, Any]:
        return {
            "collaboration-id": self.collaboration_id,
            "direction": self.direction.value,
            "headers": dict(sorted(self.headers.items())),
            "payload": self.payload.decode("utf-8", errors="surrogateescape"),
        }

    @classmethod
    def from_doc(cls, doc: Mapping[str, Any]) -> MessageEnvelope:
        try:
            direction = Placement(doc["direction"])
        except (KeyError, ValueError):
            raise MalformedDocument("envelope direction missing or unknown", field="direction") from None
        return cls(
            collaboration_id=doc.get("collaboration-id", ""),
            direction=direction,
            headers={str(k): str(v) for k, v in (doc.get("headers") or {}).items()},
            payload=str(doc.get("payload", "")).encode("utf-8", errors="surrogateescape"),
        )


# -- encoding helpers --------------------------------------------------------


def canonical_json(doc: Any) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def digest(doc: Any) -> str:
    return hashlib.sha256(canonical_json(doc).encode("utf-8")).hexdigest()


def fraction_text(value: Fraction) -> str:
    return str(Fraction(value))


def as_fraction(value: Any) -> Fraction:
    """Exact rational from an int, a decimal/fraction string, or a float's shortest repr."""
    if isinstance(value, bool):
        raise ValueError("booleans are not numbers here")
    if isinstance(value, float):
        return Fraction(repr(value))
    return Fraction(value)


def _load(document: str | bytes | Mapping[str, Any]) -> Mapping[str, Any]:
    if isinstance(document, Mapping):
        return document
    if isinstance(document, bytes):
        document = document.decode("utf-8")
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise MalformedDocument(f"not a structured-text document: {exc}") from None
    if not isinstance(doc, Mapping):
        raise MalformedDocument("document root must be an object")
    return doc
