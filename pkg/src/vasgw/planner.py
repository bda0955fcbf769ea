"""Predication engine: request -> AGCM -> ASCM -> CCM.

The first two stages form the planning sub-cycle (pick an architecture,
complete and order the slots, then bind each slot to a capability class or a
nested composition); :func:`bind_ccm` is the binding sub-cycle that picks
concrete instances by cost.  :class:`PredicationEngine` chains the stages,
applies the client's adaptability level and caches every stage in the client
registry.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Union

from vasgw.errors import (
    ApprovalRequired,
    CyclicArchitecture,
    DepthExceeded,
    ExclusionViolated,
    IncompleteProfile,
    KindNotAllowed,
    NoAdmMatch,
    ProposalRejected,
    UnsatisfiableSlot,
    VasError,
)
from vasgw.model import (
    AGCM,
    ASCM,
    CCM,
    Adaptability,
    Binding,
    ClassBinding,
    Constraint,
    ConstraintKind,
    InstanceBinding,
    NestedBinding,
    Origin,
    Placement,
    ProfileRequest,
    SetupAction,
    Slot,
    VasKind,
    constraint_satisfies,
    digest,
    fraction_text,
)
from vasgw.ordering import canonical_order
from vasgw.registries import (
    ArchitectureDescription,
    CacheStage,
    CapabilityDescriptor,
    ClientRecord,
    Decision,
    Registry,
    RegistrySnapshot,
    RequestLogged,
)

DEFAULT_DEPTH_LIMIT = 3
QOS_KINDS = (ConstraintKind.MAX_LATENCY, ConstraintKind.MIN_THROUGHPUT)


def _name(kind: VasKind) -> str:
    return kind.value


@dataclass(frozen=True)
class CostWeights:
    latency_divisor: Fraction = Fraction(100)
    failure: Fraction = Fraction(10)
    history: Fraction = Fraction(5)
    history_saturation: int = 10

    def __post_init__(self) -> None:
        if self.latency_divisor <= 0 or self.history_saturation <= 0:
            raise ValueError("latency divisor and history saturation must be positive")
        if self.failure < 0 or self.history < 0:
            raise ValueError("cost weights must be non-negative")

    def to_doc(self) -> dict[str, str | int]:
        return {
            "latency-divisor": fraction_text(self.latency_divisor),
            "failure": fraction_text(self.failure),
            "history": fraction_text(self.history),
            "history-saturation": self.history_saturation,
        }


def instance_cost(descriptor: CapabilityDescriptor, client: ClientRecord, weights: CostWeights = CostWeights()) -> Fraction:
    history = min(Fraction(1), Fraction(client.failures_of(descriptor.instance_id), weights.history_saturation))
    return (
        descriptor.latency_ms / weights.latency_divisor
        + weights.failure * descriptor.failure_rate
        + weights.history * history
    )


# -- deviations --------------------------------------------------------------


@dataclass(frozen=True)
class Added:
    kind: VasKind

    def to_doc(self) -> dict[str, Any]:
        return {"deviation": "added", "kind": self.kind.value}


@dataclass(frozen=True)
class Substituted:
    slot_id: str
    requested_class: str
    chosen_class: str

    def to_doc(self) -> dict[str, Any]:
        return {
            "deviation": "substituted",
            "slot-id": self.slot_id,
            "requested-class": self.requested_class,
            "chosen-class": self.chosen_class,
        }


@dataclass(frozen=True)
class ConstraintRelaxed:
    slot_id: str
    constraint: Constraint

    def to_doc(self) -> dict[str, Any]:
        return {"deviation": "constraint-relaxed", "slot-id": self.slot_id, "constraint": self.constraint.to_doc()}


Deviation = Union[Added, Substituted, ConstraintRelaxed]


def binding_deviations(ascm: ASCM) -> list[Deviation]:
    """Substitutions and relaxations recorded in an ASCM, depth-first."""
    out: list[Deviation] = []
    for slot in ascm.agcm.slots:
        b = ascm.binding(slot.slot_id)
        if isinstance(b, NestedBinding):
            out.append(Substituted(slot.slot_id, slot.kind.value, b.ascm.agcm.adm_ref))
            out.extend(binding_deviations(b.ascm))
        else:
            out.extend(ConstraintRelaxed(slot.slot_id, c) for c in slot.constraints if c not in b.constraints)
    return out


def deviations_of(ascm: ASCM) -> list[Deviation]:
    added: list[Deviation] = [Added(s.kind) for s in ascm.agcm.slots if s.origin is Origin.SYSTEM]
    return added + binding_deviations(ascm)


# -- plan outcomes -----------------------------------------------------------


@dataclass(frozen=True)
class Ready:
    ccm: CCM

    def to_doc(self) -> dict[str, Any]:
        return {"result": "Ready", "ccm": self.ccm.to_doc(), "ccm-id": self.ccm.ccm_id}


@dataclass(frozen=True)
class ProposalPending:
    ccm: CCM
    deviations: tuple[Deviation, ...]
    request: ProfileRequest

    def to_doc(self) -> dict[str, Any]:
        return {
            "result": "ProposalPending",
            "ccm": self.ccm.to_doc(),
            "ccm-id": self.ccm.ccm_id,
            "deviations": [d.to_doc() for d in self.deviations],
        }


@dataclass(frozen=True)
class Failed:
    error: VasError

    def to_doc(self) -> dict[str, Any]:
        return {"result": "Failed", "error": self.error.to_doc()}


PlanOutcome = Union[Ready, ProposalPending, Failed]


@dataclass(frozen=True)
class Accept:
    pass


@dataclass(frozen=True)
class Reject:
    new_request: ProfileRequest | None = None


# -- stage 1: architecture selection and AGCM --------------------------------


def _conflicts(adm: ArchitectureDescription, requested: set[VasKind]) -> bool:
    would_hold = requested | adm.mandatory
    return any(pair <= would_hold for pair in adm.exclusions)


def select_adm(request: ProfileRequest, snapshot: RegistrySnapshot) -> ArchitectureDescription:
    pref = request.preferred_architecture
    if pref is not None:
        for adm in snapshot.find_architectures(category=pref.category):
            if adm.id == pref.name:
                return adm
        raise NoAdmMatch(f"architecture {pref.category}/{pref.name} is not registered", category=pref.category, name=pref.name)
    requested = set(request.kinds)
    best: ArchitectureDescription | None = None
    best_score = -1
    # list is already (category, id) ascending, so the first maximum wins ties
    for adm in snapshot.architecture_list():
        if adm.realizes is not None or _conflicts(adm, requested):
            continue
        score = len(adm.members & requested)
        if score > best_score:
            best, best_score = adm, score
    if best is None:
        raise NoAdmMatch("no architecture accepts the requested kinds")
    return best


def build_agcm(request: ProfileRequest, adm: ArchitectureDescription, nominal: bool | None = None) -> AGCM:
    if nominal is None:
        nominal = request.preferred_architecture is not None
    requested = list(request.kinds)
    if nominal:
        for kind in requested:
            if kind not in adm.members:
                raise KindNotAllowed(kind.value)
    missing = sorted(adm.mandatory - set(requested), key=_name)
    if missing and request.adaptability is Adaptability.LOCKED:
        raise IncompleteProfile([k.value for k in missing])
    kinds = set(requested) | set(missing)
    for pair in sorted((sorted(p, key=_name) for p in adm.exclusions), key=lambda p: [k.value for k in p]):
        if set(pair) <= kinds:
            raise ExclusionViolated((pair[0].value, pair[1].value))
    slots = tuple(
        Slot(
            slot_id=kind.value,
            kind=kind,
            constraints=request.constraints_for(kind),
            origin=Origin.CLIENT if kind in requested else Origin.SYSTEM,
        )
        for kind in canonical_order(kinds, adm.order, key=_name)
    )
    return AGCM(adm_ref=adm.id, slots=slots, direction=request.direction)


def expand_agcm(slot: Slot, adm: ArchitectureDescription, direction: Placement) -> AGCM:
    """Nested AGCM realising one slot through a decomposing architecture."""
    slots = tuple(
        Slot(f"{slot.slot_id}/{kind.value}", kind, slot.constraints, slot.origin)
        for kind in canonical_order(adm.mandatory, adm.order, key=_name)
    )
    return AGCM(adm_ref=adm.id, slots=slots, direction=direction)


# -- stage 2: ASCM -----------------------------------------------------------


def bind_ascm(
    agcm: AGCM, snapshot: RegistrySnapshot, depth_limit: int = DEFAULT_DEPTH_LIMIT
) -> tuple[ASCM, list[Deviation]]:
    if depth_limit < 1:
        raise ValueError("depth-limit must be at least 1")
    ascm = _bind(agcm, snapshot, depth_limit, (agcm.adm_ref,))
    return ascm, binding_deviations(ascm)


def _bind(agcm: AGCM, snapshot: RegistrySnapshot, remaining: int, path: tuple[str, ...]) -> ASCM:
    bindings: list[tuple[str, Binding]] = []
    for slot in agcm.slots:
        bindings.append((slot.slot_id, _bind_slot(slot, agcm.direction, snapshot, remaining, path)))
    return ASCM(agcm, tuple(bindings))


def _bind_slot(slot: Slot, direction: Placement, snapshot: RegistrySnapshot, remaining: int, path: tuple[str, ...]) -> Binding:
    classes = snapshot.classes(slot.kind)
    for class_id, offered in classes:
        if constraint_satisfies(offered, slot.constraints):
            return ClassBinding(class_id, slot.constraints)

    first_error: VasError | None = None
    for adm in snapshot.find_architectures(realizes=slot.kind):
        try:
            if adm.id in path:
                raise CyclicArchitecture([*path, adm.id])
            if remaining == 0:
                raise DepthExceeded(slot.slot_id)
            nested = _bind(expand_agcm(slot, adm, direction), snapshot, remaining - 1, (*path, adm.id))
            return NestedBinding(nested)
        except (CyclicArchitecture, DepthExceeded, UnsatisfiableSlot) as exc:
            first_error = first_error or exc

    # last resort: drop the QoS bounds no class can meet
    kept = tuple(c for c in slot.constraints if c.kind not in QOS_KINDS)
    if len(kept) != len(slot.constraints):
        for class_id, offered in classes:
            if constraint_satisfies(offered, kept):
                honoured = tuple(c for c in slot.constraints if c in kept or constraint_satisfies(offered, [c]))
                return ClassBinding(class_id, honoured)

    if first_error is not None:
        raise first_error
    raise UnsatisfiableSlot(slot.slot_id, slot.kind.value)


# -- stage 3: CCM ------------------------------------------------------------


def feasible_instances(snapshot: RegistrySnapshot, slot: Slot, binding: ClassBinding) -> list[CapabilityDescriptor]:
    return snapshot.find_capabilities(slot.kind, binding.constraints, class_id=binding.class_id)


def bind_ccm(
    ascm: ASCM, snapshot: RegistrySnapshot, client: ClientRecord, weights: CostWeights = CostWeights()
) -> CCM:
    # the cost is separable per slot, so the per-slot minimum is the global one
    instances: list[InstanceBinding] = []
    setup: list[SetupAction] = []
    total = Fraction(0)
    for slot, binding in ascm.leaves():
        feasible = feasible_instances(snapshot, slot, binding)
        if not feasible:
            raise UnsatisfiableSlot(slot.slot_id, slot.kind.value)
        costed = [(instance_cost(d, client, weights), d.instance_id, d) for d in feasible]
        cost, _, chosen = min(costed, key=lambda t: (t[0], t[1]))
        total += cost
        instances.append(InstanceBinding(slot.slot_id, slot.kind, chosen.instance_id, chosen.endpoint))
        setup.extend(SetupAction(slot.slot_id, chosen.instance_id, step) for step in chosen.setup_steps)
    return CCM(ascm=ascm, instances=tuple(instances), setup_plan=tuple(setup), score=total)


# -- full pipeline -----------------------------------------------------------


def _decide(request: ProfileRequest, ccm: CCM) -> PlanOutcome:
    deviations = tuple(deviations_of(ccm.ascm))
    level = request.adaptability
    if level is Adaptability.OPEN or not deviations:
        return Ready(ccm)
    if level is Adaptability.GUARDED:
        return ProposalPending(ccm, deviations, request)
    return Failed(ApprovalRequired(list(deviations)))


class PredicationEngine:
    """Runs the planning pipeline against a registry.

    With a ``registry`` every stage model is cached in the owner's client
    record and reused when the same request meets the same catalogue and
    failure history again.
    """

    def __init__(
        self,
        registry: Registry | None = None,
        weights: CostWeights = CostWeights(),
        depth_limit: int = DEFAULT_DEPTH_LIMIT,
    ) -> None:
        if depth_limit < 1:
            raise ValueError("depth-limit must be at least 1")
        self.registry = registry
        self.weights = weights
        self.depth_limit = depth_limit

    def stage_key(self, request: ProfileRequest, snapshot: RegistrySnapshot, client: ClientRecord) -> str:
        context = {
            "request": request.to_doc(),
            "catalog": snapshot.catalog_seq,
            "failures": dict(sorted(client.failure_count.items())),
            "weights": self.weights.to_doc(),
            "depth": self.depth_limit,
        }
        return digest(context)[:24]

    def plan(
        self, request: ProfileRequest, snapshot: RegistrySnapshot | None = None, client: ClientRecord | None = None
    ) -> PlanOutcome:
        if snapshot is None:
            if self.registry is None:
                raise ValueError("plan needs a snapshot when the engine has no registry")
            snapshot = self.registry.snapshot()
        if client is None:
            client = snapshot.client(request.owner_id)
        self._record(request.owner_id, RequestLogged(request))
        key = self.stage_key(request, snapshot, client)
        cached = client.stage_cache.get(f"{key}/ccm")
        if isinstance(cached, CCM):
            return _decide(request, cached)
        try:
            adm = select_adm(request, snapshot)
            agcm = build_agcm(request, adm)
            self._record(request.owner_id, CacheStage(f"{key}/agcm", agcm))
            ascm, _ = bind_ascm(agcm, snapshot, self.depth_limit)
            self._record(request.owner_id, CacheStage(f"{key}/ascm", ascm))
            ccm = bind_ccm(ascm, snapshot, client, self.weights)
            self._record(request.owner_id, CacheStage(f"{key}/ccm", ccm))
        except VasError as exc:
            return Failed(exc)
        return _decide(request, ccm)

    def review_ccm(
        self, outcome: ProposalPending, decision: Accept | Reject, snapshot: RegistrySnapshot | None = None
    ) -> PlanOutcome:
        if not isinstance(outcome, ProposalPending):
            raise TypeError("only a pending proposal can be reviewed")
        owner = outcome.request.owner_id
        if isinstance(decision, Accept):
            self._record(owner, Decision(outcome.ccm.ccm_id, True))
            return Ready(outcome.ccm)
        self._record(owner, Decision(outcome.ccm.ccm_id, False))
        if decision.new_request is None:
            return Failed(ProposalRejected())
        return self.plan(decision.new_request, snapshot)

    def _record(self, owner: str, event: Any) -> None:
        if self.registry is not None:
            self.registry.record_outcome(owner, event)


def plan(
    request: ProfileRequest,
    snapshot: RegistrySnapshot,
    client: ClientRecord | None = None,
    weights: CostWeights = CostWeights(),
    depth_limit: int = DEFAULT_DEPTH_LIMIT,
) -> PlanOutcome:
    """Registry-free planning; nothing is cached."""
    return PredicationEngine(None, weights, depth_limit).plan(request, snapshot, client)


def outcome_summary(outcome: PlanOutcome) -> dict[str, Any]:
    doc = outcome.to_doc()
    if "ccm" in doc:
        ccm = outcome.ccm  # type: ignore[union-attr]
        doc["chain"] = [s.slot_id for s, _ in ccm.ascm.leaves()]
        doc["score"] = fraction_text(ccm.score)
    return doc


__all__ = [
    "Accept",
    "Added",
    "ConstraintRelaxed",
    "CostWeights",
    "Deviation",
    "Failed",
    "PlanOutcome",
    "PredicationEngine",
    "ProposalPending",
    "Ready",
    "Reject",
    "Substituted",
    "bind_ascm",
    "bind_ccm",
    "build_agcm",
    "deviations_of",
    "expand_agcm",
    "instance_cost",
    "plan",
    "select_adm",
]
