"""Random instance generators and brute-force oracles shared by the tests."""

from __future__ import annotations

import itertools
import random
from fractions import Fraction

from vasgw.catalog import publish_catalog
from vasgw.model import (
    Adaptability,
    ClassBinding,
    Constraint,
    ConstraintKind,
    Placement,
    ProfileRequest,
    SetupStep,
    VasKind,
    WantedService,
    constraint_satisfies,
)
from vasgw.registries import ArchitectureDescription, CapabilityDescriptor, Failure, Registry

KINDS = sorted(VasKind, key=lambda k: k.value)
TAGS = ("SAML", "SecPAL", "XACML")


def music_registry(clock=None) -> Registry:
    registry = Registry(clock=clock)
    publish_catalog(registry)
    return registry


def request(*wanted, owner="shop", resource="catalogue", adaptability=Adaptability.GUARDED, direction=Placement.BOTH, preferred=None):
    entries = []
    for w in wanted:
        if isinstance(w, VasKind):
            entries.append(WantedService(w))
        else:
            kind, constraints = w
            entries.append(WantedService(kind, tuple(constraints)))
    return ProfileRequest(owner, resource, tuple(entries), direction, adaptability, preferred)


# -- random catalogues -----------------------------------------------------------


def random_dag(rng: random.Random, members: list[VasKind], density: float = 0.35) -> frozenset:
    perm = list(members)
    rng.shuffle(perm)
    return frozenset((perm[i], perm[j]) for i in range(len(perm)) for j in range(i + 1, len(perm)) if rng.random() < density)


def random_architecture(rng: random.Random, index: int, max_members: int = 5, allow_realizes: bool = True) -> ArchitectureDescription:
    members = rng.sample(KINDS, rng.randint(1, max_members))
    mandatory = frozenset(rng.sample(members, rng.randint(0, min(2, len(members)))))
    optional = frozenset(members) - mandatory
    exclusions = frozenset()
    if len(optional) >= 2 and rng.random() < 0.2:
        exclusions = frozenset({frozenset(rng.sample(sorted(optional, key=lambda k: k.value), 2))})
    realizes = None
    if allow_realizes and mandatory and rng.random() < 0.25:
        outside = [k for k in KINDS if k not in members]
        realizes = rng.choice(outside)
    return ArchitectureDescription(
        id=f"A{index}",
        category=rng.choice(["Audit", "Ops", "Security"]),
        mandatory=mandatory,
        optional=optional,
        order=random_dag(rng, members),
        exclusions=exclusions,
        realizes=realizes,
    )


def random_offer(rng: random.Random) -> tuple[Constraint, ...]:
    out = []
    if rng.random() < 0.5:
        out.append(Constraint.semantics(*rng.sample(TAGS, rng.randint(1, 2))))
    if rng.random() < 0.6:
        out.append(Constraint.max_latency(rng.choice([5, 10, 20, 40])))
    if rng.random() < 0.3:
        out.append(Constraint.min_throughput(rng.choice([50, 100, 200])))
    if rng.random() < 0.2:
        out.append(Constraint.placement(rng.choice(list(Placement))))
    return tuple(out)


def random_capabilities(rng: random.Random, kinds: list[VasKind], max_instances: int = 8) -> list[CapabilityDescriptor]:
    classes: list[tuple[str, VasKind, tuple[Constraint, ...]]] = []
    out = []
    for i in range(rng.randint(1, max_instances)):
        if classes and rng.random() < 0.4:
            class_id, kind, offered = rng.choice(classes)
        else:
            kind = rng.choice(kinds)
            class_id, offered = f"c{len(classes)}-{kind.value}", random_offer(rng)
            classes.append((class_id, kind, offered))
        out.append(
            CapabilityDescriptor(
                instance_id=f"i{i}",
                class_id=class_id,
                kind=kind,
                endpoint=f"sim://x/i{i}",
                offered=offered,
                latency_ms=Fraction(rng.randint(1, 60)),
                failure_rate=Fraction(rng.randint(0, 20), 100),
                setup_steps=(SetupStep.config_push({"n": i}),) if rng.random() < 0.3 else (),
            )
        )
    return out


def random_wanted(rng: random.Random, pool: list[VasKind], max_kinds: int = 4) -> tuple[WantedService, ...]:
    kinds = rng.sample(pool, rng.randint(1, min(max_kinds, len(pool))))
    wanted = []
    for k in kinds:
        cs = []
        if rng.random() < 0.3:
            cs.append(Constraint.semantics(rng.choice(TAGS)))
        if rng.random() < 0.3:
            cs.append(Constraint.max_latency(rng.choice([5, 10, 20, 40, 80])))
        if rng.random() < 0.1:
            cs.append(Constraint.min_throughput(rng.choice([50, 100])))
        wanted.append(WantedService(k, tuple(cs)))
    return tuple(wanted)


def random_instance(rng: random.Random, max_instances: int = 8, max_kinds: int = 4, max_archs: int = 3):
    """(registry, request) with failure history recorded for the request owner."""
    archs = [random_architecture(rng, i) for i in range(rng.randint(1, max_archs))]
    pool = sorted({k for a in archs for k in a.members} | {a.realizes for a in archs if a.realizes}, key=lambda k: k.value)
    caps = random_capabilities(rng, pool, max_instances)
    registry = Registry()
    for a in archs:
        registry.publish_architecture(a)
    for c in caps:
        registry.publish_capability(c)
    for c in caps:
        for _ in range(rng.choice([0, 0, 1, 3, 12])):
            registry.record_outcome("shop", Failure(c.instance_id))
    req = ProfileRequest("shop", "r", random_wanted(rng, pool, max_kinds), adaptability=rng.choice(list(Adaptability)))
    return registry, req


# -- oracles -----------------------------------------------------------------


def oracle_cost(descriptor: CapabilityDescriptor, failures: int) -> Fraction:
    """Cost restated from its definition, without the planner's helpers."""
    return descriptor.latency_ms / 100 + 10 * descriptor.failure_rate + 5 * min(Fraction(1), Fraction(failures, 10))


def brute_force_min_cost(ascm, snapshot, client):
    """Minimum total cost over every full assignment of instances to leaf slots (None if none exists)."""
    leaves = list(ascm.leaves())
    candidates = []
    for slot, binding in leaves:
        assert isinstance(binding, ClassBinding)
        options = [
            d
            for d in snapshot.capabilities.values()
            if d.kind == slot.kind and d.class_id == binding.class_id and constraint_satisfies(d.offered, binding.constraints)
        ]
        candidates.append(options)
    best = None
    for combo in itertools.product(*candidates):
        total = sum((oracle_cost(d, client.failure_count.get(d.instance_id, 0)) for d in combo), Fraction(0))
        if best is None or total < best:
            best = total
    return best


def closure_by_matrix(items, pairs):
    """Warshall's algorithm over an explicit boolean matrix."""
    items = list(items)
    index = {k: i for i, k in enumerate(items)}
    n = len(items)
    reach = [[False] * n for _ in range(n)]
    for a, b in pairs:
        if a in index and b in index:
            reach[index[a]][index[b]] = True
    for k in range(n):
        for i in range(n):
            if reach[i][k]:
                for j in range(n):
                    if reach[k][j]:
                        reach[i][j] = True
    return {(items[i], items[j]) for i in range(n) for j in range(n) if reach[i][j]}


def respects(sequence, pairs, universe) -> bool:
    pos = {k: i for i, k in enumerate(sequence)}
    for a, b in closure_by_matrix(universe, pairs):
        if a in pos and b in pos and pos[a] >= pos[b]:
            return False
    return True


def brute_smallest_extension(items, pairs, universe, key=lambda k: k.value):
    """Lexicographically smallest ordering of ``items`` (by key) respecting the closed order."""
    best = None
    for perm in itertools.permutations(items):
        if respects(perm, pairs, universe):
            keyed = [key(k) for k in perm]
            if best is None or keyed < best[0]:
                best = (keyed, list(perm))
    return None if best is None else best[1]


def qos_of(constraints, kind: ConstraintKind):
    return [c.value for c in constraints if c.kind is kind]
