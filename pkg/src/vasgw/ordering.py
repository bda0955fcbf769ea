"""Canonical slot ordering for composition models."""

from __future__ import annotations

import heapq
from collections.abc import Iterable, Sequence
from typing import TypeVar

T = TypeVar("T")


def transitive_closure(pairs: Iterable[tuple[T, T]]) -> set[tuple[T, T]]:
    succ: dict[T, set[T]] = {}
    for a, b in pairs:
        succ.setdefault(a, set()).add(b)
    closure: set[tuple[T, T]] = set()
    for start in list(succ):
        stack = list(succ[start])
        seen: set[T] = set()
        while stack:
            node = stack.pop()
            if node in seen:
                continue
            seen.add(node)
            closure.add((start, node))
            stack.extend(succ.get(node, ()))
    return closure


def smallest_linear_extension(items: Iterable[T], precedes: Iterable[tuple[T, T]], key=str) -> list[T]:
    """Lexicographically smallest topological order of ``items``.

    Greedy Kahn's algorithm with a min-heap: at every step the smallest
    available item is emitted, which yields the lexicographic minimum over all
    linear extensions.  Pairs mentioning items outside ``items`` are ignored.
    Raises ``ValueError`` on a cycle.
    """
    nodes = list(dict.fromkeys(items))
    members = set(nodes)
    indegree = {n: 0 for n in nodes}
    succ: dict[T, list[T]] = {n: [] for n in nodes}
    for a, b in set(precedes):
        if a in members and b in members:
            succ[a].append(b)
            indegree[b] += 1
    heap = [(key(n), i, n) for i, n in enumerate(nodes) if indegree[n] == 0]
    heapq.heapify(heap)
    out: list[T] = []
    while heap:
        _, _, node = heapq.heappop(heap)
        out.append(node)
        for nxt in succ[node]:
            indegree[nxt] -= 1
            if indegree[nxt] == 0:
                heapq.heappush(heap, (key(nxt), nodes.index(nxt), nxt))
    if len(out) != len(nodes):
        raise ValueError("precedence relation has a cycle")
    return out


def canonical_order(kinds: Iterable[T], order: Iterable[tuple[T, T]], key=str) -> list[T]:
    """Order ``kinds`` for an AGCM.

    Kinds related by the (transitively closed) order come first as the smallest
    linear extension; kinds outside the relation follow, sorted by name.
    """
    kinds = list(dict.fromkeys(kinds))
    members = set(kinds)
    relevant = {(a, b) for a, b in transitive_closure(order) if a in members and b in members}
    ordered = {k for pair in relevant for k in pair}
    head = smallest_linear_extension([k for k in kinds if k in ordered], relevant, key=key)
    tail = sorted((k for k in kinds if k not in ordered), key=key)
    return head + tail


def is_linear_extension(sequence: Sequence[T], precedes: Iterable[tuple[T, T]]) -> bool:
    position = {item: i for i, item in enumerate(sequence)}
    for a, b in transitive_closure(precedes):
        if a in position and b in position and position[a] > position[b]:
            return False
    return True
