from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import KINDS, brute_smallest_extension, closure_by_matrix, random_dag
from vasgw.model import VasKind
from vasgw.ordering import canonical_order, is_linear_extension, smallest_linear_extension, transitive_closure

K = VasKind
LETTERS = "abcdef"


@st.composite
def dags(draw, universe=LETTERS):
    # pairs only go forward in a drawn permutation, so the relation is acyclic
    perm = draw(st.permutations(list(universe)))
    pairs = set()
    for i in range(len(perm)):
        for j in range(i + 1, len(perm)):
            if draw(st.booleans()) and draw(st.booleans()):
                pairs.add((perm[i], perm[j]))
    return pairs


@given(dags())
@settings(max_examples=200)
def test_closure_matches_warshall(pairs):
    assert transitive_closure(pairs) == closure_by_matrix(LETTERS, pairs)


@given(dags(), st.sets(st.sampled_from(LETTERS), min_size=1))
@settings(max_examples=200)
def test_smallest_extension_matches_permutation_oracle(pairs, items):
    items = sorted(items)
    closed = closure_by_matrix(LETTERS, pairs)
    restricted = {(a, b) for a, b in closed if a in items and b in items}
    got = smallest_linear_extension(items, restricted)
    assert got == brute_smallest_extension(items, restricted, LETTERS, key=str)
    assert is_linear_extension(got, restricted)


def _oracle_canonical(kinds, order):
    """Related kinds first as the lexicographically least valid permutation, the rest by name."""
    closed = closure_by_matrix(KINDS, order)
    related = {k for pair in closed for k in pair if pair[0] in kinds and pair[1] in kinds}
    head = brute_smallest_extension(sorted(related, key=lambda k: k.value), closed, KINDS)
    tail = sorted((k for k in kinds if k not in related), key=lambda k: k.value)
    return head + tail


def test_canonical_order_matches_oracle_on_random_architectures():
    rng = random.Random(17)
    for _ in range(400):
        members = rng.sample(KINDS, rng.randint(1, 6))
        order = random_dag(rng, members)
        kinds = rng.sample(members, rng.randint(1, len(members)))
        got = canonical_order(kinds, order, key=lambda k: k.value)
        assert got == _oracle_canonical(kinds, order)


def test_fixture_orders():
    order = {(K.AUTHENTICATION, K.AUTHORISATION)}
    name = lambda k: k.value  # noqa: E731
    assert canonical_order([K.AUTHORISATION, K.AUTHENTICATION], order, key=name) == [K.AUTHENTICATION, K.AUTHORISATION]
    assert canonical_order([K.AUDIT, K.AUTHORISATION, K.AUTHENTICATION], order, key=name) == [
        K.AUTHENTICATION,
        K.AUTHORISATION,
        K.AUDIT,
    ]


def test_transitive_links_count_even_through_absent_kinds():
    # a before b before c; with b absent, a must still precede c
    order = {("a", "b"), ("b", "c")}
    assert canonical_order(["c", "a"], order) == ["a", "c"]


def test_cycle_rejected():
    with pytest.raises(ValueError):
        smallest_linear_extension("ab", {("a", "b"), ("b", "a")})


def test_is_linear_extension():
    assert is_linear_extension("abc", {("a", "c")})
    assert not is_linear_extension("cba", {("a", "b"), ("b", "c")})
    assert not is_linear_extension("ca", {("a", "b"), ("b", "c")})
