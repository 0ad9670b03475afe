import itertools

import pytest
from hypothesis import given
from hypothesis import strategies as st

from dualfilter.multiindex import (
    IndexSet, add, as_multiindex, leq, lower_set, singleton_lower_size, sub, translate,
)


def brute_lower(lam):
    lam = [tuple(m) for m in lam]
    K = len(lam[0])
    top = [max(m[j] for m in lam) for j in range(K)]
    return {n for n in itertools.product(*(range(v + 1) for v in top)) if any(leq(n, m) for m in lam)}


@pytest.mark.parametrize("m, n, expected", [
    ((0, 0), (3, 1), True),
    ((2, 0), (1, 5), False),
    ((1, 1), (1, 1), True),
])
def test_product_order(m, n, expected):
    assert leq(m, n) is expected


def test_order_rejects_dimension_mismatch():
    with pytest.raises(ValueError):
        leq((1,), (1, 2))


def test_as_multiindex_validates():
    assert as_multiindex(3) == (3,)
    assert as_multiindex([1, 2]) == (1, 2)
    with pytest.raises(ValueError):
        as_multiindex((1, -1))
    with pytest.raises(ValueError):
        as_multiindex((1.5,))


def test_add_and_sub_roundtrip():
    assert add((1, 2), (3, 0)) == (4, 2)
    assert sub((4, 2), (3, 0)) == (1, 2)
    with pytest.raises(ValueError):
        sub((1, 2), (2, 0))


@pytest.mark.parametrize("lam, expected", [
    ([(2,)], [(0,), (1,), (2,)]),
    ([(1, 1)], [(0, 0), (0, 1), (1, 0), (1, 1)]),
    ([(2, 0), (0, 1)], [(0, 0), (1, 0), (2, 0), (0, 1)]),
])
def test_lower_set_examples(lam, expected):
    assert lower_set(lam) == IndexSet(expected)


def test_lower_set_of_empty_set_raises():
    with pytest.raises(ValueError):
        lower_set([])


def test_translate_examples():
    assert translate(IndexSet([(0,), (1,)]), (2,)) == IndexSet([(2,), (3,)])
    lam = IndexSet([(1, 0), (0, 3)])
    assert translate(lam, (0, 0)) == lam
    assert lower_set(translate(lower_set([(1, 0)]), (0, 1))) == lower_set([(1, 1)])
    with pytest.raises(ValueError):
        translate(lam, (1,))


@pytest.mark.parametrize("m, size", [((0, 0), 1), ((3,), 4), ((2, 1, 4), 30)])
def test_singleton_lower_size(m, size):
    assert singleton_lower_size(m) == size
    assert len(lower_set([m])) == size


def test_index_set_is_sorted_and_deduplicated():
    s = IndexSet([(1, 0), (0, 2), (1, 0)])
    assert s.elements == ((0, 2), (1, 0))
    assert (0, 2) in s and (2, 2) not in s
    assert s.dim == 2
    with pytest.raises(ValueError):
        IndexSet([(1,), (1, 2)])


def index_sets(max_dim=3, max_val=4, max_size=5):
    return st.integers(1, max_dim).flatmap(lambda k: st.lists(
        st.tuples(*[st.integers(0, max_val)] * k), min_size=1, max_size=max_size))


@given(index_sets())
def test_lower_set_matches_enumeration(lam):
    assert set(lower_set(lam)) == brute_lower(lam)


@given(index_sets())
def test_lower_set_is_idempotent_and_contains_input(lam):
    g = lower_set(lam)
    assert lower_set(g) == g
    assert IndexSet(lam) <= g


@given(index_sets().flatmap(lambda lam: st.tuples(
    st.just(lam), st.tuples(*[st.integers(0, 4)] * len(lam[0])))))
def test_lower_set_commutes_with_translation(args):
    lam, m = args
    lhs = lower_set(translate(lower_set(lam), m))
    rhs = lower_set(translate(IndexSet(lam), m))
    assert lhs == rhs
