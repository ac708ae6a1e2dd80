import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from zrp import StateIndex, StateSpaceCapError
from zrp.states import enumerate_states, num_states


def test_size_n4_m40():
    assert num_states(4, 40) == 12341


def test_rank_order_two_sites():
    idx = StateIndex(2, 2)
    assert idx.states().tolist() == [[2, 0], [1, 1], [0, 2]]


def test_extremes_rank_first_and_last():
    idx = StateIndex(4, 5)
    assert idx.rank([5, 0, 0, 0]) == 0
    assert idx.rank([0, 0, 0, 5]) == idx.size - 1


def test_cap_is_enforced():
    with pytest.raises(StateSpaceCapError):
        StateIndex(10, 40, cap=1000)


def test_states_are_read_only():
    with pytest.raises(ValueError):
        StateIndex(3, 3).states()[0, 0] = 1


@pytest.mark.parametrize("n,m", [(1, 4), (2, 0), (3, 5), (5, 3), (6, 6)])
def test_enumeration_matches_rank(n, m):
    S = enumerate_states(n, m)
    assert S.shape == (num_states(n, m), n)
    assert np.all(S.sum(axis=1) == m)
    assert np.array_equal(StateIndex(n, m).rank_many(S), np.arange(S.shape[0]))
    # strictly decreasing in lexicographic order
    assert all(tuple(a) > tuple(b) for a, b in zip(S[:-1], S[1:]))


@given(st.integers(1, 7), st.integers(0, 12), st.data())
def test_rank_unrank_round_trip(n, m, data):
    idx = StateIndex(n, m)
    i = data.draw(st.integers(0, idx.size - 1))
    x = idx.unrank(i)
    assert x.sum() == m and np.all(x >= 0)
    assert idx.rank(x) == i


@given(st.lists(st.integers(0, 6), min_size=2, max_size=6))
def test_rank_of_any_composition(x):
    idx = StateIndex(len(x), sum(x), cap=10**7)
    assert np.array_equal(idx.unrank(idx.rank(x)), x)
    assert idx.size == math.comb(sum(x) + len(x) - 1, len(x) - 1)
