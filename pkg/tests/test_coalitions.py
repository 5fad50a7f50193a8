import numpy as np
import pytest
from hypothesis import given, strategies as st

from gsapme.coalitions import (coalition, complement, format_coalition, grand, members, popcounts,
                               size, subsets, check_players)


def test_roundtrip_members():
    assert coalition([0, 2]) == 0b101
    assert members(0b101) == [0, 2]
    assert coalition(5) == 5
    assert members(0) == []


def test_grand_and_complement():
    assert grand(3) == 7
    assert complement(0b001, 3) == 0b110
    assert complement(0, 3) == 7


def test_popcounts_match_bit_count():
    pc = popcounts(6)
    assert pc.tolist() == [m.bit_count() for m in range(64)]
    assert size(0b1011) == 3


def test_subsets_enumerates_all():
    subs = list(subsets(0b1010))
    assert sorted(subs) == [0, 0b0010, 0b1000, 0b1010]


def test_format():
    assert format_coalition(0b101) == "{1,3}"


def test_bad_input():
    with pytest.raises(ValueError):
        coalition([-1])
    with pytest.raises(ValueError):
        coalition(-3)
    with pytest.raises(ValueError):
        check_players(0)


@given(st.sets(st.integers(0, 20)))
def test_roundtrip_property(idx):
    assert members(coalition(idx)) == sorted(idx)


@given(st.integers(1, 12), st.data())
def test_complement_is_involution(d, data):
    mask = data.draw(st.integers(0, grand(d)))
    assert complement(complement(mask, d), d) == mask
    assert mask & complement(mask, d) == 0
