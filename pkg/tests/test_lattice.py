from itertools import product

from hypothesis import given, settings
from hypothesis import strategies as st

from perfektor.lattice import (
    ball_offsets,
    ball_volume,
    l1_ball,
    l1_norm,
    pi_map,
    translate,
    translate_set,
)

sites_1d = st.tuples(st.integers(-20, 20))
dims = st.integers(1, 3)


def site_strategy(d):
    return st.tuples(*([st.integers(-10, 10)] * d))


def test_empty_ball_at_minus_one():
    assert l1_ball((0,), -1) == frozenset()
    assert ball_volume(1, -1) == 0


def test_zero_radius_ball_is_center():
    assert l1_ball((0, 0, 0), 0) == {(0, 0, 0)}


def test_cross_shape_in_2d():
    ball = l1_ball((0, 0), 1)
    assert ball == {(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)}
    assert len(ball) == 5


def test_volume_examples():
    assert ball_volume(1, 3) == 7
    assert ball_volume(2, 0) == 1
    assert ball_volume(2, 2) == 13


def test_volume_closed_forms():
    for k in range(0, 9):
        assert ball_volume(1, k) == 2 * k + 1
        assert ball_volume(2, k) == 2 * k * k + 2 * k + 1


def test_volume_matches_enumeration():
    for d in (1, 2, 3):
        for k in range(-1, 9):
            assert ball_volume(d, k) == len(l1_ball((0,) * d, k))


def test_pi_map_examples():
    assert pi_map((0,), -1, {(0,)}) == frozenset()
    assert pi_map((5,), 2, {(0,)}) == {(0,)}
    assert pi_map((0,), 1, {(0,), (3,)}) == {(-1,), (0,), (1,), (3,)}


@settings(derandomize=True, deadline=None, max_examples=60)
@given(dims.flatmap(lambda d: st.tuples(site_strategy(d), st.integers(-1, 5))))
def test_ball_monotone_in_radius(args):
    site, k = args
    assert l1_ball(site, k) <= l1_ball(site, k + 1)


@settings(derandomize=True, deadline=None, max_examples=60)
@given(dims.flatmap(lambda d: st.tuples(site_strategy(d), site_strategy(d),
                                        st.integers(-1, 4))))
def test_ball_translation_equivariance(args):
    site, v, k = args
    assert l1_ball(translate(site, v), k) == translate_set(l1_ball(site, k), v)


@settings(derandomize=True, deadline=None, max_examples=60)
@given(dims.flatmap(lambda d: st.tuples(
    site_strategy(d), site_strategy(d), st.integers(-1, 3),
    st.sets(site_strategy(d), max_size=6))))
def test_pi_map_translation_equivariance(args):
    i, v, k, sites = args
    lhs = pi_map(translate(i, v), k, translate_set(sites, v))
    assert lhs == translate_set(pi_map(i, k, sites), v)


@settings(derandomize=True, deadline=None, max_examples=60)
@given(site_strategy(2), st.integers(-1, 3), st.sets(site_strategy(2), max_size=6))
def test_pi_map_identity_and_superset(i, k, sites):
    if i not in sites:
        assert pi_map(i, k, sites) == frozenset(sites)
    result = pi_map(i, k, sites)
    assert result >= frozenset(sites) - {i}


def test_offsets_are_sorted_and_complete():
    for d in (1, 2):
        for k in range(0, 5):
            offs = ball_offsets(d, k)
            assert list(offs) == sorted(offs)
            assert all(l1_norm(o) <= k for o in offs)
            brute = {v for v in product(range(-k, k + 1), repeat=d) if l1_norm(v) <= k}
            assert set(offs) == brute
