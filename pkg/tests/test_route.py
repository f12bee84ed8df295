import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from persistmon import oracles, route
from persistmon.errors import ContractError


def test_collinear():
    p = route.route([0.0, 0.0], [[3.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
    np.testing.assert_array_equal(p.stops, [[1.0, 0.0], [2.0, 0.0], [3.0, 0.0]])
    assert p.length == pytest.approx(3.0)


def test_single_waypoint():
    p = route.route([0.0, 0.0], [[3.0, 4.0]])
    assert p.length == pytest.approx(5.0)


def test_empty():
    with pytest.raises(ContractError):
        route.route([0.0, 0.0], np.empty((0, 2)))


def test_quality_against_exhaustive():
    hits, worst = 0, 1.0
    for t in range(100):
        rng = np.random.default_rng([5, t])
        k = int(rng.integers(1, 9))
        origin, W = rng.uniform(0, 100, 2), rng.uniform(0, 100, (k, 2))
        got = route.route(origin, W).length
        _, best = oracles.exhaustive_route(origin, W)
        hits += got <= best * (1 + 1e-9)
        worst = max(worst, got / best)
    assert worst <= 1.05
    assert hits >= 90


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 9))
def test_permutation_length_and_heuristic_bound(seed, k):
    rng = np.random.default_rng(seed)
    origin, W = rng.uniform(0, 50, 2), rng.uniform(0, 50, (k, 2))
    p = route.route(origin, W)
    assert sorted(map(tuple, p.stops)) == sorted(map(tuple, W))
    assert p.length == pytest.approx(route.path_length(origin, p.stops), abs=1e-9)
    assert p.length <= route.nearest_neighbor_length(origin, W) + 1e-9
    again = route.route(origin, W)
    np.testing.assert_array_equal(again.stops, p.stops)


def test_exhaustive_oracle_small():
    origin, W = np.zeros(2), np.array([[0.0, 5.0], [0.0, 1.0], [0.0, 3.0]])
    best = min(route.path_length(origin, W[list(o)]) for o in itertools.permutations(range(3)))
    assert oracles.exhaustive_route(origin, W)[1] == pytest.approx(best)


def test_path_text_round_trip():
    p = route.route([0.5, 1.0], [[3.0, 4.0], [10.0, 2.0]])
    back = route.Path.from_text(p.to_text())
    np.testing.assert_array_equal(back.origin, p.origin)
    np.testing.assert_array_equal(back.stops, p.stops)
    assert back.length == p.length


def test_leg_same_point():
    np.testing.assert_array_equal(route.rasterize_leg([4.0, 4.0], [4.0, 4.0], 3), [[4.0, 4.0]])


def test_leg_axis_aligned():
    cells = route.rasterize_leg([0.0, 0.0], [0.0, 9.0], 1)
    np.testing.assert_array_equal(cells, [[0.0, c] for c in range(10)])


def test_leg_stride_keeps_endpoint():
    cells = route.rasterize_leg([0.0, 0.0], [0.0, 9.0], 4)
    np.testing.assert_array_equal(cells, [[0, 0], [0, 4], [0, 8], [0, 9]])


@settings(max_examples=100, deadline=None)
@given(st.tuples(st.integers(-30, 30), st.integers(-30, 30)),
       st.tuples(st.integers(-30, 30), st.integers(-30, 30)))
def test_leg_is_eight_connected(a, b):
    cells = route.rasterize_leg(a, b, 1)
    steps = np.abs(np.diff(cells, axis=0)).reshape(-1, 2)
    assert np.all(steps.max(axis=1) == 1)
    np.testing.assert_array_equal(cells[0], a)
    np.testing.assert_array_equal(cells[-1], b)
    assert len(cells) == max(abs(b[0] - a[0]), abs(b[1] - a[1])) + 1


@settings(max_examples=60, deadline=None)
@given(st.tuples(st.integers(-30, 30), st.integers(-30, 30)),
       st.tuples(st.integers(-30, 30), st.integers(-30, 30)), st.integers(1, 6))
def test_leg_no_repeats(a, b, stride):
    cells = route.rasterize_leg(a, b, stride)
    assert not np.any(np.all(np.diff(cells, axis=0) == 0, axis=1))


def test_bad_stride():
    with pytest.raises(ContractError):
        route.rasterize_leg([0, 0], [1, 1], 0)
