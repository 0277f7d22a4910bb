import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from pfclus.core import (
    MalformedInputError,
    assign_nearest,
    compute_metrics,
    distance,
    evaluate_centers,
    local_objective_cost,
    metrics_from_costs,
)


def brute_nearest_cost(X, C, l):
    """Oracle: cheapest total assignment by enumerating every labelling."""
    best = math.inf
    for labels in itertools.product(range(len(C)), repeat=len(X)):
        cost = 0.0
        for x, j in zip(X, labels):
            # d(x, c)^l with d the l-norm is just the sum of |diff|^l
            cost += sum(abs(a - b) ** l for a, b in zip(x, C[j]))
        best = min(best, cost)
    return best


# distance


def test_distance_345():
    assert distance((0, 0), (3, 4), 2) == 5.0


def test_distance_identity_l1():
    assert distance((1, 2), (1, 2), 1) == 0.0


def test_distance_l1_coordinate_sum():
    assert distance((0, 0), (1, 1), 1) == 2.0


def test_distance_dimension_mismatch():
    with pytest.raises(MalformedInputError):
        distance((0, 0), (1, 1, 1))


finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 5).flatmap(lambda h: st.tuples(
    arrays(np.float64, h, elements=finite), arrays(np.float64, h, elements=finite))),
    st.sampled_from([1, 1.5, 2, 3]))
def test_distance_metric_axioms(pair, l):
    x, y = pair
    d = distance(x, y, l)
    assert d >= 0
    assert d == distance(y, x, l)
    assert (d == 0) == bool(np.array_equal(x, y))


# assign_nearest


def test_assign_by_inspection():
    assert assign_nearest([(0, 0), (10, 0)], [(1, 0), (9, 0)], 2).tolist() == [0, 1]


def test_assign_tie_lowest_index():
    assert assign_nearest([(5, 0)], [(0, 0), (10, 0)], 2).tolist() == [0]


def test_assign_identity():
    assert assign_nearest([(0, 0)], [(0, 0)]).tolist() == [0]


def test_assign_empty_centers():
    with pytest.raises(MalformedInputError):
        assign_nearest([(0, 0)], np.empty((0, 2)))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10_000), st.integers(-6, 6))
def test_assign_scale_invariant(seed, exp):
    # power-of-two scales are exact in binary floating point
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(15, 3))
    C = rng.normal(size=(4, 3))
    s = 2.0 ** exp
    for l in (1, 2):
        assert np.array_equal(assign_nearest(X, C, l), assign_nearest(s * X, s * C, l))


# local_objective_cost


def test_cost_l2_hand():
    assert local_objective_cost([(0, 0), (2, 0)], [(1, 0)], [0, 0], 2) == 2.0


def test_cost_l1_hand():
    assert local_objective_cost([(0, 0), (2, 0)], [(1, 0)], [0, 0], 1) == 2.0


def test_cost_zero():
    for l in (1, 2, 3):
        assert local_objective_cost([(3, 3)], [(3, 3)], [0], l) == 0.0


def test_cost_inconsistent_assignment():
    with pytest.raises(MalformedInputError):
        local_objective_cost([(0, 0), (1, 1)], [(0, 0)], [0])


@pytest.mark.parametrize("seed", range(30))
def test_nearest_assignment_beats_every_alternative(seed):
    rng = np.random.default_rng(seed)
    n, k = int(rng.integers(1, 7)), int(rng.integers(1, 4))
    X = rng.integers(-5, 6, size=(n, 2)).astype(float)
    C = rng.integers(-5, 6, size=(k, 2)).astype(float)
    for l in (1, 2):
        got = local_objective_cost(X, C, assign_nearest(X, C, l), l)
        assert got <= brute_nearest_cost(X.tolist(), C.tolist(), l) + 1e-12


# compute_metrics


def test_metrics_two_clients():
    row = metrics_from_costs([1.0, 3.0])
    assert (row.mu, row.sigma, row.max) == (2.0, 1.0, 3.0)


def test_metrics_single_client():
    row = metrics_from_costs([5.0])
    assert (row.mu, row.sigma, row.max) == (5.0, 0.0, 5.0)


def test_metrics_equal_costs():
    row = metrics_from_costs([0.75, 0.75, 0.75])
    assert (row.mu, row.sigma, row.max) == (0.75, 0.0, 0.75)


def test_compute_metrics_from_triples():
    a = (np.array([[0.0, 0.0], [2.0, 0.0]]), np.array([[1.0, 0.0]]), np.array([0, 0]))
    b = (np.array([[0.0, 0.0]]), np.array([[0.0, 3.0]]), np.array([0]))
    row = compute_metrics([a, b], 2)
    # per-point costs 1.0 and 9.0
    assert row.per_client_mu == (1.0, 9.0)
    assert row.mu == 5.0 and row.sigma == 4.0 and row.max == 9.0 and row.Z == 2


def test_compute_metrics_rejects_empty_client():
    with pytest.raises(MalformedInputError):
        compute_metrics([(np.empty((0, 2)), np.zeros((1, 2)), np.empty(0, dtype=int))])


def test_evaluate_centers_uses_nearest():
    clients = [np.array([[0.0], [10.0]]), np.array([[9.0]])]
    row = evaluate_centers(clients, np.array([[0.0], [10.0]]), 2)
    assert row.per_client_mu == (0.0, 1.0)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 1e6, allow_nan=False), min_size=1, max_size=40))
def test_metrics_match_straightforward_pass(costs):
    row = metrics_from_costs(costs)
    total = 0.0
    for c in costs:
        total += c
    mu = total / len(costs)
    var = 0.0
    for c in costs:
        var += (c - mu) ** 2
    assert row.mu == mu
    assert abs(row.sigma - math.sqrt(var / len(costs))) <= 1e-12 * max(1.0, row.sigma)
    assert row.max == max(costs)
