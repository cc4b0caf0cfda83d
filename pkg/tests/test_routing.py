from __future__ import annotations

import math
import random

import pytest

from opfleet.routing import (
    bottleneck_assignment,
    brute_force_bottleneck,
    brute_force_tsp,
    tour_length,
    tsp_order,
)


def random_matrix(rng, n):
    pts = [(rng.uniform(0, 50), rng.uniform(0, 50)) for _ in range(n + 2)]
    return [[math.dist(a, b) for b in pts] for a in pts]


def test_tsp_empty_and_single():
    assert tsp_order([[0, 1], [1, 0]]) == []
    m = [[0, 2, 9], [2, 0, 3], [9, 3, 0]]
    assert tsp_order(m) == [1]


def test_tsp_matches_brute_force_small():
    rng = random.Random(0)
    for trial in range(80):
        n = rng.randint(2, 7)
        m = random_matrix(rng, n)
        got = tsp_order(m)
        assert sorted(got) == list(range(1, n + 1))
        best_len, _ = brute_force_tsp(m)
        assert tour_length(m, got) == pytest.approx(best_len)


def test_tsp_heuristic_above_exact_limit():
    rng = random.Random(1)
    m = random_matrix(rng, 15)
    got = tsp_order(m)
    assert sorted(got) == list(range(1, 16))
    # 2-opt should beat a naive identity ordering
    assert tour_length(m, got) <= tour_length(m, list(range(1, 16)))


def test_tsp_deterministic():
    rng = random.Random(2)
    m = random_matrix(rng, 6)
    assert tsp_order(m) == tsp_order([row[:] for row in m])


def test_bottleneck_spec_example():
    w = [[5, 9, 7], [8, 4, 6]]
    assignment, value = bottleneck_assignment(w)
    assert assignment == [0, 1]
    assert value == 5


def test_bottleneck_single_task_argmin():
    w = [[9.0, 3.0, 7.0]]
    assignment, value = bottleneck_assignment(w)
    assert assignment == [1] and value == 3.0


def test_bottleneck_matches_brute_force():
    rng = random.Random(4)
    for trial in range(120):
        t = rng.randint(1, 5)
        a = rng.randint(t, 7)
        costs = [[rng.uniform(0, 40) if rng.random() > 0.15 else math.inf
                  for _ in range(a)] for _ in range(t)]
        got = bottleneck_assignment(costs)
        oracle = brute_force_bottleneck(costs)
        if got is None:
            assert oracle is None
        else:
            assignment, value = got
            assert value == pytest.approx(oracle)
            assert len(set(assignment)) == len(assignment)
            assert max(costs[k][assignment[k]] for k in range(t)) == pytest.approx(value)


def test_bottleneck_lexicographic_tie_break():
    w = [[1.0, 1.0], [1.0, 1.0]]
    assignment, value = bottleneck_assignment(w)
    assert assignment == [0, 1]


def test_bottleneck_infeasible():
    assert bottleneck_assignment([[math.inf, math.inf]]) is None
    assert bottleneck_assignment([[1.0], [1.0]]) is None  # more tasks than agents
