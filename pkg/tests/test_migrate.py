from __future__ import annotations

import numpy as np
import pytest

from conftest import dijkstra_oracle
from opfleet.migrate import (
    convoy_speed,
    feasible_region,
    reachable_bound,
    reachable_budget,
    reseed_order,
)
from opfleet.world import FREE, NavGrid, OccGrid, RobotClass, passable_array


def open_nav(w=20, h=12):
    grid = OccGrid.blank(w, h, fill=FREE)
    return grid, NavGrid(passable_array(grid, np.zeros_like(grid.cells), None))


def test_feasible_region_vacuous_without_events():
    grid, nav = open_nav()
    explored = grid.cells == FREE
    region = feasible_region(nav, explored, (5, 5), [], now=10)
    assert len(region.cells) == 20 * 12


def test_feasible_region_strictest_case():
    grid, nav = open_nav()
    explored = grid.cells == FREE
    region = feasible_region(nav, explored, (5, 5), [(5, 5)], now=10)
    assert region.cells == frozenset({(5, 5)})


def test_feasible_region_messenger_out():
    grid, nav = open_nav()
    explored = grid.cells == FREE
    region = feasible_region(nav, explored, (5, 5), [(9, 9)], now=3, messenger_out=True)
    assert region.cells == frozenset()
    assert region.reason == "messenger-out"


def test_feasible_region_matches_per_cell_oracle():
    import random

    rng = random.Random(1)
    from opfleet.mapgen import random_map

    for seed in range(12):
        truth = random_map(14, 10, seed=seed, wall_density=0.15)
        nav = NavGrid(passable_array(truth.grid, truth.terrain, None))
        free = [(x, y) for y in range(10) for x in range(14)
                if truth.grid.cells[y, x] == FREE]
        op = rng.choice(free)
        basis = rng.sample(free, min(3, len(free)))
        explored = truth.grid.cells == FREE
        region = feasible_region(nav, explored, op, basis, now=0)
        for cell in free:
            expect = all(
                dijkstra_oracle(truth.grid, b, cell) <= dijkstra_oracle(truth.grid, b, op) + 1e-9
                for b in basis
            )
            assert (cell in region.cells) == expect, (seed, cell)


def test_reachable_budget_examples():
    assert reachable_budget(120, 4, 40, 1.0) == pytest.approx(272.5)
    assert reachable_budget(0, 4, 40, 1.0) == pytest.approx(160.0)
    assert reachable_budget(100, 1, 40, 1.0) == pytest.approx(50.0 + 40.0)


def test_reachable_bound_is_disk_on_open_map():
    grid, nav = open_nav(30, 30)
    cells = reachable_bound(nav, (15, 15), t_h=10, n_robots=2, d_com=5, v_max=1.0)
    budget = reachable_budget(10, 2, 5, 1.0)
    assert (15, 15) in cells
    for (x, y) in cells:
        assert dijkstra_oracle(grid, (15, 15), (x, y)) <= budget + 1e-9


def test_convoy_speed():
    classes = [RobotClass("a", max_speed=1.0), RobotClass("b", max_speed=0.5)]
    assert convoy_speed(classes) == pytest.approx(0.4)


def test_reseed_order_trigger_successor_first():
    order = reseed_order([0, 1, 2, 3], trigger=0)
    assert order[0] == ((0, 1), (3, 0))       # successor edge first
    assert order[1] == ((0, 1), (1, 2))       # others predecessor-first
    assert order[2] == ((1, 2), (2, 3))
    assert order[3] == ((2, 3), (3, 0))


def test_reseed_order_every_edge_twice():
    order = reseed_order([4, 7, 9], trigger=7)
    seen = [e for pair in order.values() for e in pair]
    for edge in [(4, 7), (7, 9), (9, 4)]:
        assert seen.count(edge) == 2
