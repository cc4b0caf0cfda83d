from __future__ import annotations

import math
import random

import numpy as np
import pytest

from conftest import dijkstra_oracle
from opfleet.mapgen import random_map
from opfleet.world import (
    FREE,
    OCCUPIED,
    UNKNOWN,
    InvalidPoseError,
    OccGrid,
    RobotClass,
    WorldError,
    nav_time,
    parse_map,
    path_length,
    sense,
    shortest_path,
)


def test_sense_disk_count(w1):
    seen = sense((5, 5), w1, 3)
    assert len(seen) == 29
    assert all(s == FREE for s in seen.values())


def test_sense_occlusion(w1):
    seen = sense((9, 2), w1, 2)
    assert seen[(10, 2)] == OCCUPIED
    assert (11, 2) not in seen


def test_sense_zero_range(w1):
    assert sense((5, 5), w1, 0) == {(5, 5): FREE}


def test_sense_invalid_pose(w1):
    with pytest.raises(InvalidPoseError):
        sense((10, 2), w1, 3)
    with pytest.raises(InvalidPoseError):
        sense((40, 2), w1, 3)


def test_sense_monotone_along_trajectory(w1):
    known = set()
    for pose in [(2, 5), (4, 5), (6, 5), (8, 5)]:
        now = set(sense(pose, w1, 3))
        union = known | now
        assert len(union) >= len(known)
        known = union


def test_shortest_path_through_door(w1):
    p = shortest_path(w1.grid, (1, 5), (19, 5), w1.terrain)
    assert p is not None
    assert (10, 5) in p
    assert path_length(p) == pytest.approx(18.0)


def test_shortest_path_identity(w1):
    assert shortest_path(w1.grid, (3, 3), (3, 3), w1.terrain) == [(3, 3)]


def test_shortest_path_disconnected():
    rows = ["5 3 1.0", "..#..", "..#..", "..#.."]
    truth = parse_map(rows)
    assert shortest_path(truth.grid, (0, 0), (4, 0), truth.terrain) is None


def test_shortest_path_matches_dijkstra_oracle():
    rng = random.Random(42)
    for trial in range(100):
        truth = random_map(18, 14, seed=trial, wall_density=0.18)
        free = [(x, y) for y in range(14) for x in range(18)
                if truth.grid.cells[y, x] == FREE]
        a, b = rng.choice(free), rng.choice(free)
        p = shortest_path(truth.grid, a, b, truth.terrain)
        oracle = dijkstra_oracle(truth.grid, a, b)
        if p is None:
            assert math.isinf(oracle)
        else:
            assert path_length(p) == pytest.approx(oracle, abs=1e-9)
            assert all(truth.grid.at(c) == FREE for c in p)


def test_nav_time_examples(w1):
    slow = RobotClass("r1", max_speed=1.0)
    fast = RobotClass("r2", max_speed=2.0)
    assert nav_time(slow, (1, 5), (19, 5), w1.grid, w1.terrain) == 18
    assert nav_time(fast, (1, 5), (19, 5), w1.grid, w1.terrain) == 9
    assert nav_time(slow, (4, 4), (4, 4), w1.grid, w1.terrain) == 0


def test_nav_time_mask_exclusion():
    rows = ["5 1 1.0", "..^.."]
    truth = parse_map(rows)
    ugv = RobotClass("ugv", traversal_mask=frozenset({"open", "low"}))
    uav = RobotClass("uav", traversal_mask=frozenset({"open", "window"}))
    assert math.isinf(nav_time(ugv, (0, 0), (4, 0), truth.grid, truth.terrain))
    assert nav_time(uav, (0, 0), (4, 0), truth.grid, truth.terrain) == 4


def test_nav_time_battery_limit(w1):
    cls = RobotClass("b", max_speed=1.0, battery_capacity=10.0, drain_per_cell=1.0)
    assert math.isinf(nav_time(cls, (1, 5), (19, 5), w1.grid, w1.terrain))
    ok = RobotClass("b2", max_speed=1.0, battery_capacity=100.0, drain_per_cell=1.0)
    assert nav_time(ok, (1, 5), (19, 5), w1.grid, w1.terrain) == 18


def test_path_avoids_unknown():
    grid = OccGrid.blank(6, 3, fill=UNKNOWN)
    grid.cells[1, :] = FREE
    grid.cells[0, 2] = FREE
    p = shortest_path(grid, (0, 1), (5, 1))
    assert p is not None
    assert all(grid.at(c) != UNKNOWN for c in p)


def test_map_roundtrip(w1):
    from opfleet.world import dump_map

    text = dump_map(w1)
    again = parse_map(text.splitlines())
    assert np.array_equal(again.grid.cells, w1.grid.cells)


def test_map_rejects_reserved_char():
    with pytest.raises(WorldError):
        parse_map(["3 1 1.0", ".?."])


def test_robot_class_validation():
    with pytest.raises(WorldError):
        RobotClass("bad", max_speed=0)
    with pytest.raises(WorldError):
        RobotClass("bad2", drain_per_cell=-1)
