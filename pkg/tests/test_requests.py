from __future__ import annotations

import numpy as np
import pytest

from opfleet.requests import (
    RegionPriority,
    Request,
    RequestError,
    RequestKind,
    apply_region_priority,
    rasterize_polygon,
    schedule_confirmation_return,
    validate_submission,
)
from opfleet.world import FREE, NavGrid, OccGrid, RobotClass, passable_array

CLS = RobotClass("r", max_speed=1.0)


def _req(kind, issuer, args=None, team=0):
    return Request(1, kind, issuer, 0, team, args or {})


def test_authorization_rules():
    ok_free = {(1, 1)}
    validate_submission(_req(RequestKind.XI3, "operator:0", {"target": (1, 1)}), ok_free, 4)
    with pytest.raises(RequestError) as e:
        validate_submission(_req(RequestKind.XI3, "robot:2", {"target": (1, 1)}), ok_free, 4)
    assert e.value.reason == "unauthorized"
    with pytest.raises(RequestError):
        validate_submission(_req(RequestKind.XI5, "operator:0"), ok_free, 4)


def test_xi3_unknown_target_and_messenger_out():
    with pytest.raises(RequestError) as e:
        validate_submission(_req(RequestKind.XI3, "operator:0", {"target": (9, 9)}), set(), 4)
    assert e.value.reason == "unknown-target"
    with pytest.raises(RequestError) as e:
        validate_submission(_req(RequestKind.XI3, "operator:0", {"target": (1, 1)}),
                            {(1, 1)}, 4, messenger_out=True)
    assert e.value.reason == "messenger-out"


def test_xi4_too_few_robots():
    with pytest.raises(RequestError) as e:
        validate_submission(_req(RequestKind.XI4, "operator:0", {"target": (1, 1)}),
                            {(1, 1)}, team_size=4, relay_need=5)
    assert e.value.reason == "too-few-robots"
    validate_submission(_req(RequestKind.XI4, "operator:0", {"target": (1, 1)}),
                        {(1, 1)}, team_size=4, relay_need=3)


def test_schedule_confirmation_return_exact_slack():
    grid = OccGrid.blank(20, 3, fill=FREE)
    nav = NavGrid(passable_array(grid, np.zeros_like(grid.cells), None))
    # carrier 1 attends (10,1)@t=10 then (10,1)@t=30; operator at (5,1):
    # detour 5 + 5 = 10, 10 + 10 <= 30 holds exactly at the first slot
    events = [(10, (10, 1), 1), (30, (10, 1), 1)]
    slot = schedule_confirmation_return(events, (5, 1), {1: nav}, {1: CLS})
    assert slot == 0


def test_schedule_confirmation_return_no_slack():
    grid = OccGrid.blank(20, 3, fill=FREE)
    nav = NavGrid(passable_array(grid, np.zeros_like(grid.cells), None))
    events = [(10, (10, 1), 1), (12, (10, 1), 1)]
    assert schedule_confirmation_return(events, (5, 1), {1: nav}, {1: CLS}) is None


def test_schedule_confirmation_return_smallest_index():
    grid = OccGrid.blank(30, 3, fill=FREE)
    nav = NavGrid(passable_array(grid, np.zeros_like(grid.cells), None))
    events = [(10, (10, 1), 1), (40, (10, 1), 1), (80, (10, 1), 1)]
    slot = schedule_confirmation_return(events, (11, 1), {1: nav}, {1: CLS})
    assert slot == 0


def test_rasterize_polygon_square_and_degenerate():
    cells = rasterize_polygon([(2, 2), (5, 2), (5, 5), (2, 5)], 10, 10)
    assert (3, 3) in cells and (2, 2) in cells and (6, 3) not in cells
    assert rasterize_polygon([(4, 4)], 10, 10) == frozenset({(4, 4)})
    line = rasterize_polygon([(1, 1), (3, 1)], 10, 10)
    assert line == frozenset({(1, 1), (2, 1), (3, 1)})


def test_apply_region_priority_folds():
    a = RegionPriority(plus_points=((1, 1),), minus_cells=frozenset({(5, 5)}))
    b = RegionPriority(plus_points=((2, 2),))
    merged = apply_region_priority([a, b])
    assert merged.plus_points == ((1, 1), (2, 2))
    assert (5, 5) in merged.minus_cells
    assert apply_region_priority([]).empty()
