from __future__ import annotations

import math

import numpy as np
import pytest

from opfleet.chain import (
    Cec,
    Infeasible,
    RelayCandidate,
    accessible_region,
    assign_relays,
    build_cec,
    choose_insertions,
    re_anchor,
    split_team,
)
from opfleet.commmodel import CommParams, quality
from opfleet.world import FREE, OCCUPIED, NavGrid, OccGrid, RobotClass, passable_array

CLS = RobotClass("r", max_speed=1.0)


def margin4_params():
    """Margined quality holds for 4 cells of distance but not 5."""
    return CommParams(q0=90, alpha=4.9, beta=30, threshold=50, chain_margin=19.0)


def corridor(w=20, h=3):
    grid = OccGrid.blank(w, h, fill=FREE)
    nav = NavGrid(passable_array(grid, np.zeros_like(grid.cells), None))
    return grid, nav


def test_build_cec_greedy_indices():
    grid, nav = corridor()
    params = margin4_params()
    cec = build_cec(grid, nav, (0, 1), (18, 1), params)
    assert isinstance(cec, Cec)
    assert cec.anchors[0] == (0, 1) and cec.anchors[-1] == (18, 1)
    assert cec.interior == ((4, 1), (8, 1), (12, 1), (16, 1))
    assert cec.relay_count == 4


def test_build_cec_one_hop():
    grid, nav = corridor()
    params = margin4_params()
    cec = build_cec(grid, nav, (15, 1), (18, 1), params)
    assert cec.anchors == ((15, 1), (18, 1))
    assert cec.relay_count == 0


def test_build_cec_anchor_maximality():
    grid, nav = corridor()
    params = margin4_params()
    cec = build_cec(grid, nav, (0, 1), (18, 1), params)
    path = nav.path((0, 1), (18, 1))
    idx = {c: k for k, c in enumerate(path)}
    bound = params.threshold + params.chain_margin
    anchors = list(cec.anchors)
    for k in range(1, len(anchors) - 1):
        prev = anchors[k - 1]
        here_i = idx[anchors[k]]
        if here_i + 1 < len(path) - 1:
            nxt = path[here_i + 1]
            assert quality(prev, nxt, grid, params) <= bound  # advancing one breaks it


def test_build_cec_no_path():
    grid, nav = corridor()
    grid.cells[:, 10] = OCCUPIED
    nav2 = NavGrid(passable_array(grid, np.zeros_like(grid.cells), None))
    out = build_cec(grid, nav2, (0, 1), (18, 1), margin4_params())
    assert isinstance(out, Infeasible) and out.reason == "no-path"


def test_build_cec_quality_gap():
    # a thick wall slab blocks margined quality across it even along the path
    grid = OccGrid.blank(24, 7, fill=FREE)
    for x in range(8, 16):
        for y in range(7):
            if y != 3:
                grid.cells[y, x] = OCCUPIED
    nav = NavGrid(passable_array(grid, np.zeros_like(grid.cells), None))
    params = CommParams(q0=90, alpha=4.9, beta=200, threshold=50, chain_margin=20.4)
    out = build_cec(grid, nav, (2, 3), (22, 3), params)
    # the corridor keeps line of sight, so this either succeeds along the slit
    # or stalls; with beta huge any wall on the segment kills it
    if isinstance(out, Infeasible):
        assert out.reason == "quality-gap"
    else:
        bound = params.threshold + params.chain_margin
        for a, b in zip(out.anchors, out.anchors[1:]):
            assert quality(a, b, grid, params) > bound


def test_assign_relays_bottleneck():
    grid, nav = corridor()
    params = margin4_params()
    cec = build_cec(grid, nav, (0, 1), (18, 1), params)
    cands = [
        RelayCandidate(10, CLS, 0, (4, 0)),
        RelayCandidate(11, CLS, 0, (8, 0)),
        RelayCandidate(12, CLS, 0, (12, 0)),
        RelayCandidate(13, CLS, 0, (16, 0)),
        RelayCandidate(14, CLS, 0, (2, 2)),
    ]
    nav_by = {c.slot: nav for c in cands}
    out = assign_relays(cec, cands, nav_by, team_size=6)
    assert not isinstance(out, Infeasible)
    assert len(set(out.anchor_robots)) == 4
    assert out.bottleneck == max(out.arrivals)


def test_assign_relays_too_few_robots():
    grid, nav = corridor()
    cec = build_cec(grid, nav, (0, 1), (18, 1), margin4_params())
    out = assign_relays(cec, [], {}, team_size=4)  # needs 4 relays, team of 4
    assert isinstance(out, Infeasible) and out.reason == "too-few-robots"


def test_assign_relays_unreachable_anchor():
    grid, nav = corridor()
    cec = build_cec(grid, nav, (0, 1), (18, 1), margin4_params())
    sealed = OccGrid.blank(20, 3, fill=OCCUPIED)
    nav_blocked = NavGrid(passable_array(sealed, np.zeros_like(sealed.cells), None))
    cands = [RelayCandidate(k, CLS, 0, (k, 0)) for k in range(5)]
    out = assign_relays(cec, cands, {c.slot: nav_blocked for c in cands}, team_size=6)
    assert isinstance(out, Infeasible) and out.reason == "unreachable-anchor"


def test_accessible_region_contains_target_and_matches_scan():
    grid, nav = corridor()
    params = margin4_params()
    cec = build_cec(grid, nav, (0, 1), (18, 1), params)
    region = accessible_region(cec, grid, params)
    assert (0, 1) in region
    for y in range(3):
        for x in range(20):
            p = (x, y)
            expect = max(quality(a, p, grid, params) for a in cec.anchors[1:]) > params.threshold
            assert (p in region) == expect


def test_accessible_region_excludes_far_cells():
    grid = OccGrid.blank(60, 3, fill=FREE)
    nav = NavGrid(passable_array(grid, np.zeros_like(grid.cells), None))
    params = margin4_params()
    cec = build_cec(grid, nav, (40, 1), (48, 1), params)
    region = accessible_region(cec, grid, params)
    assert (0, 1) not in region


def test_split_team_partition():
    chain, ring = split_team([0, 1, 2, 3, 4, 5], relays={1, 3}, target=5)
    assert chain == [1, 3, 5]
    assert ring == [0, 2, 4]
    assert set(chain) | set(ring) == set(range(6))
    assert set(chain) & set(ring) == set()


def test_choose_insertions_prefers_small_wait():
    grid, nav = corridor(30, 3)
    events = [(10, (20, 1), (1, 2)), (16, (20, 1), (2, 3))]
    # robot at (13,1): travel 7 -> waits 3 at the first, 9 at the second
    out = choose_insertions([9], events, {9: (13, 1)}, {9: CLS},
                            {9: nav}, t0=0)
    assert out == [(9, (1, 2), 10)]


def test_re_anchor_fewer_relays_releases_surplus():
    grid, nav = corridor()
    params = margin4_params()
    old = build_cec(grid, nav, (0, 1), (18, 1), params)
    relays = [RelayCandidate(10 + k, CLS, 0, a) for k, a in enumerate(old.interior)]
    out = re_anchor(grid, nav, old, (10, 1), (18, 1), params, relays,
                    {c.slot: nav for c in relays}, team_size=6)
    assert not isinstance(out, Infeasible)
    new_cec, assign, surplus = out
    assert new_cec.relay_count < old.relay_count
    assert assign is not None
    assert len(surplus) == old.relay_count - new_cec.relay_count


def test_re_anchor_more_relays_needs_recruits():
    grid, nav = corridor()
    params = margin4_params()
    old = build_cec(grid, nav, (10, 1), (18, 1), params)
    relays = [RelayCandidate(10 + k, CLS, 0, a) for k, a in enumerate(old.interior)]
    out = re_anchor(grid, nav, old, (0, 1), (18, 1), params, relays,
                    {c.slot: nav for c in relays}, team_size=8)
    assert not isinstance(out, Infeasible)
    new_cec, assign, surplus = out
    assert assign is None and surplus == []
    assert new_cec.relay_count > old.relay_count


def test_re_anchor_within_region_unchanged_semantics():
    grid, nav = corridor()
    params = margin4_params()
    old = build_cec(grid, nav, (0, 1), (18, 1), params)
    region = accessible_region(old, grid, params)
    # a nearby in-region point needs no chain rebuild at all; the caller just
    # drives the target, which the engine handles before calling re_anchor
    assert (1, 1) in region
