from __future__ import annotations

import heapq
import math

import pytest

from opfleet.world import Cell, GroundTruth, OccGrid, FREE, OCCUPIED, UNKNOWN, parse_map


def w1_rows() -> list[str]:
    return ["".join("#" if (x == 10 and y != 5) else "." for x in range(20))
            for y in range(10)]


@pytest.fixture
def w1() -> GroundTruth:
    return parse_map(["20 10 1.0"] + w1_rows())


def w1_scenario(t_h: int = 60, **over) -> dict:
    raw = {
        "name": "w1",
        "map_inline": ["20 10 1.0"] + w1_rows(),
        "teams": [{"id": 0, "operator_start": [1, 5], "T_h": t_h,
                   "robots": [{"id": 0, "start": [2, 5]}, {"id": 1, "start": [2, 4]}]}],
        "T_c": 300, "seed": 7, "tick_limit": 800, "sense_range": 4,
    }
    raw.update(over)
    return raw


def dijkstra_oracle(grid: OccGrid, a: Cell, b: Cell, passable=None) -> float:
    """Plain heap Dijkstra, 8-connected, sqrt(2) diagonals; inf if unreachable."""
    if passable is None:
        passable = lambda c: grid.at(c) == FREE
    if not passable(a) or not passable(b):
        return math.inf
    dist = {a: 0.0}
    heap = [(0.0, a)]
    while heap:
        d, cur = heapq.heappop(heap)
        if cur == b:
            return d
        if d > dist.get(cur, math.inf):
            continue
        x, y = cur
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                if dx == 0 and dy == 0:
                    continue
                n = (x + dx, y + dy)
                if not grid.in_bounds(n) or not passable(n):
                    continue
                nd = d + (math.sqrt(2) if dx and dy else 1.0)
                if nd < dist.get(n, math.inf) - 1e-12:
                    dist[n] = nd
                    heapq.heappush(heap, (nd, n))
    return math.inf
