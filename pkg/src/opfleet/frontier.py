"""Frontier detection on partially explored grids and frontier scoring."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import label as _cc_label

from .world import Cell, OccGrid, FREE, UNKNOWN, NavGrid, RobotClass, ticks_for

DEFAULT_MIN_SIZE = 3

_8CONN = np.ones((3, 3), dtype=int)


@dataclass(frozen=True)
class Frontier:
    """A connected cluster of Free cells bordering Unknown space."""

    representative: Cell
    member_cells: frozenset[Cell]

    @property
    def size(self) -> int:
        return len(self.member_cells)


def frontier_mask(grid: OccGrid) -> np.ndarray:
    """Free cells 8-adjacent to at least one Unknown cell."""
    unknown = grid.cells == UNKNOWN
    free = grid.cells == FREE
    near_unknown = np.zeros_like(unknown)
    h, w = unknown.shape
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dx == 0 and dy == 0:
                continue
            src = unknown[max(0, dy) : h + min(0, dy), max(0, dx) : w + min(0, dx)]
            near_unknown[max(0, -dy) : h + min(0, -dy), max(0, -dx) : w + min(0, -dx)] |= src
    return free & near_unknown


def detect_frontiers(grid: OccGrid, min_size: int = DEFAULT_MIN_SIZE) -> list[Frontier]:
    """Cluster frontier cells into 8-connected components, scanline ordered.

    Components below min_size are discarded; the representative is the
    component centroid snapped to the nearest member cell.
    """
    mask = frontier_mask(grid)
    labels, count = _cc_label(mask, structure=_8CONN)
    out: list[Frontier] = []
    for lbl in range(1, count + 1):
        ys, xs = np.nonzero(labels == lbl)
        if len(xs) < min_size:
            continue
        cx, cy = float(xs.mean()), float(ys.mean())
        best = min(
            zip(xs.tolist(), ys.tolist()),
            key=lambda c: ((c[0] - cx) ** 2 + (c[1] - cy) ** 2, c[1], c[0]),
        )
        members = frozenset((int(x), int(y)) for x, y in zip(xs.tolist(), ys.tolist()))
        out.append(Frontier((int(best[0]), int(best[1])), members))
    out.sort(key=lambda f: (min((y, x) for x, y in f.member_cells)))
    return out


def detect_frontiers_adaptive(grid: OccGrid, min_size: int = DEFAULT_MIN_SIZE) -> list[Frontier]:
    """Speck suppression that never hides the last way forward: when no
    component reaches min_size, the small ones (door gaps etc.) are returned."""
    out = detect_frontiers(grid, min_size)
    if not out and min_size > 1:
        out = detect_frontiers(grid, 1)
    return out


def frontier_cost_default(
    f: Frontier,
    nav: NavGrid,
    cls_i: RobotClass,
    cls_j: RobotClass,
    operator_pos: Cell,
    pos_i: Cell,
    pos_j: Cell,
) -> float:
    """Estimated ticks to reach the frontier from either robot and return to the operator."""
    field = nav.field(f.representative)
    to_op = ticks_for(float(field[operator_pos[1], operator_pos[0]]), cls_i)
    from_i = ticks_for(float(field[pos_i[1], pos_i[0]]), cls_i)
    from_j = ticks_for(float(field[pos_j[1], pos_j[0]]), cls_j)
    return to_op + max(from_i, from_j)


def frontier_cost_prioritized(f: Frontier, nav: NavGrid, cls: RobotClass, targets: list[Cell]) -> float:
    """Sum of travel times from the frontier to every prioritized point."""
    field = nav.field(f.representative)
    total = 0.0
    for p in targets:
        total += ticks_for(float(field[p[1], p[0]]), cls)
    return total


def frontier_cost(
    f: Frontier,
    mode: str,
    nav: NavGrid,
    cls_i: RobotClass,
    cls_j: RobotClass | None = None,
    operator_pos: Cell | None = None,
    pos_i: Cell | None = None,
    pos_j: Cell | None = None,
    priority_points: list[Cell] | None = None,
) -> float:
    if mode == "prioritized":
        return frontier_cost_prioritized(f, nav, cls_i, priority_points or [])
    if mode == "default":
        return frontier_cost_default(f, nav, cls_i, cls_j or cls_i, operator_pos, pos_i, pos_j)
    raise ValueError(f"unknown frontier cost mode {mode!r}")
