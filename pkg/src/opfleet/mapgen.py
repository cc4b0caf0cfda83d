"""Seeded random workspace generation for batch runs and test suites."""

from __future__ import annotations

import random

import numpy as np

from .world import Cell, GroundTruth, OccGrid, FREE, OCCUPIED, parse_map


def random_map(
    width: int,
    height: int,
    seed: int,
    wall_density: float = 0.12,
    resolution_m: float = 1.0,
) -> GroundTruth:
    """Random rooms-and-blobs map whose free space is one connected component.

    Obstacle blobs are dropped at random and any disconnected free pocket is
    carved open toward the main component, so every free cell stays reachable.
    """
    rng = random.Random(seed)
    cells = np.full((height, width), FREE, dtype=np.int8)
    n_blobs = max(1, int(wall_density * width * height / 9))
    for _ in range(n_blobs):
        cx, cy = rng.randrange(width), rng.randrange(height)
        w = rng.randint(1, max(2, width // 8))
        h = rng.randint(1, max(2, height // 8))
        for y in range(cy, min(height, cy + h)):
            for x in range(cx, min(width, cx + w)):
                cells[y, x] = OCCUPIED
    # keep a clear corner for team starts
    cells[0:4, 0:4] = FREE
    _connect_free_space(cells, rng)
    terrain = np.where(cells == FREE, 0, -1).astype(np.int8)
    return GroundTruth(OccGrid(width, height, cells, resolution_m), terrain)


def _connect_free_space(cells: np.ndarray, rng: random.Random) -> None:
    height, width = cells.shape
    from scipy.ndimage import label

    while True:
        labels, count = label(cells == FREE, structure=np.ones((3, 3), dtype=int))
        if count <= 1:
            return
        sizes = [(int((labels == k).sum()), k) for k in range(1, count + 1)]
        sizes.sort(reverse=True)
        main = sizes[0][1]
        other = sizes[1][1]
        ys, xs = np.nonzero(labels == other)
        oy, ox = int(ys[0]), int(xs[0])
        mys, mxs = np.nonzero(labels == main)
        d = (mxs - ox) ** 2 + (mys - oy) ** 2
        k = int(np.argmin(d))
        ty, tx = int(mys[k]), int(mxs[k])
        # carve an L-shaped corridor
        x, y = ox, oy
        while x != tx:
            x += 1 if tx > x else -1
            cells[y, x] = FREE
        while y != ty:
            y += 1 if ty > y else -1
            cells[y, x] = FREE


def branch_map(width: int = 46, height: int = 25, corridor: int = 2) -> GroundTruth:
    """A hub with three long dead-end branches; exploring all of them within a
    tight latency bound requires relocating the whole team."""
    cells = np.full((height, width), OCCUPIED, dtype=np.int8)
    hub_x, hub_y = 4, height // 2
    cells[hub_y - 2 : hub_y + 3, 1 : 8] = FREE
    # three branches leaving the hub: up-right, right, down-right
    for k, dy in enumerate((-1, 0, 1)):
        y = hub_y + dy * (height // 2 - 2)
        y0 = min(hub_y, y)
        y1 = max(hub_y, y)
        cells[y0 : y1 + 1, 8 + k : 8 + k + corridor] = FREE
        cells[y - corridor // 2 : y + corridor // 2 + 1, 8 : width - 2] = FREE
    terrain = np.where(cells == FREE, 0, -1).astype(np.int8)
    return GroundTruth(OccGrid(width, height, cells, 1.0), terrain)


def w1_map() -> GroundTruth:
    """The canonical 20x10 fixture: free except a wall at x=10 with one door."""
    rows = ["".join("#" if (x == 10 and y != 5) else "." for x in range(20))
            for y in range(10)]
    return parse_map(["20 10 1.0"] + rows)


def map_rows(truth: GroundTruth) -> list[str]:
    lines = []
    g = truth.grid
    lines.append(f"{g.width} {g.height} {g.resolution_m:g}")
    for y in range(g.height):
        lines.append("".join("#" if g.cells[y, x] == OCCUPIED else "."
                             for x in range(g.width)))
    return lines


def free_cells_near(truth: GroundTruth, corner: Cell, count: int) -> list[Cell]:
    """Deterministic free cells close to a corner, mutually adjacent-ish."""
    out = []
    cx, cy = corner
    for radius in range(max(truth.grid.width, truth.grid.height)):
        for y in range(max(0, cy - radius), min(truth.grid.height, cy + radius + 1)):
            for x in range(max(0, cx - radius), min(truth.grid.width, cx + radius + 1)):
                if truth.grid.cells[y, x] == FREE and (x, y) not in out:
                    out.append((x, y))
                    if len(out) >= count:
                        return out
    raise ValueError("not enough free cells")
