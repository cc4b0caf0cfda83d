"""Ground-truth workspace, simulated sensing, grid path planning and travel-time estimates.

The workspace is a static 2D occupancy grid shared by all agents in one
coordinate frame.  Local maps are per-agent views of the same grid that only
ever transition Unknown -> {Free, Occupied}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra as _csgraph_dijkstra

UNKNOWN = 0
FREE = 1
OCCUPIED = 2

SQRT2 = math.sqrt(2.0)

# terrain classes keyed by map character
TERRAIN_CHARS = {".": "open", "~": "low", "^": "window"}
TERRAIN_IDS = {"open": 0, "low": 1, "window": 2}
TERRAIN_NAMES = {v: k for k, v in TERRAIN_IDS.items()}


class WorldError(Exception):
    pass


class InvalidPoseError(WorldError):
    pass


Cell = tuple[int, int]  # (x, y)


@dataclass(frozen=True)
class RobotClass:
    """Mobility and resource profile of one robot type."""

    name: str
    max_speed: float = 1.0  # cells per tick
    traversal_mask: frozenset[str] = frozenset({"open", "low", "window"})
    battery_capacity: float | None = None
    drain_per_cell: float = 0.0

    def __post_init__(self):
        if self.max_speed <= 0:
            raise WorldError(f"class {self.name}: max_speed must be > 0")
        if self.drain_per_cell < 0:
            raise WorldError(f"class {self.name}: drain_per_cell must be >= 0")
        object.__setattr__(self, "traversal_mask", frozenset(self.traversal_mask))

    def mask_key(self) -> tuple[int, ...]:
        return tuple(sorted(TERRAIN_IDS[t] for t in self.traversal_mask))


@dataclass
class OccGrid:
    """2D occupancy grid; ``cells[y, x]`` in {UNKNOWN, FREE, OCCUPIED}."""

    width: int
    height: int
    cells: np.ndarray
    resolution_m: float = 1.0

    @classmethod
    def blank(cls, width: int, height: int, fill: int = UNKNOWN, resolution_m: float = 1.0) -> "OccGrid":
        return cls(width, height, np.full((height, width), fill, dtype=np.int8), resolution_m)

    def in_bounds(self, c: Cell) -> bool:
        return 0 <= c[0] < self.width and 0 <= c[1] < self.height

    def at(self, c: Cell) -> int:
        return int(self.cells[c[1], c[0]])

    def set(self, c: Cell, state: int) -> None:
        self.cells[c[1], c[0]] = state

    def copy(self) -> "OccGrid":
        return OccGrid(self.width, self.height, self.cells.copy(), self.resolution_m)

    def merge_from(self, other: "OccGrid") -> None:
        """Union of knowledge: UNKNOWN < FREE/OCCUPIED and ground truth is static."""
        np.maximum(self.cells, other.cells, out=self.cells)

    def known_count(self) -> int:
        return int(np.count_nonzero(self.cells != UNKNOWN))


@dataclass
class GroundTruth:
    """True workspace: fully known occupancy plus a terrain class per cell."""

    grid: OccGrid
    terrain: np.ndarray  # int8 terrain ids, aligned with grid.cells

    def __post_init__(self):
        free = self.grid.cells == FREE
        if self.terrain.shape != self.grid.cells.shape:
            raise WorldError("terrain shape does not match grid")
        if np.any(self.terrain[free] < 0):
            raise WorldError("free cell without terrain class")


def load_map(path: str | Path) -> GroundTruth:
    """Parse the plain-text map format: header ``W H resolution_m`` then H rows."""
    lines = Path(path).read_text().splitlines()
    return parse_map(lines)


def parse_map(lines: list[str]) -> GroundTruth:
    header = lines[0].split()
    if len(header) != 3:
        raise WorldError("map header must be 'W H resolution_m'")
    w, h, res = int(header[0]), int(header[1]), float(header[2])
    rows = [ln for ln in lines[1:] if ln.strip() != ""]
    if len(rows) != h:
        raise WorldError(f"expected {h} map rows, found {len(rows)}")
    cells = np.full((h, w), OCCUPIED, dtype=np.int8)
    terrain = np.full((h, w), -1, dtype=np.int8)
    for y, row in enumerate(rows):
        if len(row) != w:
            raise WorldError(f"row {y} has width {len(row)}, expected {w}")
        for x, ch in enumerate(row):
            if ch == "#":
                cells[y, x] = OCCUPIED
            elif ch in TERRAIN_CHARS:
                cells[y, x] = FREE
                terrain[y, x] = TERRAIN_IDS[TERRAIN_CHARS[ch]]
            elif ch == "?":
                raise WorldError(f"reserved map character '?' at ({x},{y})")
            else:
                raise WorldError(f"unknown map character {ch!r} at ({x},{y})")
    return GroundTruth(OccGrid(w, h, cells, res), terrain)


def dump_map(truth: GroundTruth) -> str:
    grid = truth.grid
    out = [f"{grid.width} {grid.height} {grid.resolution_m:g}"]
    rev = {v: k for k, v in TERRAIN_CHARS.items()}
    for y in range(grid.height):
        row = []
        for x in range(grid.width):
            if grid.cells[y, x] == OCCUPIED:
                row.append("#")
            else:
                row.append(rev[TERRAIN_NAMES[int(truth.terrain[y, x])]])
        out.append("".join(row))
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# Sensing

@lru_cache(maxsize=32)
def _ray_offsets(rng: int) -> list[list[Cell]]:
    """Per target offset within the disk, the Bresenham trace from the origin."""
    rays = []
    for dy in range(-rng, rng + 1):
        for dx in range(-rng, rng + 1):
            if dx * dx + dy * dy <= rng * rng:
                rays.append(list(bresenham((0, 0), (dx, dy))))
    return rays


def sense(pose: Cell, truth: GroundTruth, rng: int) -> dict[Cell, int]:
    """Disk-shaped sensor sweep with line-of-sight occlusion.

    Every cell within Euclidean distance ``rng`` is reported unless an
    Occupied cell blocks the ray first; the blocking cell itself is reported.
    """
    grid = truth.grid
    if not grid.in_bounds(pose) or grid.at(pose) != FREE:
        raise InvalidPoseError(f"sensor pose {pose} outside grid or occupied")
    px, py = pose
    seen: dict[Cell, int] = {}
    for ray in _ray_offsets(rng):
        for (dx, dy) in ray:
            c = (px + dx, py + dy)
            if not grid.in_bounds(c):
                break
            state = grid.at(c)
            seen[c] = state
            if state == OCCUPIED:
                break
    return seen


def bresenham(a: Cell, b: Cell):
    """Integer line trace from a to b, inclusive of both endpoints."""
    x0, y0 = a
    x1, y1 = b
    dx, dy = abs(x1 - x0), abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx - dy
    while True:
        yield (x0, y0)
        if x0 == x1 and y0 == y1:
            return
        e2 = 2 * err
        if e2 > -dy:
            err -= dy
            x0 += sx
        if e2 < dx:
            err += dx
            y0 += sy


# ---------------------------------------------------------------------------
# Grid path planning

_NEIGHBORS = [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)]


def passable_array(grid: OccGrid, terrain: np.ndarray, mask: frozenset[str] | None) -> np.ndarray:
    """Boolean array of cells a robot with the given traversal mask may enter.

    Unknown cells are never passable: planning happens on explored space only.
    """
    ok = grid.cells == FREE
    if mask is not None and len(mask) < len(TERRAIN_IDS):
        allowed = np.zeros(len(TERRAIN_IDS) + 1, dtype=bool)
        for t in mask:
            allowed[TERRAIN_IDS[t]] = True
        ok &= allowed[np.clip(terrain, 0, len(TERRAIN_IDS))]
    return ok


class NavGrid:
    """Distance-field oracle over one snapshot of passable cells.

    Wraps a sparse-graph Dijkstra; fields are cached per source cell so a
    coordination round reuses them freely.
    """

    def __init__(self, passable: np.ndarray):
        self.passable = passable
        self.height, self.width = passable.shape
        self._fields: dict[int, np.ndarray] = {}
        self._graph = None

    def _node(self, c: Cell) -> int:
        return c[1] * self.width + c[0]

    def _build_graph(self):
        if self._graph is not None:
            return self._graph
        h, w = self.height, self.width
        ok = self.passable
        rows, cols, data = [], [], []
        idx = np.arange(h * w).reshape(h, w)
        for dx, dy in _NEIGHBORS:
            src_y = slice(max(0, -dy), h - max(0, dy))
            src_x = slice(max(0, -dx), w - max(0, dx))
            dst_y = slice(max(0, dy), h - max(0, -dy))
            dst_x = slice(max(0, dx), w - max(0, -dx))
            valid = ok[src_y, src_x] & ok[dst_y, dst_x]
            rows.append(idx[src_y, src_x][valid])
            cols.append(idx[dst_y, dst_x][valid])
            cost = SQRT2 if (dx != 0 and dy != 0) else 1.0
            data.append(np.full(int(valid.sum()), cost))
        self._graph = csr_matrix(
            (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
            shape=(h * w, h * w),
        )
        return self._graph

    def field(self, source: Cell) -> np.ndarray:
        """Shortest-path distance from source to every cell (inf if unreachable)."""
        key = self._node(source)
        f = self._fields.get(key)
        if f is None:
            if not self.passable[source[1], source[0]]:
                f = np.full((self.height, self.width), np.inf)
            else:
                g = self._build_graph()
                d = _csgraph_dijkstra(g, directed=False, indices=key)
                f = d.reshape(self.height, self.width)
            self._fields[key] = f
        return f

    def distance(self, a: Cell, b: Cell) -> float:
        return float(self.field(a)[b[1], b[0]])

    def path(self, a: Cell, b: Cell) -> list[Cell] | None:
        """Greedy descent on the distance-from-b field; ties to smallest (x, y)."""
        if not self.passable[a[1], a[0]] or not self.passable[b[1], b[0]]:
            return None
        fb = self.field(b)
        if not math.isfinite(fb[a[1], a[0]]):
            return None
        path = [a]
        cur = a
        while cur != b:
            best = None
            cur_d = fb[cur[1], cur[0]]
            for dx, dy in _NEIGHBORS:
                n = (cur[0] + dx, cur[1] + dy)
                if not (0 <= n[0] < self.width and 0 <= n[1] < self.height):
                    continue
                if not self.passable[n[1], n[0]]:
                    continue
                step = SQRT2 if (dx != 0 and dy != 0) else 1.0
                total = step + fb[n[1], n[0]]
                if total <= cur_d + 1e-9:
                    if best is None or (n[0], n[1]) < (best[0], best[1]):
                        best = n
            if best is None:  # numerical dead end; should not happen
                return None
            path.append(best)
            cur = best
        return path


def shortest_path(
    grid: OccGrid,
    a: Cell,
    b: Cell,
    terrain: np.ndarray | None = None,
    mask: frozenset[str] | None = None,
) -> list[Cell] | None:
    """8-connected shortest Free-cell path from a to b, or None if disconnected."""
    if not grid.in_bounds(a) or not grid.in_bounds(b):
        raise WorldError(f"endpoint outside grid: {a} -> {b}")
    t = terrain if terrain is not None else np.zeros_like(grid.cells)
    nav = NavGrid(passable_array(grid, t, mask))
    return nav.path(a, b)


def path_length(path: list[Cell]) -> float:
    total = 0.0
    for p, q in zip(path, path[1:]):
        total += SQRT2 if (p[0] != q[0] and p[1] != q[1]) else 1.0
    return total


def ticks_for(dist: float, cls: RobotClass) -> float:
    """Travel time in whole ticks; inf stays inf."""
    if not math.isfinite(dist):
        return math.inf
    return math.ceil(dist / cls.max_speed - 1e-9)


def nav_time(
    cls: RobotClass,
    a: Cell,
    b: Cell,
    grid: OccGrid,
    terrain: np.ndarray | None = None,
    battery: float | None = None,
) -> float:
    """Estimated travel ticks for one robot class, or inf when unreachable.

    A route is unreachable when no masked path exists or when traversal would
    exhaust the given battery level.
    """
    if a == b:
        return 0
    p = shortest_path(grid, a, b, terrain, cls.traversal_mask)
    if p is None:
        return math.inf
    dist = path_length(p)
    cap = battery if battery is not None else cls.battery_capacity
    if cap is not None and dist * cls.drain_per_cell >= cap:
        return math.inf
    return ticks_for(dist, cls)
