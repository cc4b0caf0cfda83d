"""The seven online request kinds: validation, status tracking, the
confirmation-return scheduler, and region-priority application."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

from .world import Cell, NavGrid, RobotClass, ticks_for


class RequestKind(str, Enum):
    XI1 = "xi1"  # intra-team latency bound update
    XI2 = "xi2"  # prioritized / avoided regions
    XI3 = "xi3"  # operator relocation
    XI4 = "xi4"  # communication chain to a robot at a position, for a duration
    XI5 = "xi5"  # data confirmation round-trip
    XI6 = "xi6"  # assistance chain to a robot at its own position
    XI7 = "xi7"  # inter-team latency bound update


class RequestStatus(str, Enum):
    PENDING = "pending"
    PROPAGATING = "propagating"
    ACTIVE = "active"
    FULFILLED = "fulfilled"
    REJECTED = "rejected"


OPERATOR_KINDS = {RequestKind.XI1, RequestKind.XI2, RequestKind.XI3, RequestKind.XI4, RequestKind.XI7}
ROBOT_KINDS = {RequestKind.XI5, RequestKind.XI6}


@dataclass
class Request:
    req_id: int
    kind: RequestKind
    issuer: str                  # "operator:K" or "robot:I"
    issued_at: int
    team: int
    args: dict
    status: RequestStatus = RequestStatus.PENDING
    reason: str | None = None
    fulfilled_at: int | None = None

    def to_dict(self) -> dict:
        return {
            "id": self.req_id,
            "kind": self.kind.value,
            "issuer": self.issuer,
            "issued_at": self.issued_at,
            "team": self.team,
            "args": self.args,
            "status": self.status.value,
            "reason": self.reason,
            "fulfilled_at": self.fulfilled_at,
        }


class RequestError(Exception):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


def validate_submission(
    req: Request,
    known_free: set[Cell],
    team_size: int,
    relay_need: int | None = None,
    messenger_out: bool = False,
) -> None:
    """Structural admission checks; raises RequestError with a reason code."""
    issuer_role = req.issuer.split(":")[0]
    if req.kind in OPERATOR_KINDS and issuer_role != "operator":
        raise RequestError("unauthorized")
    if req.kind in ROBOT_KINDS and issuer_role != "robot":
        raise RequestError("unauthorized")
    if req.kind == RequestKind.XI3:
        target = tuple(req.args["target"])
        if target not in known_free:
            raise RequestError("unknown-target")
        if messenger_out:
            raise RequestError("messenger-out")
    if req.kind == RequestKind.XI4:
        target = tuple(req.args["target"])
        if target not in known_free:
            raise RequestError("unknown-target")
        if relay_need is not None and relay_need > team_size - 1:
            raise RequestError("too-few-robots")
    if req.kind == RequestKind.XI1 and req.args.get("t_h", 0) <= 0:
        raise RequestError("invalid-bound")
    if req.kind == RequestKind.XI7 and req.args.get("t_c", 0) <= 0:
        raise RequestError("invalid-bound")


def schedule_confirmation_return(
    round_events: list[tuple[int, Cell, int]],  # (time, location, carrier slot), time-sorted
    operator_pos: Cell,
    nav_by_slot: dict[int, NavGrid],
    classes: dict[int, RobotClass],
) -> int | None:
    """Smallest round index whose carrier can detour via the operator.

    The carrier of event l attends event l+1 as well; the detour fits when
    t_l + nav(p_l -> operator -> p_{l+1}) <= t_{l+1}.  Returns the index or
    None when no slot has enough slack (the requester then returns itself).
    """
    for k in range(len(round_events) - 1):
        t_l, p_l, carrier = round_events[k]
        t_n, p_n, _ = round_events[k + 1]
        nav = nav_by_slot[carrier]
        cls = classes[carrier]
        detour = ticks_for(nav.distance(p_l, operator_pos), cls) + ticks_for(
            nav.distance(operator_pos, p_n), cls
        )
        if math.isinf(detour):
            continue
        if t_l + detour <= t_n:
            return k
    return None


@dataclass
class RegionPriority:
    """Active region steering from one xi2 request."""

    plus_cells: frozenset[Cell] = frozenset()
    minus_cells: frozenset[Cell] = frozenset()
    plus_points: tuple[Cell, ...] = ()

    def empty(self) -> bool:
        return not self.plus_cells and not self.minus_cells


def rasterize_polygon(vertices: list[Cell], width: int, height: int) -> frozenset[Cell]:
    """Cells whose centers fall inside (or on) the polygon, even-odd rule."""
    if len(vertices) == 1:
        return frozenset({vertices[0]})
    if len(vertices) == 2:
        (x0, y0), (x1, y1) = vertices
        return frozenset(
            (x, y)
            for x in range(min(x0, x1), max(x0, x1) + 1)
            for y in range(min(y0, y1), max(y0, y1) + 1)
        )
    out = set()
    xs = [v[0] for v in vertices]
    ys = [v[1] for v in vertices]
    for y in range(max(0, min(ys)), min(height - 1, max(ys)) + 1):
        for x in range(max(0, min(xs)), min(width - 1, max(xs)) + 1):
            if _point_in_poly(x, y, vertices):
                out.add((x, y))
    return frozenset(out)


def _point_in_poly(x: float, y: float, vertices: list[Cell]) -> bool:
    inside = False
    n = len(vertices)
    for k in range(n):
        x0, y0 = vertices[k]
        x1, y1 = vertices[(k + 1) % n]
        if min(x0, x1) <= x <= max(x0, x1) and min(y0, y1) <= y <= max(y0, y1):
            cross = (x1 - x0) * (y - y0) - (y1 - y0) * (x - x0)
            if cross == 0:
                return True  # on the boundary
        if (y0 > y) != (y1 > y):
            x_int = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
            if x < x_int:
                inside = not inside
    return inside


def apply_region_priority(priorities: list[RegionPriority]) -> RegionPriority:
    """Fold all active xi2 requests into one steering configuration."""
    plus: set[Cell] = set()
    minus: set[Cell] = set()
    points: list[Cell] = []
    for p in priorities:
        plus |= p.plus_cells
        minus |= p.minus_cells
        points.extend(p.plus_points)
    return RegionPriority(frozenset(plus), frozenset(minus), tuple(points))
