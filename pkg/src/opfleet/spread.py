"""Pairwise coordination at spread-mode meetings.

At every confirmed meeting the pair (i) decides whether one of them must
return to the operator, (ii) plans the next pair meeting as a frontier tour
under the latency budget, and (iii) resolves any pending external event by
detaching a messenger if the budget for it would otherwise expire.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .frontier import (
    Frontier,
    detect_frontiers_adaptive,
    frontier_cost_default,
    frontier_cost_prioritized,
)
from .protocol import StampTuple, estimate_chi, stamp_on_meeting, stamp_on_return
from .routing import tsp_order
from .world import Cell, NavGrid, RobotClass, SQRT2, ticks_for


class CoordinationFault(Exception):
    """An invariant the protocol guarantees was violated; the run must halt."""


@dataclass
class RobotView:
    """One meeting participant as seen by the coordination step."""

    idx: int            # index within the team (stamp vector slot)
    cls: RobotClass
    tail_time: int      # time of the robot's last confirmed event
    tail_pos: Cell      # location of that event
    omega: StampTuple


@dataclass
class PairContext:
    """Joint knowledge of the two participants at a meeting."""

    i: RobotView
    j: RobotView
    nav_pair: NavGrid          # merged map, traversal mask of both classes
    nav_by_idx: dict[int, NavGrid]  # merged map, each robot's own mask
    operator_pos: Cell
    t_h: int
    active: list[int]          # team slots currently doing intermittent returns
    min_frontier_size: int = 3
    claimed_cells: frozenset[Cell] = frozenset()
    priority_points: tuple[Cell, ...] = ()
    avoid_cells: frozenset[Cell] = frozenset()


def select_meeting_point(
    path: list[Cell], t_i: int, t_j: int, cls_i: RobotClass, cls_j: RobotClass
) -> tuple[Cell, int, int]:
    """Point on the path minimizing the later arrival of the two robots.

    The robots travel along the path from its two ends; ties resolve to the
    earliest path index.  Returns (point, meeting time, path index).
    """
    if not path:
        raise ValueError("empty path")
    prefix = [0.0]
    for p, q in zip(path, path[1:]):
        step = SQRT2 if (p[0] != q[0] and p[1] != q[1]) else 1.0
        prefix.append(prefix[-1] + step)
    total = prefix[-1]
    best: tuple[int, int] | None = None  # (time, index)
    for k, p in enumerate(path):
        arr_i = t_i + ticks_for(prefix[k], cls_i)
        arr_j = t_j + ticks_for(total - prefix[k], cls_j)
        t = int(max(arr_i, arr_j))
        if best is None or t < best[0]:
            best = (t, k)
    return path[best[1]], best[0], best[1]


@dataclass
class ReturnDecision:
    returner: int | None        # team slot, or None
    arrival: int | None         # estimated arrival at the operator
    chi_pre: int
    chi_star: int
    direct_meet: tuple[Cell, int]
    omega_i: StampTuple
    omega_j: StampTuple


def determine_return(ctx: PairContext, pred_slot: int) -> ReturnDecision:
    """Return-event decision at a meeting.

    Assumes the pair would meet directly next; if delivering right after that
    meeting would already breach the latency budget, the data-flow predecessor
    returns first and its operator-knowledge stamps are advanced.
    """
    i, j = ctx.i, ctx.j
    path = ctx.nav_pair.path(i.tail_pos, j.tail_pos)
    if path is None:
        raise CoordinationFault(
            f"no joint path between meeting depots {i.tail_pos} and {j.tail_pos}"
        )
    p_star, t_star, _ = select_meeting_point(path, i.tail_time, j.tail_time, i.cls, j.cls)
    eta_op = max(
        ticks_for(ctx.nav_by_idx[i.idx].distance(ctx.operator_pos, p_star), i.cls),
        ticks_for(ctx.nav_by_idx[j.idx].distance(ctx.operator_pos, p_star), j.cls),
    )
    if math.isinf(eta_op):
        raise CoordinationFault("operator unreachable from direct meeting point")
    arrival_est = t_star + int(eta_op)
    chi_pre = estimate_chi(
        [i.omega.omega_h[n] for n in ctx.active], [j.omega.omega_h[n] for n in ctx.active]
    )
    omega_i, omega_j = i.omega.copy(), j.omega.copy()
    returner = None
    arrival = None
    if arrival_est > ctx.t_h + chi_pre:
        returner = pred_slot
        view = i if pred_slot == i.idx else j
        eta = ticks_for(
            ctx.nav_by_idx[view.idx].distance(ctx.operator_pos, view.tail_pos), view.cls
        )
        if math.isinf(eta):
            raise CoordinationFault("operator unreachable from returning robot")
        arrival = view.tail_time + int(eta)
        updated = stamp_on_return(view.omega, view.idx, view.tail_time, int(eta))
        if pred_slot == i.idx:
            omega_i = updated
        else:
            omega_j = updated
    chi_star = estimate_chi(
        [omega_i.omega_h[n] for n in ctx.active], [omega_j.omega_h[n] for n in ctx.active]
    )
    return ReturnDecision(returner, arrival, chi_pre, chi_star, (p_star, t_star), omega_i, omega_j)


@dataclass
class MeetingPlan:
    point: Cell
    time: int
    route_i: list[Cell]         # from i's tail position to the meeting point
    route_j: list[Cell]         # from j's tail position to the meeting point
    toured_frontiers: list[Frontier]
    dropped_frontiers: list[Cell]
    omega_i: StampTuple
    omega_j: StampTuple


def optimize_next_meeting(
    ctx: PairContext,
    chi_star: int,
    tail_i: tuple[int, Cell],
    tail_j: tuple[int, Cell],
    merged_grid,
) -> MeetingPlan:
    """Plan the next pair meeting as a frontier tour within the latency budget.

    Frontiers of the merged map (minus already claimed ones) are ordered as an
    open TSP between the two depots; while the resulting meeting would breach
    the budget for either robot, the costliest frontier is dropped.  The empty
    tour degenerates to the direct meeting, which is always feasible.
    """
    i, j = ctx.i, ctx.j
    t_i, p_i = tail_i
    t_j, p_j = tail_j
    nav = ctx.nav_pair

    def usable(fs):
        out = []
        for f in fs:
            if ctx.claimed_cells and not ctx.claimed_cells.isdisjoint(f.member_cells):
                continue
            if ctx.avoid_cells and not ctx.avoid_cells.isdisjoint(f.member_cells):
                continue
            rep = f.representative
            if not math.isfinite(nav.distance(p_i, rep)) or not math.isfinite(
                nav.distance(p_j, rep)
            ):
                continue
            out.append(f)
        return out

    cand = usable(detect_frontiers_adaptive(merged_grid, ctx.min_frontier_size))

    def cost_of(f: Frontier) -> float:
        if ctx.priority_points:
            return frontier_cost_prioritized(f, nav, i.cls, list(ctx.priority_points))
        return frontier_cost_default(f, nav, i.cls, j.cls, ctx.operator_pos, p_i, p_j)

    dropped: list[Cell] = []
    while True:
        order = _tour(nav, p_i, p_j, [f.representative for f in cand])
        route = _stitch(nav, p_i, p_j, [cand[k].representative for k in order])
        p_hat, t_hat, idx = select_meeting_point(route, t_i, t_j, i.cls, j.cls)
        ok = True
        for view in (i, j):
            back = ticks_for(
                ctx.nav_by_idx[view.idx].distance(ctx.operator_pos, p_hat), view.cls
            )
            if t_hat + back > ctx.t_h + chi_star:
                ok = False
                break
        if ok:
            toured = [cand[k] for k in order]
            route_i = route[: idx + 1]
            route_j = list(reversed(route[idx:]))
            route_i, route_j, t_hat, solo = _solo_detours(
                ctx, merged_grid, route_i, route_j, p_hat, t_hat,
                (t_i, p_i), (t_j, p_j), chi_star, toured)
            toured = toured + solo
            omega_i, omega_j = stamp_on_meeting(i.omega, j.omega, i.idx, j.idx, t_hat)
            return MeetingPlan(
                p_hat, t_hat, route_i, route_j,
                toured, dropped, omega_i, omega_j,
            )
        if not cand:
            raise CoordinationFault(
                f"direct meeting at {p_hat} t={t_hat} breaches latency budget "
                f"T_h={ctx.t_h} chi={chi_star}"
            )
        worst = max(range(len(cand)), key=lambda k: (cost_of(cand[k]), cand[k].representative))
        dropped.append(cand[worst].representative)
        cand.pop(worst)


def _solo_detours(
    ctx: PairContext,
    merged_grid,
    route_i: list[Cell],
    route_j: list[Cell],
    p_hat: Cell,
    t_hat: int,
    tail_i: tuple[int, Cell],
    tail_j: tuple[int, Cell],
    chi_star: int,
    already: list[Frontier],
) -> tuple[list[Cell], list[Cell], int, list[Frontier]]:
    """Heterogeneous extension: frontiers only one of the pair can traverse
    get spliced into that robot's own leg, within the same latency budget."""
    taken = {f.representative for f in already}
    solo_pool = []
    for f in detect_frontiers_adaptive(merged_grid, ctx.min_frontier_size):
        rep = f.representative
        if rep in taken:
            continue
        if ctx.claimed_cells and not ctx.claimed_cells.isdisjoint(f.member_cells):
            continue
        if ctx.avoid_cells and not ctx.avoid_cells.isdisjoint(f.member_cells):
            continue
        if math.isfinite(ctx.nav_pair.distance(tail_i[1], rep)):
            continue  # jointly reachable: the main tour already considered it
        solo_pool.append(f)
    if not solo_pool:
        return route_i, route_j, t_hat, []
    budget = ctx.t_h + chi_star
    backs = {
        view.idx: ticks_for(ctx.nav_by_idx[view.idx].distance(ctx.operator_pos, p_hat),
                            view.cls)
        for view in (ctx.i, ctx.j)
    }
    out: list[Frontier] = []
    new_t = t_hat
    legs = {ctx.i.idx: list(route_i), ctx.j.idx: list(route_j)}
    for view, (t0, p0) in ((ctx.i, tail_i), (ctx.j, tail_j)):
        nav = ctx.nav_by_idx[view.idx]
        chain: list[Frontier] = []
        spent_to = {None: 0.0}
        while True:
            cur = chain[-1].representative if chain else p0
            spent = spent_to[chain[-1].representative if chain else None]
            cands = [f for f in solo_pool if f not in out
                     and math.isfinite(nav.distance(cur, f.representative))]
            if not cands:
                break
            cands.sort(key=lambda f: (nav.distance(cur, f.representative),
                                      f.representative))
            f = cands[0]
            length = spent + nav.distance(cur, f.representative) + nav.distance(
                f.representative, p_hat)
            arrive = t0 + ticks_for(length, view.cls)
            cand_t = max(new_t, arrive)
            if (not math.isfinite(arrive)
                    or cand_t + backs[ctx.i.idx] > budget
                    or cand_t + backs[ctx.j.idx] > budget):
                break
            spent_to[f.representative] = spent + nav.distance(cur, f.representative)
            chain.append(f)
            out.append(f)
            new_t = cand_t
        if chain:
            rebuilt = [p0]
            pos = p0
            ok = True
            for g in chain:
                seg = nav.path(pos, g.representative)
                if seg is None:
                    ok = False
                    break
                rebuilt.extend(seg[1:])
                pos = g.representative
            closing = nav.path(pos, p_hat)
            if ok and closing is not None:
                rebuilt.extend(closing[1:])
                legs[view.idx] = rebuilt
    return legs[ctx.i.idx], legs[ctx.j.idx], int(new_t), out


def _route_len(route: list[Cell]) -> float:
    total = 0.0
    for p, q in zip(route, route[1:]):
        total += SQRT2 if (p[0] != q[0] and p[1] != q[1]) else 1.0
    return total


def _tour(nav: NavGrid, p_i: Cell, p_j: Cell, reps: list[Cell]) -> list[int]:
    if not reps:
        return []
    pts = [p_i] + reps + [p_j]
    dist = [[nav.distance(a, b) for b in pts] for a in pts]
    return [k - 1 for k in tsp_order(dist)]


def _stitch(nav: NavGrid, p_i: Cell, p_j: Cell, waypoints: list[Cell]) -> list[Cell]:
    """Concatenated shortest-path route p_i -> waypoints... -> p_j."""
    route = [p_i]
    cur = p_i
    for w in list(waypoints) + [p_j]:
        seg = nav.path(cur, w)
        if seg is None:
            raise CoordinationFault(f"no path to waypoint {w}")
        route.extend(seg[1:])
        cur = w
    return route


@dataclass
class ExternalDecision:
    messenger: int | None       # team slot of the detaching robot, or None
    wait_i: float = 0.0
    wait_j: float = 0.0


def determine_external(
    ctx: PairContext,
    meeting: tuple[Cell, int],
    external_pos: Cell,
    external_time: int,
) -> ExternalDecision:
    """Check whether the pending external event can still be deferred.

    If neither robot could reach it from the freshly planned meeting in time,
    the robot that would wait the least at the external position detaches as
    the messenger.
    """
    p_hat, t_hat = meeting
    i, j = ctx.i, ctx.j
    deferrable = True
    for view in (i, j):
        eta = ticks_for(ctx.nav_by_idx[view.idx].distance(external_pos, p_hat), view.cls)
        if t_hat + eta > external_time:
            deferrable = False
            break
    if deferrable:
        return ExternalDecision(None)
    waits = {}
    for view in (i, j):
        eta = ticks_for(
            ctx.nav_by_idx[view.idx].distance(external_pos, view.tail_pos), view.cls
        )
        waits[view.idx] = external_time - view.tail_time - eta
    # least waiting time after arrival, among robots that still arrive on time;
    # if neither can make it, the least-late one goes and the lateness is logged
    on_time = [s for s in (i.idx, j.idx) if waits[s] >= 0]
    pool = on_time or [i.idx, j.idx]
    messenger = min(pool, key=lambda s: (abs(waits[s]), s))
    return ExternalDecision(messenger, wait_i=waits[i.idx], wait_j=waits[j.idx])


def plan_next_external(
    nav_op: NavGrid,
    op1_pos: Cell,
    op2_pos: Cell,
    t_actual: int,
    t_c: int,
    op_cls: RobotClass,
) -> tuple[Cell, int]:
    """Next external event: one inter-latency period later, at the point of the
    inter-operator path that balances both operators' travel times."""
    path = nav_op.path(op1_pos, op2_pos)
    if path is None:
        # operators mutually unreachable in the merged map: fall back to the
        # first operator's position and let replanning refine it later
        return op1_pos, t_actual + t_c
    p, _, _ = select_meeting_point(path, 0, 0, op_cls, op_cls)
    return p, t_actual + t_c
