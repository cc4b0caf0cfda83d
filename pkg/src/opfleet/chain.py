"""Chain-mode machinery: anchor-point chain construction, bottleneck relay
assignment, topology split/restore bookkeeping, and accessible-region queries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .commmodel import CommParams, quality
from .routing import bottleneck_assignment
from .world import Cell, NavGrid, OccGrid, RobotClass, FREE, ticks_for


@dataclass(frozen=True)
class Cec:
    """Anchor-point chain from a target position to the operator.

    ``anchors[0]`` is the target robot's position, ``anchors[-1]`` the
    operator; every consecutive pair keeps quality above threshold + margin.
    Interior anchors (anchors[1:-1]) each need one relay robot.
    """

    anchors: tuple[Cell, ...]
    margin: float

    @property
    def relay_count(self) -> int:
        return max(0, len(self.anchors) - 2)

    @property
    def interior(self) -> tuple[Cell, ...]:
        return self.anchors[1:-1]

    def to_dict(self) -> dict:
        return {"anchors": [list(a) for a in self.anchors], "margin": self.margin}


@dataclass(frozen=True)
class Infeasible:
    reason: str  # no-path | quality-gap | too-few-robots | unreachable-anchor


@dataclass(frozen=True)
class RelayAssignment:
    """Injective interior-anchor -> robot mapping with its bottleneck arrival."""

    anchor_robots: tuple[int, ...]     # robot slot per interior anchor
    departures: tuple[int, ...]        # departure tick per interior anchor
    arrivals: tuple[int, ...]          # arrival tick per interior anchor
    bottleneck: int

    def to_dict(self) -> dict:
        return {
            "robots": list(self.anchor_robots),
            "departures": list(self.departures),
            "arrivals": list(self.arrivals),
            "bottleneck": self.bottleneck,
        }


def build_cec(
    grid: OccGrid,
    nav: NavGrid,
    target: Cell,
    operator: Cell,
    params: CommParams,
    qfn=quality,
) -> Cec | Infeasible:
    """Greedy-farthest anchor selection along the shortest target->operator path.

    From each anchor the next one is the farthest path point still above the
    margined quality bound; the scan stalls only across a wall pinch wider
    than the margined range.
    """
    path = nav.path(target, operator)
    if path is None:
        return Infeasible("no-path")
    bound = params.threshold + params.chain_margin
    anchors = [target]
    cur = 0
    last = len(path) - 1
    while cur != last:
        nxt = None
        for k in range(last, cur, -1):
            if qfn(path[cur], path[k], grid, params) > bound:
                nxt = k
                break
        if nxt is None:
            return Infeasible("quality-gap")
        anchors.append(path[nxt])
        cur = nxt
    return Cec(tuple(anchors), params.chain_margin)


@dataclass(frozen=True)
class RelayCandidate:
    slot: int
    cls: RobotClass
    tail_time: int
    tail_pos: Cell


def assign_relays(
    cec: Cec,
    candidates: list[RelayCandidate],
    nav_by_slot: dict[int, NavGrid],
    team_size: int,
) -> RelayAssignment | Infeasible:
    """Bottleneck-optimal relay assignment from each robot's tailing event.

    Infeasible when the chain needs more relays than the team can spare or
    when some anchor is unreachable by every candidate.
    """
    c = cec.relay_count
    if c > team_size - 1:
        return Infeasible("too-few-robots")
    if c == 0:
        return RelayAssignment((), (), (), 0)
    costs: list[list[float]] = []
    for anchor in cec.interior:
        row = []
        for cand in candidates:
            d = nav_by_slot[cand.slot].distance(cand.tail_pos, anchor)
            t = ticks_for(d, cand.cls)
            row.append(math.inf if math.isinf(t) else cand.tail_time + t)
        costs.append(row)
    for row in costs:
        if all(math.isinf(v) for v in row):
            return Infeasible("unreachable-anchor")
    solved = bottleneck_assignment(costs)
    if solved is None:
        return Infeasible("unreachable-anchor")
    picks, bottleneck = solved
    robots = tuple(candidates[a].slot for a in picks)
    departures = tuple(candidates[a].tail_time for a in picks)
    arrivals = tuple(int(costs[t][a]) for t, a in enumerate(picks))
    return RelayAssignment(robots, departures, arrivals, int(bottleneck))


def accessible_region(cec: Cec, grid: OccGrid, params: CommParams,
                      qfn=quality) -> set[Cell]:
    """Free cells the chain target may occupy while staying in threshold range
    of some non-target chain position (relay anchors or the operator)."""
    out: set[Cell] = set()
    posts = cec.anchors[1:]
    ys, xs = np.nonzero(grid.cells == FREE)
    for x, y in zip(xs.tolist(), ys.tolist()):
        p = (int(x), int(y))
        best = max(qfn(a, p, grid, params) for a in posts)
        if best > params.threshold:
            out.add(p)
    return out


def split_team(ring_order: list[int], relays: set[int], target: int) -> tuple[list[int], list[int]]:
    """Partition into (chain members, reduced ring of consecutive survivors)."""
    chain = [r for r in ring_order if r in relays or r == target]
    ring = [r for r in ring_order if r not in relays and r != target]
    return chain, ring


def re_anchor(
    grid: OccGrid,
    nav_target: NavGrid,
    cec_old: Cec,
    new_target: Cell,
    operator: Cell,
    params: CommParams,
    current_relays: list[RelayCandidate],
    nav_by_slot: dict[int, NavGrid],
    team_size: int,
    qfn=quality,
) -> tuple[Cec, RelayAssignment | None, list[int]] | Infeasible:
    """Adjust an active chain to a new target position.

    Serving relays stay first-choice candidates from their current posts; a
    shorter chain releases the surplus, a longer one needs ring recruits
    (signalled by a None assignment).  Returns (new chain, assignment or None,
    surplus robot slots).
    """
    new_cec = build_cec(grid, nav_target, new_target, operator, params, qfn=qfn)
    if isinstance(new_cec, Infeasible):
        return new_cec
    need = new_cec.relay_count
    if need > team_size - 1:
        return Infeasible("too-few-robots")
    if need > len(current_relays):
        return new_cec, None, []
    assign = assign_relays(new_cec, current_relays, nav_by_slot, team_size)
    if isinstance(assign, Infeasible):
        return assign
    surplus = sorted(c.slot for c in current_relays if c.slot not in assign.anchor_robots)
    return new_cec, assign, surplus


TRANSITION_CASES = {
    (False, False): "both-staying",
    (False, True): "stayer-relay",
    (True, False): "relay-stayer",
    (True, True): "both-relays",
}


def classify_transition_meeting(i_chainbound: bool, j_chainbound: bool) -> str:
    return TRANSITION_CASES[(i_chainbound, j_chainbound)]


def choose_insertions(
    chain_slots: list[int],
    ring_events: list[tuple[int, Cell, tuple[int, int]]],  # (time, location, edge)
    positions: dict[int, Cell],
    classes: dict[int, RobotClass],
    nav_by_slot: dict[int, NavGrid],
    t0: int,
) -> list[tuple[int, tuple[int, int], int]]:
    """Greedy reinsertion of chain robots into planned ring meetings.

    Each step picks the (robot, meeting) pair minimizing the waiting slack
    |t_event - travel - t0|, preferring on-time arrivals.  Returns a list of
    (robot slot, edge, event time) in insertion order; several robots may pile
    onto the same edge.
    """
    out: list[tuple[int, tuple[int, int], int]] = []
    remaining = sorted(chain_slots)
    while remaining:
        best = None
        for slot in remaining:
            for (t_ev, loc, edge) in ring_events:
                eta = ticks_for(nav_by_slot[slot].distance(positions[slot], loc), classes[slot])
                if math.isinf(eta):
                    continue
                slack = t_ev - (t0 + eta)
                key = (0 if slack >= 0 else 1, abs(slack), slot, edge)
                if best is None or key < best[0]:
                    best = (key, slot, edge, t_ev)
        if best is None:
            raise RuntimeError("no reachable ring meeting for reinsertion")
        _, slot, edge, t_ev = best
        out.append((slot, edge, t_ev))
        remaining.remove(slot)
    return out
