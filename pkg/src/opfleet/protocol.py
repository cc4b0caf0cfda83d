"""Shared protocol data model: plans, communication events, timestamp vectors,
ring and hyper-ring topologies, and the stamp-update calculus that drives
return-event decisions.

Time is integer ticks; one tick is one simulated second.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

from .world import Cell


class ProtocolError(Exception):
    pass


class EventKind(str, Enum):
    INTERNAL = "internal"          # pairwise ring meeting
    RETURN = "return"              # robot delivers data to its operator
    EXTERNAL = "external"          # messengers of two neighboring teams meet
    CHAIN_ARRIVAL = "chain_arrival"  # relay takes post at its anchor
    RENDEZVOUS = "rendezvous"      # recovery / reinsertion meeting, fires on contact


@dataclass(frozen=True)
class CommEvent:
    """A confirmed communication event: when, where, and with whom."""

    time: int
    location: Cell
    peers: tuple  # robot ids; a RETURN holds ("op", team_id) as second peer
    kind: EventKind
    event_id: int = -1

    def involves(self, agent) -> bool:
        return agent in self.peers

    def other(self, me):
        a, b = self.peers
        return b if a == me else a

    def to_dict(self) -> dict:
        return {
            "id": self.event_id,
            "t": self.time,
            "p": list(self.location),
            "peers": [list(p) if isinstance(p, tuple) else p for p in self.peers],
            "kind": self.kind.value,
        }


@dataclass
class PlanStep:
    """One plan segment: the route to walk, then the event it leads to."""

    route: list[Cell]
    event: CommEvent


@dataclass
class LocalPlan:
    """Alternating navigation segments and confirmed communication events.

    Confirmed events must not be reordered; their times are non-decreasing
    along the plan (rendezvous events carry time 0 and fire on contact).
    """

    steps: list[PlanStep] = field(default_factory=list)

    def append(self, route: list[Cell], event: CommEvent) -> None:
        self.steps.append(PlanStep(route, event))

    def head(self) -> PlanStep | None:
        return self.steps[0] if self.steps else None

    def pop(self) -> PlanStep:
        return self.steps.pop(0)

    def events(self) -> list[CommEvent]:
        return [s.event for s in self.steps]

    def tail_event(self) -> CommEvent | None:
        return self.steps[-1].event if self.steps else None

    def __len__(self) -> int:
        return len(self.steps)


@dataclass
class StampTuple:
    """Per-teammate estimated data timestamps.

    ``omega_r[n]``: newest data of teammate n this robot will hold at the end
    of its confirmed plan.  ``omega_h[n]``: newest data of teammate n the
    operator is estimated to hold by then.  Both vectors are entrywise
    non-decreasing over a run.
    """

    omega_r: list[int]
    omega_h: list[int]

    @classmethod
    def zeros(cls, n: int) -> "StampTuple":
        return cls([0] * n, [0] * n)

    def copy(self) -> "StampTuple":
        return StampTuple(list(self.omega_r), list(self.omega_h))

    def to_dict(self) -> dict:
        return {"r": list(self.omega_r), "h": list(self.omega_h)}


def stamp_on_return(omega: StampTuple, self_idx: int, depart_time: int, eta_to_operator: int) -> StampTuple:
    """Project operator knowledge past a freshly scheduled return event.

    All other entries are flushed from omega_r (the returning robot delivers
    everything it will hold); its own entry becomes the arrival time.
    """
    if not math.isfinite(eta_to_operator):
        raise ProtocolError("return event with infinite travel time")
    out = omega.copy()
    for n in range(len(out.omega_h)):
        if n == self_idx:
            # max keeps the vector monotone even for out-of-order schedules
            out.omega_h[n] = max(out.omega_h[n], depart_time + int(eta_to_operator))
        else:
            out.omega_h[n] = max(out.omega_h[n], out.omega_r[n])
    return out


def stamp_on_meeting(
    omega_i: StampTuple, omega_j: StampTuple, i: int, j: int, confirmed_time: int
) -> tuple[StampTuple, StampTuple]:
    """Merge two stamp tuples once the pair's next meeting time is confirmed."""
    if len(omega_i.omega_r) != len(omega_j.omega_r):
        raise ProtocolError("stamp vectors of different lengths")
    merged_h = [max(a, b) for a, b in zip(omega_i.omega_h, omega_j.omega_h)]
    merged_r = [max(a, b) for a, b in zip(omega_i.omega_r, omega_j.omega_r)]
    merged_r[i] = confirmed_time
    merged_r[j] = confirmed_time
    out_i = StampTuple(list(merged_r), list(merged_h))
    out_j = StampTuple(list(merged_r), list(merged_h))
    return out_i, out_j


def estimate_chi(omega_h_i: list[int], omega_h_j: list[int]) -> int:
    """Estimated minimum operator-known timestamp over all teammates."""
    if len(omega_h_i) != len(omega_h_j):
        raise ProtocolError("stamp vectors of different lengths")
    return min(max(a, b) for a, b in zip(omega_h_i, omega_h_j))


# ---------------------------------------------------------------------------
# Topologies

@dataclass
class RingTopology:
    """Cyclic member order; data flows from each robot to its successor."""

    order: list[int]
    version: int = 0

    def __post_init__(self):
        if len(set(self.order)) != len(self.order):
            raise ProtocolError("duplicate member in ring")
        if not self.order:
            raise ProtocolError("empty ring")

    def copy(self) -> "RingTopology":
        return RingTopology(list(self.order), self.version)

    def __contains__(self, r: int) -> bool:
        return r in self.order

    def __len__(self) -> int:
        return len(self.order)

    def successor(self, r: int) -> int:
        i = self.order.index(r)
        return self.order[(i + 1) % len(self.order)]

    def predecessor(self, r: int) -> int:
        i = self.order.index(r)
        return self.order[(i - 1) % len(self.order)]

    def edges(self) -> list[tuple[int, int]]:
        """Directed data-flow edges (predecessor, successor)."""
        n = len(self.order)
        if n == 1:
            return []
        if n == 2:
            return [(self.order[0], self.order[1])]
        return [(self.order[i], self.order[(i + 1) % n]) for i in range(n)]

    def is_edge(self, a: int, b: int) -> bool:
        return any({a, b} == {u, v} for u, v in self.edges())


def ring_rewire(ring: RingTopology, action: dict) -> tuple[RingTopology, bool]:
    """Apply one topology action; returns (new ring, single_explore_flag).

    Actions: {"remove": r} | {"insert": r, "between": (a, b)} |
    {"replace_edge": (i, j), "with": (n, j)}.
    """
    order = list(ring.order)
    single = False
    if "remove" in action:
        r = action["remove"]
        if r not in order:
            raise ProtocolError(f"remove: {r} not in ring")
        order.remove(r)
        if len(order) == 1:
            single = True
        if not order:
            raise ProtocolError("cannot empty a ring")
    elif "insert" in action:
        r = action["insert"]
        a, b = action["between"]
        if r in order:
            raise ProtocolError(f"insert: {r} already in ring")
        if a not in order or b not in order:
            raise ProtocolError("insert: anchor pair not in ring")
        ia = order.index(a)
        if len(order) >= 2 and order[(ia + 1) % len(order)] != b:
            raise ProtocolError(f"insert: ({a},{b}) not an adjacent pair")
        order.insert(ia + 1, r)
    elif "replace_edge" in action:
        i, j = action["replace_edge"]
        n, j2 = action["with"]
        if j2 != j:
            raise ProtocolError("replace_edge must keep the successor endpoint")
        if i not in order:
            raise ProtocolError(f"replace_edge: {i} not in ring")
        if len(order) > 1:
            if ring.successor(i) != j:
                raise ProtocolError(f"replace_edge: ({i},{j}) is not a data-flow edge")
            if len(order) > 2 and ring.predecessor(i) != n:
                raise ProtocolError(f"replace_edge: {n} is not the predecessor of {i}")
        # splicing (n, j) over departing robot i contracts the cycle by one
        order.remove(i)
        if len(order) == 1:
            single = True
    else:
        raise ProtocolError(f"unknown rewire action {action}")
    return RingTopology(order, ring.version + 1), single


@dataclass
class HyperRing:
    """Cyclic team order; neighboring pairs hold periodic external meetings."""

    teams: list[int]

    def __post_init__(self):
        if len(set(self.teams)) != len(self.teams):
            raise ProtocolError("duplicate team in hyper-ring")

    def pairs(self) -> list[tuple[int, int]]:
        n = len(self.teams)
        if n < 2:
            return []
        if n == 2:
            return [(self.teams[0], self.teams[1])]
        return [tuple(sorted((self.teams[i], self.teams[(i + 1) % n]))) for i in range(n)]

    def neighbors_of(self, team: int) -> list[int]:
        return sorted({a if b == team else b for a, b in self.pairs() if team in (a, b)})
