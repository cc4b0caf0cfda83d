"""Operator relocation: the feasible region for single moves, the diagnostic
reachable-area bound, and the whole-team migrate transition."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .world import Cell, NavGrid, RobotClass, FREE, ticks_for


@dataclass(frozen=True)
class FeasibleRegion:
    cells: frozenset[Cell]
    computed_at: int
    basis: tuple[Cell, ...]   # confirmed meeting positions the region honors
    reason: str | None = None

    def __contains__(self, c: Cell) -> bool:
        return c in self.cells


def feasible_region(
    nav: NavGrid,
    explored_free: np.ndarray,
    operator_pos: Cell,
    basis_events: list[Cell],
    now: int,
    messenger_out: bool = False,
) -> FeasibleRegion:
    """Explored Free cells at least as close as the operator's current position
    to every confirmed future meeting position.

    While a messenger is detached the operator may not move at all, so the
    region is empty with a reason code.
    """
    if messenger_out:
        return FeasibleRegion(frozenset(), now, tuple(basis_events), reason="messenger-out")
    ok = explored_free.copy()
    for pos in basis_events:
        field = nav.field(pos)
        ref = field[operator_pos[1], operator_pos[0]]
        ok &= field <= ref + 1e-9
    ys, xs = np.nonzero(ok)
    return FeasibleRegion(
        frozenset((int(x), int(y)) for x, y in zip(xs.tolist(), ys.tolist())),
        now,
        tuple(basis_events),
    )


def reachable_bound(
    nav: NavGrid,
    operator_pos: Cell,
    t_h: int,
    n_robots: int,
    d_com: float,
    v_max: float,
) -> set[Cell]:
    """Diagnostic overlay: cells within the theoretical exploration reach."""
    budget = t_h * (1.0 - 1.0 / (2 ** n_robots)) + n_robots * d_com / v_max
    field = nav.field(operator_pos)
    ys, xs = np.nonzero(field / v_max <= budget + 1e-9)
    return {(int(x), int(y)) for x, y in zip(xs.tolist(), ys.tolist())}


def reachable_budget(t_h: int, n_robots: int, d_com: float, v_max: float) -> float:
    return t_h * (1.0 - 1.0 / (2 ** n_robots)) + n_robots * d_com / v_max


@dataclass
class MigrationRewrite:
    """Plan truncation for one robot during the last communication round."""

    robot: int
    keep_next_events: int       # confirmed events still attended before returning
    return_after: bool = True


def rewrite_on_command(robot: int, is_trigger_pred: bool, carrier: bool) -> MigrationRewrite:
    """Alg.-style last-round rule: the command carrier returns right after the
    meeting; the receiver attends one more confirmed event first, except the
    trigger robot's ring predecessor, who returns immediately as well."""
    if carrier or is_trigger_pred:
        return MigrationRewrite(robot, keep_next_events=0)
    return MigrationRewrite(robot, keep_next_events=1)


def convoy_speed(classes: list[RobotClass], operator_factor: float = 0.8) -> float:
    """Team convoy moves at the operator's pace: a fraction of the slowest robot."""
    return operator_factor * min(c.max_speed for c in classes)


def reseed_order(ring_order: list[int], trigger: int) -> dict[int, tuple[tuple[int, int], tuple[int, int]]]:
    """Post-arrival seed meetings per robot: (first edge, second edge).

    The trigger robot meets its successor first; everyone else meets their
    predecessor first.  Edges are (predecessor, successor) pairs.
    """
    n = len(ring_order)
    out: dict[int, tuple[tuple[int, int], tuple[int, int]]] = {}
    for k, r in enumerate(ring_order):
        succ = ring_order[(k + 1) % n]
        pred = ring_order[(k - 1) % n]
        succ_edge = (r, succ)
        pred_edge = (pred, r)
        if r == trigger:
            out[r] = (succ_edge, pred_edge)
        else:
            out[r] = (pred_edge, succ_edge)
    return out
