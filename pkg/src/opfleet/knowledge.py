"""Versioned team knowledge carried in every exchanged payload.

Every field an agent may act on is either monotone (sets that only grow,
per-peer freshness vectors) or versioned (last-writer-wins by version
counter), so merging at a contact is associative and order-independent.
Agents only ever read their own copy: the information partition falls out of
the merge discipline.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

from .world import Cell


@dataclass
class Versioned:
    version: int = 0
    value: Any = None

    def bump(self, value: Any) -> None:
        self.version += 1
        self.value = value

    def adopt(self, other: "Versioned") -> bool:
        if other.version > self.version:
            self.version = other.version
            self.value = other.value
            return True
        return False

    def copy(self) -> "Versioned":
        return Versioned(self.version, self.value)


@dataclass
class TeamKnow:
    """One agent's view of its team's shared protocol state."""

    team_id: int
    ring: Versioned = field(default_factory=Versioned)          # list of robot ids
    op_pos: Versioned = field(default_factory=Versioned)        # Cell
    t_h: Versioned = field(default_factory=Versioned)           # int
    priority: Versioned = field(default_factory=Versioned)      # RegionPriority-ish dict
    migration: Versioned = field(default_factory=Versioned)     # dict | None
    transition: Versioned = field(default_factory=Versioned)    # dict | None  (spread->chain epoch)
    chain: Versioned = field(default_factory=Versioned)         # dict | None  (active chain)
    plans: dict[int, tuple[int, list[dict]]] = field(default_factory=dict)  # rid -> (as_of, events)
    requests: dict[int, Versioned] = field(default_factory=dict)            # req_id -> request dict
    claimed: dict[Cell, tuple[int, str]] = field(default_factory=dict)  # cell -> (expiry, owner)
    failed: dict[int, Versioned] = field(default_factory=dict)  # rid -> failed flag
    recovery: dict[int, Versioned] = field(default_factory=dict)   # failed rid -> recovery dict
    addressed: dict[str, Versioned] = field(default_factory=dict)  # key -> {to, event, insert_after}
    overrides: dict[int, Versioned] = field(default_factory=dict)  # event id -> [sub event dicts]
    externals: dict[str, Versioned] = field(default_factory=dict)  # pair key -> external dict
    t_c: dict[str, Versioned] = field(default_factory=dict)        # pair key -> int

    def copy(self) -> "TeamKnow":
        k = TeamKnow(self.team_id)
        k.ring = self.ring.copy()
        k.op_pos = self.op_pos.copy()
        k.t_h = self.t_h.copy()
        k.priority = self.priority.copy()
        k.migration = self.migration.copy()
        k.transition = self.transition.copy()
        k.chain = self.chain.copy()
        k.plans = {r: (t, [dict(e) for e in evs]) for r, (t, evs) in self.plans.items()}
        k.requests = {i: v.copy() for i, v in self.requests.items()}
        k.claimed = dict(self.claimed)
        k.failed = {i: v.copy() for i, v in self.failed.items()}
        k.recovery = {i: v.copy() for i, v in self.recovery.items()}
        k.addressed = {i: v.copy() for i, v in self.addressed.items()}
        k.overrides = {i: v.copy() for i, v in self.overrides.items()}
        k.externals = {i: v.copy() for i, v in self.externals.items()}
        k.t_c = {i: v.copy() for i, v in self.t_c.items()}
        return k


def _merge_versioned_map(a: dict, b: dict) -> None:
    for key, vb in b.items():
        va = a.get(key)
        if va is None:
            a[key] = vb.copy()
        else:
            va.adopt(vb)


def merge_team_know(a: TeamKnow, b: TeamKnow) -> None:
    """Two-way merge: both copies converge to the join."""
    for field_name in ("ring", "op_pos", "t_h", "priority", "migration", "transition", "chain"):
        va: Versioned = getattr(a, field_name)
        vb: Versioned = getattr(b, field_name)
        if vb.version > va.version:
            setattr(a, field_name, vb.copy())
        elif va.version > vb.version:
            setattr(b, field_name, va.copy())
    for rid in set(a.plans) | set(b.plans):
        pa, pb = a.plans.get(rid), b.plans.get(rid)
        newest = max((p for p in (pa, pb) if p is not None), key=lambda p: p[0])
        a.plans[rid] = (newest[0], [dict(e) for e in newest[1]])
        b.plans[rid] = (newest[0], [dict(e) for e in newest[1]])
    for attr in ("requests", "recovery", "addressed", "overrides", "externals", "t_c"):
        da, db = getattr(a, attr), getattr(b, attr)
        _merge_versioned_map(da, db)
        _merge_versioned_map(db, da)
    claimed = dict(a.claimed)
    for c, entry in b.claimed.items():
        if c not in claimed or entry > claimed[c]:
            claimed[c] = entry
    a.claimed = dict(claimed)
    b.claimed = dict(claimed)
    _merge_versioned_map(a.failed, b.failed)
    _merge_versioned_map(b.failed, a.failed)


def merge_externals_only(a: TeamKnow, b: TeamKnow) -> None:
    """Cross-team contact: only the shared external schedule converges."""
    _merge_versioned_map(a.externals, b.externals)
    _merge_versioned_map(b.externals, a.externals)
    _merge_versioned_map(a.t_c, b.t_c)
    _merge_versioned_map(b.t_c, a.t_c)


def failed_set(know: TeamKnow) -> set[int]:
    return {rid for rid, v in know.failed.items() if v.value}


def pair_key(team_a: int, team_b: int) -> str:
    lo, hi = sorted((team_a, team_b))
    return f"{lo}-{hi}"
