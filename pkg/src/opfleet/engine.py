"""Deterministic tick-driven simulation kernel.

Agents move along confirmed plans, sense, and coordinate only at contacts;
every decision reads the deciding agents' own merged knowledge, never global
state.  The kernel is single-threaded; all iteration orders are fixed so a
(scenario, seed) pair reproduces a byte-identical trace.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
from dataclasses import dataclass, field

import numpy as np

from . import chain as chain_mod
from . import migrate as migrate_mod
from . import requests as req_mod
from .commmodel import CommParams, can_communicate, quality
from .frontier import detect_frontiers, detect_frontiers_adaptive
from .knowledge import (TeamKnow, Versioned, failed_set, merge_externals_only,
                        merge_team_know, pair_key)
from .protocol import CommEvent, EventKind, LocalPlan, PlanStep, StampTuple, estimate_chi
from .resilience import WaitRole, wait_bound
from .scenario import Scenario, TeamSpec
from .spread import (
    CoordinationFault,
    PairContext,
    RobotView,
    determine_external,
    determine_return,
    optimize_next_meeting,
    plan_next_external,
    select_meeting_point,
)
from .world import (
    Cell,
    FREE,
    NavGrid,
    OccGrid,
    RobotClass,
    SQRT2,
    UNKNOWN,
    passable_array,
    sense,
    ticks_for,
)


class EngineError(Exception):
    pass


class InvariantBreach(EngineError):
    pass


MODE_SPREAD = "spread"
MODE_SINGLE = "single_explore"
MODE_MESSENGER = "messenger"
MODE_MESSENGER_WAIT = "messenger_wait"
MODE_CHAIN_BOUND = "chain_bound"
MODE_CHAIN_RELAY = "chain_relay"
MODE_CHAIN_TARGET = "chain_target"
MODE_MIGRATE_STAGE = "migrate_stage"
MODE_MIGRATE_CONVOY = "migrate_convoy"
MODE_FAILED = "failed"


def _ev_to_dict(ev: CommEvent) -> dict:
    return ev.to_dict()


def _ev_from_dict(d: dict) -> CommEvent:
    peers = tuple(tuple(p) if isinstance(p, list) else p for p in d["peers"])
    return CommEvent(d["t"], tuple(d["p"]), peers, EventKind(d["kind"]), d["id"])


@dataclass
class RobotAgent:
    rid: int
    team_id: int
    slot: int
    cls: RobotClass
    pose: Cell
    grid: OccGrid
    know: TeamKnow
    omega: StampTuple
    actual: list[int]
    plan: LocalPlan = field(default_factory=LocalPlan)
    mode: str = MODE_SPREAD
    progress: float = 0.0
    battery: float | None = None
    alive: bool = True
    arrived_at: int | None = None       # tick the current head route was consumed
    messenger_for: tuple[str, int] | None = None   # (pair key, seq)
    chain_post: int | None = None       # interior anchor index while relaying
    pending_confirm: dict | None = None  # xi5 payload tag awaiting scheduling
    applied_keys: set[str] = field(default_factory=set)
    applied_overrides: set[int] = field(default_factory=set)
    migrate_rewritten: bool = False
    pair_round: int = 0                 # 2-ring data-flow alternation counter
    traj: float = 0.0

    def tail(self, now: int) -> tuple[int, Cell]:
        ev = self.plan.tail_event()
        if ev is None:
            return now, self.pose
        return max(ev.time, now), ev.location

    def head_event(self) -> CommEvent | None:
        h = self.plan.head()
        return h.event if h else None


@dataclass
class OperatorAgent:
    team_id: int
    pose: Cell
    grid: OccGrid
    know: TeamKnow
    stamps: list[int]                  # true data timestamps per team slot
    speed: float
    route: list[Cell] = field(default_factory=list)
    progress: float = 0.0
    gated: list[dict] = field(default_factory=list)   # operator requests awaiting a return
    move_goal: Cell | None = None
    traj: float = 0.0


@dataclass
class TeamRuntime:
    spec: TeamSpec
    slots: dict[int, int]              # rid -> stamp slot
    rids: list[int]                    # slot -> rid
    grace_edges: set[frozenset] = field(default_factory=set)  # edges that must meet to lift grace
    grace_exempt: set[int] = field(default_factory=set)       # rids exempt from latency checks
    round_edges_seen: set[frozenset] = field(default_factory=set)
    recovering: bool = False           # latency halts soften until recovery + a round
    migrate_pending_target: Cell | None = None
    chain_queue: list[dict] = field(default_factory=list)     # queued xi4/xi6 requests


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, (set, frozenset)):
        return sorted(o)
    return str(o)


class Trace:
    def __init__(self):
        self.records: list[dict] = []

    def log(self, **rec) -> None:
        self.records.append(rec)

    def lines(self) -> list[str]:
        return [json.dumps(r, sort_keys=True, separators=(",", ":"), default=_json_default)
                for r in self.records]

    def dump(self) -> str:
        return "\n".join(self.lines()) + "\n"

    def sha256(self) -> str:
        return hashlib.sha256(self.dump().encode()).hexdigest()


class Sim:
    """One simulation kernel over a validated scenario."""

    def __init__(self, sc: Scenario, estimator=None):
        self.sc = sc
        self.truth = sc.truth
        self.params: CommParams = sc.comm
        # pluggable quality oracle; must be deterministic and symmetric
        self.qualityfn = estimator if estimator is not None else quality
        self.now = 0
        self.rng = random.Random(sc.seed)
        self.trace = Trace()
        self.event_seq = 0
        self.req_seq = 0
        self.halted: str | None = None
        self.stall_window = sc.stall_window or (3 * max(t.t_h for t in sc.teams) + 2 * sc.t_c)
        self.last_growth = 0
        self.first_explored: dict[Cell, int] = {}
        self.max_cell_latency = 0
        self.max_stamp_latency: dict[int, int] = {}
        self.external_log: dict[str, list[int]] = {}
        self.commands: list[dict] = []     # bridge-injected, drained at tick start
        self.returns_count = 0
        self.pending_teleop: list[dict] = []

        self.teams: dict[int, TeamRuntime] = {}
        self.robots: dict[int, RobotAgent] = {}
        self.operators: dict[int, OperatorAgent] = {}
        self._init_agents()
        self._prev_in_range: set[tuple] = set()
        self._fired_pairs: set[tuple] = set()
        self.trace.log(k="header", scenario=sc.raw, seed=sc.seed, name=sc.name)
        self._initial_sense_and_seed()

    # ------------------------------------------------------------------
    # setup

    def _next_eid(self) -> int:
        self.event_seq += 1
        return self.event_seq

    def _stamp(self, v: Versioned, value) -> Versioned:
        """Version every write from one monotone clock so concurrent updates
        at different agents never collide."""
        v.version = self._next_eid()
        v.value = value
        return v

    def _mkver(self, value) -> Versioned:
        return Versioned(self._next_eid(), value)

    def _init_agents(self) -> None:
        for t in self.sc.teams:
            slots = {rid: k for k, rid in enumerate(t.robot_ids)}
            self.teams[t.team_id] = TeamRuntime(spec=t, slots=slots, rids=list(t.robot_ids))
            n = len(t.robot_ids)
            know0 = TeamKnow(t.team_id)
            know0.ring = self._mkver(list(t.robot_ids))
            know0.op_pos = self._mkver(t.operator_start)
            know0.t_h = self._mkver(t.t_h)
            know0.priority = self._mkver({"plus": [], "minus": [], "points": []})
            for pk in self._hyper_pairs():
                if t.team_id in self._pair_teams(pk):
                    know0.t_c[pk] = self._mkver(self.sc.t_c)
            grid0 = OccGrid.blank(self.truth.grid.width, self.truth.grid.height,
                                  resolution_m=self.truth.grid.resolution_m)
            slowest = min(self.sc.classes[c].max_speed for c in t.robot_classes)
            self.operators[t.team_id] = OperatorAgent(
                team_id=t.team_id,
                pose=t.operator_start,
                grid=grid0.copy(),
                know=know0.copy(),
                stamps=[0] * n,
                speed=self.sc.operator_speed_factor * slowest,
            )
            for k, rid in enumerate(t.robot_ids):
                cls = self.sc.classes[t.robot_classes[k]]
                self.robots[rid] = RobotAgent(
                    rid=rid,
                    team_id=t.team_id,
                    slot=k,
                    cls=cls,
                    pose=t.robot_starts[k],
                    grid=grid0.copy(),
                    know=know0.copy(),
                    omega=StampTuple.zeros(n),
                    actual=[0] * n,
                    battery=cls.battery_capacity,
                )

    def _hyper_pairs(self) -> list[str]:
        hr = self.sc.hyper_ring
        if len(hr) < 2:
            return []
        if len(hr) == 2:
            return [pair_key(hr[0], hr[1])]
        return sorted({pair_key(hr[i], hr[(i + 1) % len(hr)]) for i in range(len(hr))})

    def _pair_teams(self, pk: str) -> tuple[int, int]:
        a, b = pk.split("-")
        return int(a), int(b)

    def _initial_sense_and_seed(self) -> None:
        for rid in sorted(self.robots):
            self._sense_robot(self.robots[rid])
        # initial contact with the operator: everyone starts in range
        for tid in sorted(self.teams):
            op = self.operators[tid]
            for rid in self.teams[tid].rids:
                self._deliver_to_operator(op, self.robots[rid], scheduled=False, quiet=True)
        # seed one meeting per ring edge at t=0; trigger-style ordering
        for tid in sorted(self.teams):
            self._reseed_ring(tid, self.teams[tid].rids, 0, trigger=self.teams[tid].rids[0],
                              location=None)
        # seed the external schedule
        for pk in self._hyper_pairs():
            a, b = self._pair_teams(pk)
            loc, t = self._compute_external_rendezvous(a, b, 0)
            ext = {"seq": 0, "time": t, "loc": list(loc), "messenger": {}}
            for tid in (a, b):
                know = self.operators[tid].know
                know.externals[pk] = self._mkver(ext)
                for rid in self.teams[tid].rids:
                    self.robots[rid].know.externals[pk] = self._mkver(dict(ext))
            self.external_log[pk] = [0]
            ov = self.sc.initial_externals
            for o in ov:
                if pair_key(o["teams"][0], o["teams"][1]) == pk:
                    ext2 = {"seq": 0, "time": int(o["time"]), "loc": list(o["location"]),
                            "messenger": {}}
                    for tid in (a, b):
                        self.operators[tid].know.externals[pk] = self._mkver(dict(ext2))
                        for rid in self.teams[tid].rids:
                            self.robots[rid].know.externals[pk] = self._mkver(dict(ext2))

    def _pair_t_c(self, team_a: int, team_b: int) -> int:
        pk = pair_key(team_a, team_b)
        best = None
        for holder in (self.operators[team_a], self.operators[team_b]):
            v = holder.know.t_c.get(pk)
            if v is not None and (best is None or v.version > best.version):
                best = v
        return int(best.value) if best else self.sc.t_c

    def _compute_external_rendezvous(self, team_a: int, team_b: int, t_actual: int) -> tuple[Cell, int]:
        op_a, op_b = self.operators[team_a], self.operators[team_b]
        merged = op_a.grid.copy()
        merged.merge_from(op_b.grid)
        nav = NavGrid(passable_array(merged, self.truth.terrain, None))
        op_cls = RobotClass("operator", max_speed=min(op_a.speed, op_b.speed))
        loc, t = plan_next_external(nav, op_a.pose, op_b.pose, t_actual,
                                    self._pair_t_c(team_a, team_b), op_cls)
        return loc, t

    def _reseed_ring(self, tid: int, ring: list[int], t_m: int, trigger: int,
                     location: Cell | None) -> None:
        """Give every ring edge a first meeting at (t_m, location); order per
        the post-migration rule (trigger robot successor-first)."""
        team = self.teams[tid]
        if len(ring) < 2:
            if ring:
                r = self.robots[ring[0]]
                r.mode = MODE_SINGLE
            return
        if len(ring) == 2:
            # line topology: one meeting per round
            a, b = ring
            loc = location if location is not None else self.robots[b].pose
            ev = CommEvent(t_m, loc, (a, b), EventKind.INTERNAL, self._next_eid())
            for rid in ring:
                r = self.robots[rid]
                r.plan = LocalPlan()
                r.mode = MODE_SPREAD
                r.plan.append(self._route_for(r, r.pose, loc), ev)
                self._snapshot_plan(r)
            return
        order = migrate_mod.reseed_order(ring, trigger)
        edge_events: dict[tuple[int, int], CommEvent] = {}
        for edge in sorted({e for pair in order.values() for e in pair}):
            pred, succ = edge
            loc = location if location is not None else self.robots[succ].pose
            edge_events[edge] = CommEvent(t_m, loc, (pred, succ), EventKind.INTERNAL,
                                          self._next_eid())
        for rid in ring:
            r = self.robots[rid]
            r.plan = LocalPlan()
            r.mode = MODE_SPREAD
            for edge in order[rid]:
                ev = edge_events[edge]
                route = self._route_for(r, r.pose if not r.plan.steps else
                                        r.plan.tail_event().location, ev.location)
                r.plan.append(route, ev)
            self._snapshot_plan(r)

    # ------------------------------------------------------------------
    # generic helpers

    def _nav(self, grid: OccGrid, mask: frozenset[str] | None,
             avoid: frozenset[Cell] = frozenset()) -> NavGrid:
        ok = passable_array(grid, self.truth.terrain, mask)
        if avoid:
            for (x, y) in avoid:
                if 0 <= x < grid.width and 0 <= y < grid.height:
                    ok[y, x] = False
        return NavGrid(ok)

    def _claims_against(self, know: TeamKnow, me: set[int]) -> frozenset[Cell]:
        """Frontier cells currently claimed by robots other than ``me``."""
        out = []
        for c, (exp, owner) in know.claimed.items():
            if exp <= self.now:
                continue
            owners = {int(x) for x in owner.split("-")}
            if owners & me:
                continue
            out.append(c)
        return frozenset(out)

    def _avoid_cells(self, know: TeamKnow) -> frozenset[Cell]:
        pri = know.priority.value or {}
        return frozenset(tuple(c) for c in pri.get("minus", []))

    def _route_for(self, r: RobotAgent, src: Cell, dst: Cell) -> list[Cell]:
        if src == dst:
            return [src]
        nav = self._nav(r.grid, r.cls.traversal_mask, self._avoid_cells(r.know))
        p = nav.path(src, dst)
        if p is None:
            # plan on joint knowledge may momentarily exceed own map; fall back
            nav = self._nav(self.truth.grid, r.cls.traversal_mask)
            p = nav.path(src, dst)
            if p is None:
                raise EngineError(f"robot {r.rid}: no route {src}->{dst}")
        return p

    def _snapshot_plan(self, r: RobotAgent) -> None:
        r.know.plans[r.rid] = (self.now, [_ev_to_dict(s.event) for s in r.plan.steps])

    def _truth_linked(self, a: Cell, b: Cell) -> bool:
        return self.qualityfn(a, b, self.truth.grid, self.params,
                              unknown_blocks=False) > self.params.threshold

    def _ring_of(self, know: TeamKnow) -> list[int]:
        return list(know.ring.value or [])

    def _edge_orientation(self, know: TeamKnow, a: int, b: int) -> tuple[int, int]:
        ring = self._ring_of(know)
        if a in ring and b in ring and len(ring) >= 3:
            ia = ring.index(a)
            if ring[(ia + 1) % len(ring)] == b:
                return a, b
            return b, a
        if len(ring) == 2:
            r = self.robots[min(a, b)]
            first = sorted((a, b))
            return (first[0], first[1]) if r.pair_round % 2 == 0 else (first[1], first[0])
        return (a, b) if a < b else (b, a)

    def _active_slots(self, know: TeamKnow, team: TeamRuntime) -> list[int]:
        ring = [rid for rid in self._ring_of(know) if rid not in failed_set(know)]
        slots = sorted(team.slots[rid] for rid in ring if rid in team.slots)
        return slots or sorted(team.slots.values())

    # ------------------------------------------------------------------
    # payload exchange

    def _exchange_robot_robot(self, a: RobotAgent, b: RobotAgent, full: bool) -> None:
        a.grid.merge_from(b.grid)
        b.grid.merge_from(a.grid)
        if a.team_id == b.team_id:
            for n in range(len(a.actual)):
                m = max(a.actual[n], b.actual[n])
                a.actual[n] = m
                b.actual[n] = m
            a.actual[a.slot] = self.now
            b.actual[b.slot] = self.now
            merge_team_know(a.know, b.know)
            if not full:
                # local-data-only exchange still sharpens the stamp estimates
                for n in range(len(a.omega.omega_h)):
                    h = max(a.omega.omega_h[n], b.omega.omega_h[n])
                    a.omega.omega_h[n] = h
                    b.omega.omega_h[n] = h
                    a.omega.omega_r[n] = max(a.omega.omega_r[n], b.actual[n])
                    b.omega.omega_r[n] = max(b.omega.omega_r[n], a.actual[n])
            self._apply_knowledge(a)
            self._apply_knowledge(b)
        else:
            merge_externals_only(a.know, b.know)

    def _deliver_to_operator(self, op: OperatorAgent, r: RobotAgent,
                             scheduled: bool, quiet: bool = False) -> dict:
        """A robot shares everything with its operator (a return or spontaneous
        contact); records receipt latency of newly delivered cells."""
        before = op.grid.cells != UNKNOWN
        op.grid.merge_from(r.grid)
        new_mask = (op.grid.cells != UNKNOWN) & ~before
        ys, xs = np.nonzero(new_mask)
        new_cells = [(int(x), int(y)) for x, y in zip(xs.tolist(), ys.tolist())]
        min_explore = None
        for c in new_cells:
            t0 = self.first_explored.get(c, self.now)
            if min_explore is None or t0 < min_explore:
                min_explore = t0
        lat = (self.now - min_explore) if min_explore is not None else 0
        self.max_cell_latency = max(self.max_cell_latency, lat)
        r.actual[r.slot] = self.now
        for n in range(len(op.stamps)):
            op.stamps[n] = max(op.stamps[n], r.actual[n])
        merge_team_know(op.know, r.know)
        op.know.plans[r.rid] = (self.now, [_ev_to_dict(s.event) for s in r.plan.steps])
        r.grid.merge_from(op.grid)
        for n in range(len(r.omega.omega_h)):
            r.omega.omega_h[n] = max(r.omega.omega_h[n], r.actual[n])
        self._apply_knowledge(r)
        if not quiet or new_cells:
            self.trace.log(k="deliver", t=self.now, rid=r.rid, team=op.team_id,
                           scheduled=scheduled, new=len(new_cells), lat=lat,
                           at=list(op.pose), stamps=list(op.stamps))
        return {"new": len(new_cells), "lat": lat}

    # ------------------------------------------------------------------
    # knowledge application (addressed events, overrides, recovery, ring state)

    def _apply_knowledge(self, r: RobotAgent) -> None:
        know = r.know
        # failed peers: scrub dead meetings
        dead = failed_set(know)
        if r.rid in dead:
            # I am alive; heal the record before anything else reads it
            v = know.failed[r.rid]
            self._stamp(v, False)
            dead.discard(r.rid)
        if dead:
            kept = []
            for s in r.plan.steps:
                peers = [p for p in s.event.peers if isinstance(p, int)]
                if any(p in dead for p in peers) and s.event.kind == EventKind.INTERNAL:
                    continue
                kept.append(s)
            if len(kept) != len(r.plan.steps):
                r.plan.steps = kept
                self._snapshot_plan(r)
        # recovery instructions addressed to me
        for frid in sorted(know.recovery):
            v = know.recovery[frid]
            rec = v.value
            if not rec:
                continue
            if rec.get("resolved"):
                # drop any rendezvous step left over from this recovery
                before = len(r.plan.steps)
                r.plan.steps = [s for s in r.plan.steps
                                if not (s.event.kind == EventKind.RENDEZVOUS
                                        and s.event.event_id == rec.get("eid"))]
                if len(r.plan.steps) != before:
                    self._snapshot_plan(r)
                continue
            key = f"rec:{frid}:{v.version}"
            if rec.get("partner") == r.rid and key not in r.applied_keys:
                r.applied_keys.add(key)
                loc = tuple(rec["rendezvous"])
                peers = ((r.rid, rec["detector"]) if rec["case"] == 2
                         else (rec["detector"], r.rid))
                ev = CommEvent(rec["t"], loc, peers, EventKind.RENDEZVOUS, rec["eid"])
                if any(s.event.event_id == ev.event_id for s in r.plan.steps):
                    continue
                if rec["case"] == 1:
                    # the detector is heading straight here; meet it first
                    r.plan.steps.insert(0, PlanStep(self._route_for(r, r.pose, loc), ev))
                else:
                    src = r.plan.tail_event().location if r.plan.steps else r.pose
                    r.plan.append(self._route_for(r, src, loc), ev)
                self._snapshot_plan(r)
        # addressed events
        for key in sorted(know.addressed):
            v = know.addressed[key]
            d = v.value
            if d.get("to") != r.rid or key in r.applied_keys:
                continue
            r.applied_keys.add(key)
            ev = _ev_from_dict(d["event"])
            after_eid = d.get("after")
            if after_eid is not None:
                idx = next((i for i, s in enumerate(r.plan.steps)
                            if s.event.event_id == after_eid), None)
                if idx is not None:
                    prev_loc = r.plan.steps[idx].event.location
                    step = PlanStep(self._route_for(r, prev_loc, ev.location), ev)
                    r.plan.steps.insert(idx + 1, step)
                    if idx + 2 < len(r.plan.steps):
                        nxt = r.plan.steps[idx + 2]
                        nxt.route = self._route_for(r, ev.location, nxt.event.location)
                    self._snapshot_plan(r)
                    continue
            src = r.plan.tail_event().location if r.plan.steps else r.pose
            r.plan.append(self._route_for(r, src, ev.location), ev)
            self._snapshot_plan(r)
        # event decompositions (reinsertion of chain robots / messengers)
        for eid in sorted(know.overrides):
            if eid in r.applied_overrides:
                continue
            idx = next((i for i, s in enumerate(r.plan.steps) if s.event.event_id == eid), None)
            if idx is None:
                continue
            r.applied_overrides.add(eid)
            subs = [_ev_from_dict(d) for d in know.overrides[eid].value]
            mine = [e for e in subs if r.rid in e.peers]
            old = r.plan.steps[idx]
            new_steps = []
            for k2, e in enumerate(mine):
                new_steps.append(PlanStep(old.route if k2 == 0 else [old.event.location], e))
            r.plan.steps[idx : idx + 1] = new_steps
            self._snapshot_plan(r)
        # ring collapse to single-explore
        ring = self._ring_of(know)
        if (ring == [r.rid] and r.alive and r.mode in (MODE_SPREAD, MODE_SINGLE)):
            r.mode = MODE_SINGLE
        # migration command reaches me outside a meeting (e.g. via spontaneous)
        mig = know.migration.value
        if (mig and mig.get("stage") == "propagate" and not r.migrate_rewritten
                and r.mode in (MODE_SPREAD, MODE_SINGLE)):
            pass  # rewrite happens at the next meeting per the last-round rule

    # ------------------------------------------------------------------
    # tick loop

    def step(self) -> None:
        if self.halted:
            raise EngineError("stepping a halted simulation")
        self._drain_commands()
        self._inject_failures()
        self._move_agents()
        self._sense_all()
        self._contacts()
        self._operator_contact_tick()
        self._chain_tick()
        self._migration_tick()
        self._regroup_tick()
        self._single_sweep()
        self._failure_detection()
        self._latency_tick()
        self._stall_tick()
        self.now += 1

    def run(self) -> Trace:
        while self.halted is None and self.now < self.sc.tick_limit:
            self.step()
            if self.is_complete():
                self.halted = "complete"
        if self.halted is None:
            self.halted = "tick_limit"
        self._finalize()
        return self.trace

    def is_complete(self) -> bool:
        needed = self._reachable_free()
        for op in self.operators.values():
            known = op.grid.cells != UNKNOWN
            if not np.all(known[needed]):
                return False
        return True

    def _reachable_free(self) -> np.ndarray:
        if not hasattr(self, "_reachable_cache"):
            total = np.zeros_like(self.truth.grid.cells, dtype=bool)
            for t in self.sc.teams:
                for start, cname in zip(t.robot_starts, t.robot_classes):
                    cls = self.sc.classes[cname]
                    nav = self._nav(self.truth.grid, cls.traversal_mask)
                    f = nav.field(start)
                    total |= np.isfinite(f)
            self._reachable_cache = total
        return self._reachable_cache

    def _finalize(self) -> None:
        coverage = {}
        for tid, op in self.operators.items():
            known_free = int(np.count_nonzero((op.grid.cells == FREE)))
            coverage[str(tid)] = known_free
        needed = int(np.count_nonzero(self._reachable_free()))
        self.trace.log(
            k="summary", t=self.now, outcome=self.halted,
            complete=self.halted == "complete",
            coverage_known=coverage, reachable_cells=needed,
            max_cell_latency=self.max_cell_latency,
            max_stamp_latency={str(k): v for k, v in sorted(self.max_stamp_latency.items())},
            returns=self.returns_count,
            externals={k: v for k, v in sorted(self.external_log.items())},
            traj={str(r.rid): round(r.traj, 3) for r in
                  sorted(self.robots.values(), key=lambda x: x.rid)},
            op_traj={str(t): round(self.operators[t].traj, 3) for t in sorted(self.operators)},
        )

    # ------------------------------------------------------------------
    # phases

    def _drain_commands(self) -> None:
        for rq in self.sc.requests:
            if int(rq.get("tick", 0)) == self.now:
                self.commands.append(dict(rq))
        cmds, self.commands = self.commands, []
        for cmd in cmds:
            self._admit_command(cmd)

    def _admit_command(self, cmd: dict) -> None:
        issuer = cmd.get("issuer", "")
        kind = cmd.get("kind", "")
        if issuer.startswith("operator:"):
            tid = int(issuer.split(":")[1])
            if kind == "teleop":
                ch = self.operators[tid].know.chain.value
                if not ch or ch.get("phase") != "active":
                    self.trace.log(k="teleop", t=self.now, team=tid, ok=False, why="no-chain")
                    return
                self.pending_teleop.append(cmd)
                return
            if kind == "retarget":
                self._retarget(tid, tuple(cmd.get("args", {}).get("target")))
                return
            self.operators[tid].gated.append(cmd)
            self.trace.log(k="request", t=self.now, status="queued", cmd=_san(cmd))
        elif issuer.startswith("robot:"):
            rid = int(issuer.split(":")[1])
            r = self.robots[rid]
            if not r.alive:
                self.trace.log(k="request", t=self.now, status="dropped-dead-issuer", cmd=_san(cmd))
                return
            self.req_seq += 1
            req = {
                "id": self.req_seq, "kind": kind, "issuer": issuer, "team": r.team_id,
                "issued_at": self.now, "args": cmd.get("args", {}), "status": "propagating",
            }
            if kind == "xi5":
                r.pending_confirm = req
            r.know.requests[req["id"]] = self._mkver(req)
            self.trace.log(k="request", t=self.now, status="propagating", req=_san(req))

    def _inject_failures(self) -> None:
        for f in self.sc.failures:
            if int(f["tick"]) == self.now:
                r = self.robots[int(f["robot"])]
                r.alive = False
                r.mode = MODE_FAILED
                self.trace.log(k="fail", t=self.now, rid=r.rid)

    def _move_agents(self) -> None:
        for rid in sorted(self.robots):
            r = self.robots[rid]
            if not r.alive:
                continue
            speed = r.cls.max_speed
            if r.mode == MODE_MIGRATE_CONVOY:
                continue  # moved with the operator below
            self._advance_route_holder(r, speed)
        for tid in sorted(self.operators):
            op = self.operators[tid]
            if op.route:
                moved = self._advance(op, op.route, op.speed)
                op.traj += moved
                mig = op.know.migration.value
                if mig and mig.get("stage") == "convoy":
                    for rid in sorted(self.robots):
                        r = self.robots[rid]
                        if r.team_id == tid and r.mode == MODE_MIGRATE_CONVOY:
                            r.pose = op.pose
                            r.traj += moved
                if len(op.route) <= 1 and op.move_goal is not None and op.pose == op.move_goal:
                    op.route = []
                    self._operator_arrived(op)

    def _advance_route_holder(self, r: RobotAgent, speed: float) -> None:
        head = r.plan.head()
        if head is None:
            r.progress = 0.0
            return
        if len(head.route) <= 1:
            if r.arrived_at is None:
                r.arrived_at = self.now
            r.progress = 0.0
            return
        moved = self._advance(r, head.route, speed)
        r.traj += moved
        if r.battery is not None and moved > 0:
            r.battery -= moved * r.cls.drain_per_cell
            if r.battery <= 0:
                r.alive = False
                r.mode = MODE_FAILED
                self.trace.log(k="fail", t=self.now, rid=r.rid, why="battery")
                return
        if len(head.route) <= 1 and r.arrived_at is None:
            r.arrived_at = self.now

    def _advance(self, agent, route: list[Cell], speed: float) -> float:
        """Walk along the route with a carried distance budget; returns distance moved."""
        if route and route[0] != agent.pose:
            # route starts at a stale position; re-anchor
            route.insert(0, agent.pose)
        agent.progress += speed
        moved = 0.0
        while len(route) > 1:
            a, b = route[0], route[1]
            step = SQRT2 if (a[0] != b[0] and a[1] != b[1]) else 1.0
            if agent.progress + 1e-9 < step:
                break
            agent.progress -= step
            moved += step
            route.pop(0)
            agent.pose = b
        if len(route) <= 1:
            agent.progress = 0.0
        return moved

    def _sense_robot(self, r: RobotAgent) -> None:
        seen = sense(r.pose, self.truth, self.sc.sense_range)
        new_cells = []
        for c, state in seen.items():
            if r.grid.at(c) == UNKNOWN:
                r.grid.set(c, state)
                new_cells.append((c, state))
                if c not in self.first_explored:
                    self.first_explored[c] = self.now
                    self.last_growth = self.now
        if new_cells:
            r.actual[r.slot] = self.now
            self.trace.log(k="sense", t=self.now, rid=r.rid, at=list(r.pose),
                           cells=sorted([int(c[0][0]), int(c[0][1]), int(c[1])] for c in new_cells))

    def _sense_all(self) -> None:
        for rid in sorted(self.robots):
            r = self.robots[rid]
            if r.alive:
                self._sense_robot(r)
                r.actual[r.slot] = self.now

    # ------------------------------------------------------------------
    # contacts

    def _contacts(self) -> None:
        self._fired_pairs = set()
        in_range_now = self._compute_in_range()
        spont_handled: set[tuple] = set()
        for _ in range(16 * max(1, len(self.robots))):
            if self._fire_one_ready():
                continue
            did = False
            for pair in sorted(in_range_now - self._prev_in_range - spont_handled):
                if pair in self._fired_pairs:
                    spont_handled.add(pair)
                    continue
                self._spontaneous(pair)
                spont_handled.add(pair)
                did = True
                break
            if not did:
                break
        self._prev_in_range = self._compute_in_range()

    def _compute_in_range(self) -> set[tuple]:
        out = set()
        rids = sorted(self.robots)
        for i, a in enumerate(rids):
            ra = self.robots[a]
            if not ra.alive:
                continue
            for b in rids[i + 1 :]:
                rb = self.robots[b]
                if rb.alive and self._truth_linked(ra.pose, rb.pose):
                    out.add(("r", a, b))
            for tid in sorted(self.operators):
                if self._truth_linked(ra.pose, self.operators[tid].pose):
                    out.add(("o", a, tid))
        return out

    def _fire_one_ready(self) -> bool:
        candidates = []
        for rid in sorted(self.robots):
            r = self.robots[rid]
            if not r.alive:
                continue
            head = r.plan.head()
            if head is None or len(head.route) > 1:
                continue
            ev = head.event
            candidates.append((ev.time, ev.event_id, rid))
        for _, eid, rid in sorted(candidates):
            r = self.robots[rid]
            ev = r.plan.head().event
            if self._event_ready(r, ev):
                self._fire(r, ev)
                return True
        return False

    def _event_ready(self, r: RobotAgent, ev: CommEvent) -> bool:
        if ev.kind == EventKind.CHAIN_ARRIVAL:
            return True
        if ev.kind == EventKind.RETURN:
            op = self.operators[ev.peers[1][1]]
            return self._truth_linked(r.pose, op.pose)
        if ev.kind == EventKind.EXTERNAL:
            partner = self._external_partner(r, ev)
            return partner is not None
        # internal / rendezvous meetings need the peer in place
        other = ev.other(r.rid)
        if not isinstance(other, int):
            return False
        q = self.robots.get(other)
        if q is None or not q.alive:
            return False
        qh = q.plan.head()
        if qh is None or len(qh.route) > 1:
            return False
        if qh.event.event_id != ev.event_id:
            # recovery rendezvous pair up by peers, not by event identity
            if not (ev.kind == EventKind.RENDEZVOUS
                    and qh.event.kind == EventKind.RENDEZVOUS
                    and set(p for p in qh.event.peers if isinstance(p, int))
                    == {r.rid, other}):
                return False
        if ev.kind == EventKind.INTERNAL and self.now < ev.time:
            return False
        return self._truth_linked(r.pose, q.pose)

    def _external_partner(self, r: RobotAgent, ev: CommEvent) -> RobotAgent | None:
        tag = ev.peers[1]
        pk, seq = tag[1], tag[2]
        for rid in sorted(self.robots):
            q = self.robots[rid]
            if q.rid == r.rid or not q.alive or q.team_id == r.team_id:
                continue
            if q.messenger_for != (pk, seq):
                continue
            qh = q.plan.head()
            if qh is None or qh.event.kind != EventKind.EXTERNAL or len(qh.route) > 1:
                continue
            if self._truth_linked(r.pose, q.pose):
                return q
        return None

    def _fire(self, r: RobotAgent, ev: CommEvent) -> None:
        if ev.kind == EventKind.CHAIN_ARRIVAL:
            r.plan.pop()
            r.arrived_at = None
            self._chain_arrival(r, ev)
            return
        if ev.kind == EventKind.RETURN:
            r.plan.pop()
            r.arrived_at = None
            self._return_event(r, ev)
            return
        if ev.kind == EventKind.EXTERNAL:
            q = self._external_partner(r, ev)
            r.plan.pop()
            q.plan.pop()
            r.arrived_at = None
            q.arrived_at = None
            self._external_event(r, q, ev)
            return
        other = self.robots[ev.other(r.rid)]
        r.plan.pop()
        other.plan.pop()
        if ev.kind == EventKind.RENDEZVOUS:
            # one recovery meeting settles the pair; drop redundant copies
            pair = {r.rid, other.rid}
            for q in (r, other):
                q.plan.steps = [
                    s for s in q.plan.steps
                    if not (s.event.kind == EventKind.RENDEZVOUS
                            and set(p for p in s.event.peers if isinstance(p, int))
                            == pair)
                ]
        r.arrived_at = None
        other.arrived_at = None
        self._fired_pairs.add(("r", min(r.rid, other.rid), max(r.rid, other.rid)))
        self._meeting(r, other, ev)

    # ------------------------------------------------------------------
    # meetings

    def _meeting(self, a: RobotAgent, b: RobotAgent, ev: CommEvent) -> None:
        pred_rid, succ_rid = self._edge_orientation(a.know, *[p for p in ev.peers
                                                              if isinstance(p, int)])
        if pred_rid not in (a.rid, b.rid) or succ_rid not in (a.rid, b.rid):
            pred_rid, succ_rid = sorted((a.rid, b.rid))
        pa = self.robots[pred_rid]
        pb = self.robots[succ_rid]
        know_a = list(pa.actual)
        know_b = list(pb.actual)
        if ev.kind == EventKind.RENDEZVOUS:
            # settle the recovery before the knowledge merge can re-plant it
            for holder in (pa, pb):
                for frid in sorted(holder.know.recovery):
                    v = holder.know.recovery[frid]
                    rec2 = v.value
                    if (rec2 and not rec2.get("resolved")
                            and {rec2.get("detector"), rec2.get("partner")}
                            <= {pa.rid, pb.rid}):
                        self._stamp(v, {**rec2, "resolved": True,
                                        "resolved_at": self.now})
                        self.trace.log(k="recovered", t=self.now, team=pa.team_id,
                                       failed=frid, pair=[pa.rid, pb.rid])
        self._exchange_robot_robot(pa, pb, full=True)
        if len(self._ring_of(pa.know)) == 2:
            pa.pair_round += 1
            pb.pair_round += 1
        team = self.teams[pa.team_id]
        mig = pa.know.migration.value
        trans = pa.know.transition.value
        team.round_edges_seen.add(frozenset((pred_rid, succ_rid)))
        self._grace_progress(team, pred_rid, succ_rid)
        rec = {
            "k": "meet", "t": self.now, "eid": ev.event_id, "edge": [pred_rid, succ_rid],
            "at": list(ev.location), "team": pa.team_id, "kind": ev.kind.value,
            "know_pred": know_a, "know_succ": know_b,
        }
        if mig and mig.get("stage") == "propagate":
            self._migration_meeting(pa, pb, ev, rec)
        elif pa.messenger_for or pb.messenger_for:
            self._handover_meeting(pa, pb, ev, rec)
        elif trans and trans.get("active"):
            self._transition_meeting(pa, pb, ev, rec)
        else:
            self._spread_coordinate(pa, pb, ev, rec)
        self._snapshot_plan(pa)
        self._snapshot_plan(pb)
        merge_team_know(pa.know, pb.know)
        self.trace.log(**rec)

    def _pair_context(self, a: RobotAgent, b: RobotAgent) -> PairContext:
        team = self.teams[a.team_id]
        avoid = self._avoid_cells(a.know)
        nav_cache: dict = {}

        def nav_for(mask):
            key = tuple(sorted(mask)) if mask else None
            if key not in nav_cache:
                nav_cache[key] = self._nav(a.grid, mask, avoid)
            return nav_cache[key]

        pair_mask = a.cls.traversal_mask & b.cls.traversal_mask
        ta, pa_ = a.tail(self.now)
        tb, pb_ = b.tail(self.now)
        pri = a.know.priority.value or {}
        return PairContext(
            i=RobotView(a.slot, a.cls, ta, pa_, a.omega),
            j=RobotView(b.slot, b.cls, tb, pb_, b.omega),
            nav_pair=nav_for(pair_mask),
            nav_by_idx={a.slot: nav_for(a.cls.traversal_mask),
                        b.slot: nav_for(b.cls.traversal_mask)},
            operator_pos=tuple(a.know.op_pos.value),
            t_h=int(a.know.t_h.value),
            active=self._active_slots(a.know, team),
            min_frontier_size=self.sc.min_frontier_size,
            claimed_cells=self._claims_against(a.know, {a.rid, b.rid}),
            priority_points=tuple(tuple(p) for p in pri.get("points", [])),
            avoid_cells=avoid,
        )

    def _spread_coordinate(self, pred: RobotAgent, succ: RobotAgent, ev: CommEvent,
                           rec: dict, plan_next: bool = True) -> None:
        a, b = pred, succ
        ctx = self._pair_context(a, b)
        try:
            dec = determine_return(ctx, pred_slot=a.slot)
        except CoordinationFault as e:
            self._violation(a.team_id, "coordination-fault", str(e))
            return
        a.omega = dec.omega_i
        b.omega = dec.omega_j
        rec["chi_pre"] = dec.chi_pre
        rec["chi_star"] = dec.chi_star
        if dec.returner is not None:
            view = a if dec.returner == a.slot else b
            self._append_return(view, dec.arrival)
            rec["return"] = {"rid": view.rid, "arrival": dec.arrival}
        if not plan_next:
            return
        ctx2 = self._pair_context(a, b)
        try:
            plan = optimize_next_meeting(
                ctx2, dec.chi_star,
                (ctx2.i.tail_time, ctx2.i.tail_pos),
                (ctx2.j.tail_time, ctx2.j.tail_pos), a.grid,
            )
        except CoordinationFault:
            # stale stamps after heavy churn: regroup at the operator to reset
            self._regroup_pair(a, b, rec)
            return
        a.omega = plan.omega_i
        b.omega = plan.omega_j
        meet_t = plan.time
        if not plan.toured_frontiers and meet_t <= self.now and plan.point == ev.location:
            # nothing left to explore nearby: idle between meetings, but stay
            # inside the latency budget for the next delivery
            back = max(
                ticks_for(ctx2.nav_by_idx[v.slot].distance(
                    tuple(a.know.op_pos.value), plan.point), v.cls)
                for v in (a, b)
            )
            slack = int(a.know.t_h.value) + dec.chi_star - back
            meet_t = min(self.now + max(1, int(a.know.t_h.value) // 4),
                         max(self.now + 1, int(slack)))
        nxt = CommEvent(meet_t, plan.point, (a.rid, b.rid), EventKind.INTERNAL,
                        self._next_eid())
        a.plan.append(plan.route_i, nxt)
        b.plan.append(plan.route_j, nxt)
        owner = f"{min(a.rid, b.rid)}-{max(a.rid, b.rid)}"
        for f in plan.toured_frontiers:
            for c in f.member_cells:
                cur = a.know.claimed.get(c)
                if cur is None or (plan.time, owner) > cur:
                    a.know.claimed[c] = (plan.time, owner)
        rec["next"] = {"eid": nxt.event_id, "t": nxt.time, "p": list(nxt.location)}
        rec["dropped"] = [list(c) for c in plan.dropped_frontiers]
        rec["toured"] = [list(f.representative) for f in plan.toured_frontiers]
        rec["omega_pred"] = a.omega.to_dict()
        rec["omega_succ"] = b.omega.to_dict()
        self._maybe_external(a, b, nxt, rec)
        self._maybe_xi5(a, b, nxt, rec)

    def _regroup_pair(self, a: RobotAgent, b: RobotAgent, rec: dict) -> None:
        """Even the direct meeting would breach the budget: both deliver to the
        operator first, then meet there with a fresh baseline."""
        op_pos = tuple(a.know.op_pos.value)
        arrivals = []
        for r in (a, b):
            t_tail, p_tail = r.tail(self.now)
            nav = self._nav(r.grid, r.cls.traversal_mask)
            eta = ticks_for(nav.distance(p_tail, op_pos), r.cls)
            if math.isinf(eta):
                self._violation(r.team_id, "operator-unreachable", f"robot {r.rid}")
                return
            arrival = int(t_tail + eta)
            self._append_return(r, arrival)
            arrivals.append(arrival)
        nxt = CommEvent(max(arrivals), op_pos, (a.rid, b.rid), EventKind.INTERNAL,
                        self._next_eid())
        for r in (a, b):
            r.plan.append([op_pos], nxt)
            self._snapshot_plan(r)
        rec["regroup"] = {"at": list(op_pos), "t": max(arrivals)}

    def _append_return(self, r: RobotAgent, arrival: int) -> None:
        t_tail, p_tail = r.tail(self.now)
        op_pos = tuple(r.know.op_pos.value)
        ev = CommEvent(arrival, op_pos, (r.rid, ("op", r.team_id)), EventKind.RETURN,
                       self._next_eid())
        r.plan.append(self._route_for(r, p_tail, op_pos), ev)
        self._snapshot_plan(r)

    def _maybe_external(self, a: RobotAgent, b: RobotAgent, nxt: CommEvent, rec: dict) -> None:
        for pk in sorted(a.know.externals):
            if a.team_id not in self._pair_teams(pk):
                continue
            entry = a.know.externals[pk]
            ext = entry.value
            if ext is None or ext.get("messenger", {}).get(str(a.team_id)) is not None:
                continue
            ctx = self._pair_context(a, b)
            decision = determine_external(ctx, (nxt.location, nxt.time),
                                          tuple(ext["loc"]), int(ext["time"]))
            if decision.messenger is None:
                continue
            m = a if decision.messenger == a.slot else b
            stay = b if m is a else a
            self._assign_messenger(m, stay, nxt, pk, ext, entry, rec)

    def _assign_messenger(self, m: RobotAgent, stay: RobotAgent, nxt: CommEvent,
                          pk: str, ext: dict, entry, rec: dict) -> None:
        ring = self._ring_of(m.know)
        if len(ring) <= 1 or m.rid not in ring:
            return
        # drop the just-planned pair meeting from the messenger's plan
        m.plan.steps = [s for s in m.plan.steps if s.event.event_id != nxt.event_id]
        new_ring = [r for r in ring if r != m.rid]
        if len(ring) > 2:
            # splice: the messenger's far neighbor takes its place at the meeting
            i_m = ring.index(m.rid)
            if nxt.peers[0] == m.rid:  # messenger was the data-flow predecessor
                n_rid = ring[(i_m - 1) % len(ring)]
                repl_peers = (n_rid, stay.rid)
            else:
                n_rid = ring[(i_m + 1) % len(ring)]
                repl_peers = (stay.rid, n_rid)
            repl = CommEvent(nxt.time, nxt.location, repl_peers, EventKind.INTERNAL,
                             self._next_eid())
            for s in stay.plan.steps:
                if s.event.event_id == nxt.event_id:
                    s.event = repl
            key = f"msgr:{m.know.ring.version + 1}:{n_rid}"
            m.know.addressed[key] = self._mkver(
                {"to": n_rid, "event": _ev_to_dict(repl)})
        else:
            stay.plan.steps = [s for s in stay.plan.steps if s.event.event_id != nxt.event_id]
        m.know.ring = self._mkver(new_ring)
        stay.know.ring = m.know.ring.copy()
        ext2 = dict(ext)
        ms = dict(ext2.get("messenger", {}))
        ms[str(m.team_id)] = m.rid
        ext2["messenger"] = ms
        self._stamp(entry, ext2)
        stay.know.externals[pk] = entry.copy()
        m.know.externals[pk] = entry.copy()
        # messenger tail: external event after its remaining confirmed plan
        t_tail, p_tail = m.tail(self.now)
        ext_ev = CommEvent(int(ext["time"]), tuple(ext["loc"]),
                           (m.rid, ("xt", pk, ext["seq"])), EventKind.EXTERNAL,
                           self._next_eid())
        m.plan.append(self._route_for(m, p_tail, ext_ev.location), ext_ev)
        m.messenger_for = (pk, ext["seq"])
        m.mode = MODE_MESSENGER
        self.teams[m.team_id].grace_exempt.add(m.rid)
        rec["messenger"] = {"rid": m.rid, "pair": pk, "seq": ext["seq"]}
        self.trace.log(k="rewire", t=self.now, team=m.team_id, ring=new_ring,
                       why=f"messenger:{m.rid}")
        self._apply_knowledge(stay)

    def _maybe_xi5(self, a: RobotAgent, b: RobotAgent, nxt: CommEvent, rec: dict) -> None:
        for r, peer in ((a, b), (b, a)):
            req = r.pending_confirm
            if req is None:
                continue
            round_events = self._known_round_events(r)
            nav_cache: dict = {}

            def nav_of(rid):
                q = self.robots[rid]
                key = tuple(sorted(q.cls.traversal_mask))
                if key not in nav_cache:
                    nav_cache[key] = self._nav(r.grid, q.cls.traversal_mask)
                return nav_cache[key]

            slot = req_mod.schedule_confirmation_return(
                [(t, p, carrier) for (t, p, carrier) in round_events],
                tuple(r.know.op_pos.value),
                {carrier: nav_of(carrier) for (_, _, carrier) in round_events},
                {carrier: self.robots[carrier].cls for (_, _, carrier) in round_events},
            ) if round_events else None
            if slot is not None:
                t_l, p_l, carrier = round_events[slot]
                op_pos = tuple(r.know.op_pos.value)
                nav = nav_of(carrier)
                eta = ticks_for(nav.distance(p_l, op_pos), self.robots[carrier].cls)
                rev = CommEvent(int(t_l + eta), op_pos,
                                (carrier, ("op", r.team_id)), EventKind.RETURN,
                                self._next_eid())
                key = f"xi5:{req['id']}:{carrier}"
                after_eid = self._event_id_at(r, carrier, t_l, p_l)
                r.know.addressed[key] = self._mkver(
                    {"to": carrier, "event": _ev_to_dict(rev), "after": after_eid})
                rec["xi5_slot"] = {"req": req["id"], "carrier": carrier, "at": t_l}
            else:
                t_tail, p_tail = r.tail(self.now)
                op_pos = tuple(r.know.op_pos.value)
                nav = self._nav(r.grid, r.cls.traversal_mask)
                eta = ticks_for(nav.distance(p_tail, op_pos), r.cls)
                if not math.isinf(eta):
                    self._append_return(r, int(t_tail + eta))
                    rec["xi5_slot"] = {"req": req["id"], "carrier": r.rid, "fallback": True}
            r.pending_confirm = None
            if r.rid == a.rid:
                merge_team_know(a.know, b.know)
                self._apply_knowledge(a)
                self._apply_knowledge(b)

    def _known_round_events(self, r: RobotAgent) -> list[tuple[int, Cell, int]]:
        """Future internal meetings known to r, as (time, place, carrier) where
        the carrier also attends the following event."""
        events: dict[int, CommEvent] = {}
        for rid, (_, evs) in r.know.plans.items():
            for d in evs:
                e = _ev_from_dict(d)
                if e.kind == EventKind.INTERNAL and e.time >= self.now:
                    events[e.event_id] = e
        ordered = sorted(events.values(), key=lambda e: (e.time, e.event_id))
        out = []
        for k in range(len(ordered) - 1):
            cur, nxt = ordered[k], ordered[k + 1]
            shared = set(p for p in cur.peers if isinstance(p, int)) & set(
                p for p in nxt.peers if isinstance(p, int))
            if shared:
                out.append((cur.time, cur.location, min(shared)))
        return out

    def _event_id_at(self, r: RobotAgent, rid: int, t: int, p: Cell) -> int | None:
        entry = r.know.plans.get(rid)
        if entry is None:
            return None
        for d in entry[1]:
            if d["t"] == t and tuple(d["p"]) == p:
                return d["id"]
        return None

    # ------------------------------------------------------------------
    # migration

    def _migration_meeting(self, pred: RobotAgent, succ: RobotAgent, ev: CommEvent,
                           rec: dict) -> None:
        mig = pred.know.migration.value
        trigger = mig["trigger"]
        ring = self._ring_of(pred.know)
        pred_of_trigger = None
        if len(ring) >= 2:
            idx = ring.index(trigger)
            pred_of_trigger = ring[(idx - 1) % len(ring)]
        for r in (pred, succ):
            if r.migrate_rewritten:
                continue
            keep = 0 if (r.rid == trigger or r.rid == pred_of_trigger or
                         self._was_informed_before(r, mig)) else 1
            self._migrate_truncate(r, keep)
            r.migrate_rewritten = True
        rec["migrate"] = {"stage": "propagate"}

    def _was_informed_before(self, r: RobotAgent, mig: dict) -> bool:
        return r.rid in mig.get("informed", [])

    def _migrate_truncate(self, r: RobotAgent, keep_internal: int) -> None:
        kept: list[PlanStep] = []
        internals = 0
        for s in r.plan.steps:
            if s.event.kind == EventKind.RETURN:
                kept.append(s)
                continue
            if s.event.kind == EventKind.INTERNAL and internals < keep_internal:
                kept.append(s)
                internals += 1
        r.plan.steps = kept
        t_tail, p_tail = r.tail(self.now)
        op_pos = tuple(r.know.op_pos.value)
        nav = self._nav(r.grid, r.cls.traversal_mask)
        eta = ticks_for(nav.distance(p_tail, op_pos), r.cls)
        if math.isinf(eta):
            nav = self._nav(self.truth.grid, r.cls.traversal_mask)
            eta = ticks_for(nav.distance(p_tail, op_pos), r.cls)
        ev = CommEvent(int(t_tail + eta), op_pos, (r.rid, ("op", r.team_id)),
                       EventKind.RETURN, self._next_eid())
        r.plan.append(self._route_for(r, p_tail, op_pos), ev)
        mig = dict(r.know.migration.value)
        informed = set(mig.get("informed", []))
        informed.add(r.rid)
        mig["informed"] = sorted(informed)
        self._stamp(r.know.migration, mig)
        self._snapshot_plan(r)

    def _migration_tick(self) -> None:
        for tid in sorted(self.teams):
            op = self.operators[tid]
            mig = op.know.migration.value
            if not mig:
                continue
            if mig.get("stage") == "propagate":
                ring = [rid for rid in self.teams[tid].rids
                        if self.robots[rid].alive and self.robots[rid].mode not in
                        (MODE_CHAIN_RELAY, MODE_CHAIN_TARGET, MODE_CHAIN_BOUND)]
                ready = all(
                    len(self.robots[rid].plan) == 0
                    and self._truth_linked(self.robots[rid].pose, op.pose)
                    for rid in ring
                )
                if ready and ring:
                    for rid in ring:
                        r = self.robots[rid]
                        r.mode = MODE_MIGRATE_CONVOY
                        r.pose = op.pose
                        self._deliver_to_operator(op, r, scheduled=False, quiet=True)
                    target = tuple(mig["target"])
                    nav = self._nav(op.grid, None)
                    route = nav.path(op.pose, target)
                    if route is None:
                        self._violation(tid, "migrate-no-route", str(target))
                        continue
                    op.route = route
                    op.move_goal = target
                    mig2 = dict(mig)
                    mig2["stage"] = "convoy"
                    mig2["ring"] = ring
                    self._stamp(op.know.migration, mig2)
                    for rid in ring:
                        self.robots[rid].know.migration = op.know.migration.copy()
                    self.trace.log(k="migrate", t=self.now, team=tid, phase="convoy",
                                   target=list(target))
            elif mig.get("stage") == "convoy":
                for rid in mig.get("ring", []):
                    r = self.robots[rid]
                    if r.alive:
                        self._deliver_to_operator(op, r, scheduled=False, quiet=True)
                        op.stamps[r.slot] = self.now

    def _operator_arrived(self, op: OperatorAgent) -> None:
        tid = op.team_id
        mig = op.know.migration.value
        op.move_goal = None
        if mig and mig.get("stage") == "convoy":
            ring = [rid for rid in mig.get("ring", []) if self.robots[rid].alive]
            t_m = self.now
            self._stamp(op.know.migration, None)
            for rid in ring:
                r = self.robots[rid]
                r.migrate_rewritten = False
                r.omega = StampTuple([t_m] * len(r.omega.omega_r), [t_m] * len(r.omega.omega_h))
                r.actual = [max(v, t_m) if self.robots[self.teams[tid].rids[n]].alive else v
                            for n, v in enumerate(r.actual)]
                r.actual[r.slot] = t_m
                r.know.migration = op.know.migration.copy()
                r.know.op_pos = self._mkver(op.pose)
            op.know.op_pos = self._mkver(op.pose)
            for n in range(len(op.stamps)):
                op.stamps[n] = max(op.stamps[n], t_m)
            trig = mig["trigger"] if mig["trigger"] in ring else (ring[0] if ring else None)
            if trig is not None:
                self._reseed_ring(tid, ring, t_m, trigger=trig, location=op.pose)
                new_know = op.know
                for rid in ring:
                    merge_team_know(self.robots[rid].know, new_know)
            self.trace.log(k="migrate", t=self.now, team=tid, phase="arrive",
                           target=list(op.pose))
            self._fulfill_requests_of_kind(tid, "xi3-migrate")
        else:
            self.trace.log(k="opmove", t=self.now, team=tid, at=list(op.pose))
            op.know.op_pos = self._mkver(op.pose)
            self._fulfill_requests_of_kind(tid, "xi3")

    def _fulfill_requests_of_kind(self, tid: int, tag: str) -> None:
        op = self.operators[tid]
        for req_id in sorted(op.know.requests):
            v = op.know.requests[req_id]
            req = v.value
            if req.get("status") == "active" and req.get("_tag") == tag:
                req2 = dict(req)
                req2["status"] = "fulfilled"
                req2["fulfilled_at"] = self.now
                self._stamp(v, req2)
                self.trace.log(k="request", t=self.now, status="fulfilled", req=_san(req2))

    # ------------------------------------------------------------------
    # returns and the operator side

    def _return_event(self, r: RobotAgent, ev: CommEvent) -> None:
        op = self.operators[r.team_id]
        stamps_before = list(op.stamps)
        info = self._deliver_to_operator(op, r, scheduled=True)
        self.returns_count += 1
        self.trace.log(k="return", t=self.now, rid=r.rid, team=r.team_id, eid=ev.event_id,
                       sched=ev.time, new=info["new"], lat=info["lat"],
                       stamps_before=stamps_before, stamps=list(op.stamps),
                       omega=r.omega.to_dict())
        if r.messenger_for is not None and r.plan.head() is None:
            # post-external homecoming: wait at the operator for reinsertion
            r.messenger_for = None
            r.mode = MODE_MESSENGER_WAIT
        elif (r.plan.head() is None and r.mode == MODE_SPREAD
              and r.rid not in self._ring_of(r.know)):
            # spliced out of the ring; wait here to be reinserted
            r.mode = MODE_MESSENGER_WAIT
        self._operator_business(op, r)
        merge_team_know(op.know, r.know)
        self._apply_knowledge(r)
        mig = r.know.migration.value
        if mig and mig.get("stage") == "propagate" and r.plan.head() is None:
            r.mode = MODE_MIGRATE_STAGE
        if r.mode == MODE_SINGLE and not (mig and mig.get("stage") == "propagate"):
            self._single_explore_plan(r, op)

    def _operator_business(self, op: OperatorAgent, courier: RobotAgent) -> None:
        """Everything gated on a contact with the operator: request admission,
        xi5 confirmation, chain/migrate triggers, reinsertion of waiters."""
        tid = op.team_id
        team = self.teams[tid]
        # confirm xi5 payloads the courier carried
        for req_id in sorted(op.know.requests):
            v = op.know.requests[req_id]
            req = v.value
            if req["kind"] == "xi5" and req["status"] == "propagating":
                req2 = dict(req)
                req2["status"] = "confirmed"
                req2["args"] = dict(req.get("args", {}))
                req2["args"]["confirmed_at"] = self.now
                self._stamp(v, req2)
                self.trace.log(k="request", t=self.now, status="confirmed", req=_san(req2))
            if req["kind"] == "xi6" and req["status"] == "propagating" and req["team"] == tid:
                self._stamp(v, {**req, "status": "active", "_tag": "chain"})
                team.chain_queue.append(dict(req))
                self.trace.log(k="request", t=self.now, status="accepted", req=_san(req))
        # operator-issued requests land now
        gated, op.gated = op.gated, []
        for cmd in gated:
            self._process_operator_request(op, courier, cmd)
        # auto exploration policy
        if self.sc.operator_policy == "auto":
            self._auto_policy(op, courier)
        # serve queued chain requests when no chain is active
        if team.chain_queue and not (op.know.chain.value and
                                     op.know.chain.value.get("phase") in ("forming", "active")):
            nxt = team.chain_queue.pop(0)
            self._start_chain(op, courier, nxt)
        # reinsert robots waiting at the operator
        self._reinsert_waiters(op, courier)
        # chain disband gets executed at the first return after the trigger
        ch = op.know.chain.value
        if ch and ch.get("phase") == "disband-pending":
            self._execute_disband(op, courier)

    def _process_operator_request(self, op: OperatorAgent, courier: RobotAgent,
                                  cmd: dict) -> None:
        tid = op.team_id
        kind = cmd.get("kind")
        args = cmd.get("args", {})
        self.req_seq += 1
        req = {"id": self.req_seq, "kind": kind, "issuer": f"operator:{tid}", "team": tid,
               "issued_at": self.now, "args": args, "status": "pending"}

        def reject(reason):
            req["status"] = "rejected"
            req["reason"] = reason
            op.know.requests[req["id"]] = self._mkver(req)
            self.trace.log(k="request", t=self.now, status="rejected", reason=reason,
                           req=_san(req))

        def accept(tag=None, status="active"):
            req["status"] = status
            if tag:
                req["_tag"] = tag
            op.know.requests[req["id"]] = self._mkver(req)
            self.trace.log(k="request", t=self.now, status=status, req=_san(req))

        if kind == "xi1":
            if int(args.get("t_h", 0)) <= 0:
                reject("invalid-bound")
                return
            op.know.t_h = self._mkver(int(args["t_h"]))
            accept()
        elif kind == "xi7":
            if int(args.get("t_c", 0)) <= 0:
                reject("invalid-bound")
                return
            pk = pair_key(tid, int(args["other_team"]))
            cur = op.know.t_c.get(pk, self._mkver(self.sc.t_c))
            self._stamp(cur, int(args["t_c"]))
            op.know.t_c[pk] = cur
            accept()
        elif kind == "xi2":
            w, h = self.truth.grid.width, self.truth.grid.height
            plus_pts = [tuple(p) for p in args.get("plus", [])]
            minus_pts = [tuple(p) for p in args.get("minus", [])]
            minus_cells = req_mod.rasterize_polygon(minus_pts, w, h) if minus_pts else frozenset()
            pri = {"plus": [], "minus": sorted([list(c) for c in minus_cells]),
                   "points": [list(p) for p in plus_pts]}
            self._stamp(op.know.priority, pri)
            accept()
        elif kind == "xi3":
            self._request_move(op, courier, req, tuple(args["target"]), reject, accept)
        elif kind in ("xi4",):
            target_rid = int(args["robot"])
            if target_rid in failed_set(op.know) or not self.robots[target_rid].alive:
                reject("target-dead")
                return
            if self.robots[target_rid].messenger_for is not None:
                reject("target-detached")
                return
            accept(tag="chain", status="active")
            self.teams[tid].chain_queue.append(dict(req))
        elif kind == "disband":
            ch = op.know.chain.value
            if not ch or ch.get("phase") not in ("forming", "active"):
                reject("no-chain")
                return
            ch2 = dict(ch)
            ch2["phase"] = "disband-pending"
            self._stamp(op.know.chain, ch2)
            accept()
        elif kind == "migrate":
            self._request_move(op, courier, req, tuple(args["target"]), reject, accept,
                               force_migrate=True)
        else:
            reject("unknown-kind")

    def _request_move(self, op: OperatorAgent, courier: RobotAgent, req: dict,
                      target: Cell, reject, accept, force_migrate: bool = False) -> None:
        tid = op.team_id
        grid = op.grid
        if not grid.in_bounds(target) or grid.at(target) != FREE:
            reject("unknown-target")
            return
        if any(r.messenger_for is not None or r.mode in (MODE_MESSENGER, MODE_MESSENGER_WAIT)
               for r in self.robots.values() if r.team_id == tid and r.alive):
            reject("messenger-out")
            return
        ch = op.know.chain.value
        if ch and ch.get("phase") in ("forming", "active", "disband-pending"):
            reject("chain-active")
            return
        region = self._feasible_region(op)
        in_region = target in region.cells
        in_range = can_communicate(op.pose, target, op.grid, self.params)
        if not force_migrate and in_region and in_range:
            nav = self._nav(op.grid, None)
            route = nav.path(op.pose, target)
            if route is None:
                reject("unknown-target")
                return
            op.route = route
            op.move_goal = target
            req["_tag"] = "xi3"
            accept(tag="xi3")
            op.know.op_pos = self._mkver(target)
            merge_team_know(op.know, courier.know)
            self.trace.log(k="migrate", t=self.now, team=tid, phase="xi3-depart",
                           target=list(target))
        else:
            if not self.sc.migrate_enabled:
                reject("migrate-disabled")
                return
            mig = {"stage": "propagate", "target": list(target), "trigger": courier.rid,
                   "informed": [courier.rid]}
            self._stamp(op.know.migration, mig)
            courier.know.migration = op.know.migration.copy()
            # trigger robot: next confirmed meeting, then home
            self._migrate_truncate_trigger(courier)
            req["_tag"] = "xi3-migrate"
            accept(tag="xi3-migrate")
            self.trace.log(k="migrate", t=self.now, team=tid, phase="trigger",
                           target=list(target), trigger=courier.rid)

    def _migrate_truncate_trigger(self, r: RobotAgent) -> None:
        kept: list[PlanStep] = []
        for s in r.plan.steps:
            if s.event.kind == EventKind.INTERNAL:
                kept.append(s)
                break
            kept.append(s)
        r.plan.steps = kept
        r.migrate_rewritten = True
        t_tail, p_tail = r.tail(self.now)
        op_pos = tuple(r.know.op_pos.value)
        nav = self._nav(r.grid, r.cls.traversal_mask)
        eta = ticks_for(nav.distance(p_tail, op_pos), r.cls)
        ev = CommEvent(int(t_tail + (0 if math.isinf(eta) else eta)), op_pos,
                       (r.rid, ("op", r.team_id)), EventKind.RETURN, self._next_eid())
        r.plan.append(self._route_for(r, p_tail, op_pos), ev)
        self._snapshot_plan(r)

    def _feasible_region(self, op: OperatorAgent) -> migrate_mod.FeasibleRegion:
        tid = op.team_id
        messenger_out = any(
            r.messenger_for is not None or r.mode == MODE_MESSENGER_WAIT
            for r in self.robots.values() if r.team_id == tid and r.alive)
        basis: list[Cell] = []
        for rid, (_, evs) in sorted(op.know.plans.items()):
            if rid in failed_set(op.know):
                continue
            for d in evs:
                e = _ev_from_dict(d)
                if e.kind == EventKind.INTERNAL and e.time >= self.now:
                    basis.append(e.location)
            if len(basis) > 64:
                break
        explored_free = op.grid.cells == FREE
        nav = self._nav(op.grid, None)
        return migrate_mod.feasible_region(nav, explored_free, op.pose, basis, self.now,
                                           messenger_out)

    def _auto_policy(self, op: OperatorAgent, courier: RobotAgent) -> None:
        tid = op.team_id
        if op.know.migration.value or op.move_goal is not None:
            return
        ch = op.know.chain.value
        if ch and ch.get("phase") in ("forming", "active", "disband-pending"):
            return
        if any(r.messenger_for is not None or r.mode in (MODE_MESSENGER, MODE_MESSENGER_WAIT)
               for r in self.robots.values() if r.team_id == tid and r.alive):
            return
        t_h = int(op.know.t_h.value)
        slowest = min(self.sc.classes[c].max_speed for c in self.teams[tid].spec.robot_classes)
        nav = self._nav(op.grid, None)
        fronts = detect_frontiers(op.grid, self.sc.min_frontier_size)
        if not fronts:
            return
        field = nav.field(op.pose)
        best = None
        productive = False
        for f in fronts:
            d = float(field[f.representative[1], f.representative[0]])
            if not math.isfinite(d):
                continue
            if best is None or d < best[0]:
                best = (d, f.representative)
            if 2 * math.ceil(d / slowest) <= t_h:
                productive = True
        if productive or best is None:
            return
        if not self.sc.migrate_enabled:
            return
        target = best[1]
        self.commands.append({"issuer": f"operator:{tid}", "kind": "migrate",
                              "args": {"target": list(target)}})
        # handled at the next return; to act now, process immediately
        cmd = self.commands.pop()
        self._process_operator_request(op, courier, cmd)

    def _single_explore_plan(self, r: RobotAgent, op: OperatorAgent | None = None) -> None:
        """Solo sortie: visit nearby frontiers, then deliver to the operator
        before the robot's own data at the operator would go stale."""
        if r.plan.steps:
            return
        t_h = int(r.know.t_h.value)
        nav = self._nav(r.grid, r.cls.traversal_mask, self._avoid_cells(r.know))
        fronts = detect_frontiers_adaptive(r.grid, self.sc.min_frontier_size)
        op_pos = tuple(r.know.op_pos.value)
        route = [r.pose]
        spent = 0.0
        cur = r.pose
        allowed_arrival = r.omega.omega_h[r.slot] + t_h - 1
        claimed = self._claims_against(r.know, {r.rid})
        cands = [f for f in fronts if not claimed & f.member_cells]
        while cands:
            scored = []
            for f in cands:
                d = nav.distance(cur, f.representative)
                back = nav.distance(f.representative, op_pos)
                if math.isfinite(d) and math.isfinite(back):
                    scored.append((d, back, f))
            if not scored:
                break
            scored.sort(key=lambda s: (s[0], s[2].representative))
            d, back, f = scored[0]
            arrive = self.now + math.ceil((spent + d + back) / r.cls.max_speed)
            if arrive > allowed_arrival:
                break
            seg = nav.path(cur, f.representative)
            route.extend(seg[1:])
            spent += d
            cur = f.representative
            cands.remove(f)
        if cur == r.pose and r.pose == op_pos:
            return  # nothing reachable inside the budget; idle at the operator
        seg = nav.path(cur, op_pos)
        if seg is None:
            return
        route.extend(seg[1:])
        spent += nav.distance(cur, op_pos)
        arrival = self.now + int(math.ceil(spent / r.cls.max_speed))
        ev = CommEvent(arrival, op_pos, (r.rid, ("op", r.team_id)), EventKind.RETURN,
                       self._next_eid())
        r.plan.append(route, ev)
        self._snapshot_plan(r)

    def _single_sweep(self) -> None:
        """Robots whose confirmed events ran out pick themselves back up: lone
        explorers plan a sortie, robots dropped from the ring head home."""
        for rid in sorted(self.robots):
            r = self.robots[rid]
            if not r.alive or len(r.plan) != 0:
                continue
            if r.mode == MODE_SINGLE:
                ring = self._ring_of(r.know)
                if ring == [r.rid] or r.rid not in ring:
                    self._single_explore_plan(r)
                else:
                    r.mode = MODE_SPREAD
            elif r.mode == MODE_SPREAD and r.rid not in self._ring_of(r.know):
                # spliced out (healed false failure or stale rewire): rejoin
                op_pos = tuple(r.know.op_pos.value)
                if r.pose == op_pos or self._truth_linked(
                        r.pose, self.operators[r.team_id].pose):
                    r.mode = MODE_MESSENGER_WAIT
                else:
                    nav = self._nav(r.grid, r.cls.traversal_mask)
                    eta = ticks_for(nav.distance(r.pose, op_pos), r.cls)
                    if not math.isinf(eta):
                        ev = CommEvent(int(self.now + eta), op_pos,
                                       (r.rid, ("op", r.team_id)), EventKind.RETURN,
                                       self._next_eid())
                        r.plan.append(self._route_for(r, r.pose, op_pos), ev)
                        self._snapshot_plan(r)

    # ------------------------------------------------------------------
    # chain lifecycle

    def _start_chain(self, op: OperatorAgent, courier: RobotAgent, req: dict) -> None:
        tid = op.team_id
        team = self.teams[tid]
        args = req["args"]
        if req["kind"] == "xi6":
            target_rid = int(req["issuer"].split(":")[1])
            target_pos = tuple(args["position"])
        else:
            target_rid = int(args["robot"])
            target_pos = tuple(args["target"])
        duration = int(args.get("duration", 0))
        nav_t = self._nav(op.grid, self.robots[target_rid].cls.traversal_mask)
        cec = chain_mod.build_cec(op.grid, nav_t, target_pos, op.pose, self.params,
                                  qfn=self.qualityfn)
        if isinstance(cec, chain_mod.Infeasible):
            self._reject_request(op, req, cec.reason)
            return
        ring = [rid for rid in self._ring_of(op.know) if rid != target_rid]
        cands = []
        nav_by_slot = {}
        for rid in ring:
            r = self.robots[rid]
            if not r.alive or r.messenger_for is not None:
                continue
            entry = op.know.plans.get(rid)
            if entry and entry[1]:
                last = _ev_from_dict(entry[1][-1])
                tail_t, tail_p = last.time, last.location
            else:
                tail_t, tail_p = self.now, r.pose
            cands.append(chain_mod.RelayCandidate(rid, r.cls, max(tail_t, self.now), tail_p))
            nav_by_slot[rid] = self._nav(op.grid, r.cls.traversal_mask)
        team_size = len([r for r in self.teams[tid].rids
                         if self.robots[r].alive and r not in failed_set(op.know)])
        assign = chain_mod.assign_relays(cec, cands, nav_by_slot, team_size)
        if isinstance(assign, chain_mod.Infeasible):
            self._reject_request(op, req, assign.reason)
            return
        relays = list(assign.anchor_robots)
        stayers = [rid for rid in self._ring_of(op.know)
                   if rid not in relays and rid != target_rid]
        info = {
            "phase": "forming", "req": req["id"], "team": tid,
            "cec": cec.to_dict(), "target": target_rid,
            "target_pos": list(target_pos), "assignment": assign.to_dict(),
            "relays": relays, "stayers": stayers, "duration": duration,
            "active_since": None, "active_ticks": 0,
            "first_stayer": courier.rid if courier.rid in stayers else None,
            "auto_disband": bool(args.get("auto_disband", True)),
        }
        self._stamp(op.know.chain, info)
        self._stamp(op.know.transition, {"active": True, "chain_version": op.know.chain.version})
        op.know.ring = self._mkver(stayers)
        merge_team_know(op.know, courier.know)
        self._apply_knowledge(courier)
        self._transition_join(courier)
        self.trace.log(k="chain", t=self.now, team=tid, phase="assigned",
                       cec=cec.to_dict(), relays=relays, stayers=stayers,
                       target=target_rid, bottleneck=assign.bottleneck)

    def _reject_request(self, op: OperatorAgent, req: dict, reason: str) -> None:
        req2 = dict(req)
        req2["status"] = "rejected"
        req2["reason"] = reason
        v = op.know.requests.get(req["id"], self._mkver(None))
        self._stamp(v, req2)
        op.know.requests[req["id"]] = v
        self.trace.log(k="request", t=self.now, status="rejected", reason=reason, req=_san(req2))

    def _transition_meeting(self, pred: RobotAgent, succ: RobotAgent, ev: CommEvent,
                            rec: dict) -> None:
        know = pred.know
        ch = know.chain.value
        relays = set(ch["relays"])
        target = ch["target"]
        chainbound = lambda rid: rid in relays or rid == target
        ci, cj = chainbound(pred.rid), chainbound(succ.rid)
        rec["transition_case"] = chain_mod.classify_transition_meeting(ci, cj)
        if not ci and not cj:
            self._spread_coordinate(pred, succ, ev, rec)
        else:
            for r in (pred, succ):
                if not chainbound(r.rid):
                    self._transition_stayer_rule(r, pred if r is succ else succ, rec)
        for r in (pred, succ):
            self._transition_join(r)
        self._maybe_transition_done(pred.team_id, pred.know)

    def _transition_stayer_rule(self, s: RobotAgent, relay_peer: RobotAgent, rec: dict) -> None:
        know = s.know
        ch = know.chain.value
        stayers = [rid for rid in ch["stayers"] if rid not in failed_set(know)]
        if len(stayers) < 2 or s.rid not in stayers:
            return
        idx = stayers.index(s.rid)
        succ_survivor = stayers[(idx + 1) % len(stayers)]
        pred_survivor = stayers[(idx - 1) % len(stayers)]
        old_ring = [rid for rid in self.teams[s.team_id].rids]
        # which side is the relay on?  walk the pre-split ring
        side_succ = self._between(old_ring, s.rid, succ_survivor, relay_peer.rid)
        edge = (s.rid, succ_survivor) if side_succ else (pred_survivor, s.rid)
        key = f"tedge:{know.chain.version}:{edge[0]}-{edge[1]}"
        if key in know.addressed:
            return
        compute = side_succ or (ch.get("first_stayer") == s.rid)
        if not compute:
            return
        other_rid = edge[1] if edge[0] == s.rid else edge[0]
        entry = know.plans.get(other_rid)
        if entry and entry[1]:
            last = _ev_from_dict(entry[1][-1])
            o_tail_t, o_tail_p = max(last.time, self.now), last.location
        else:
            q = self.robots[other_rid]
            o_tail_t, o_tail_p = self.now, q.pose
        t_tail, p_tail = s.tail(self.now)
        path_nav = self._nav(s.grid, s.cls.traversal_mask & self.robots[other_rid].cls.traversal_mask,
                             self._avoid_cells(know))
        path = path_nav.path(p_tail, o_tail_p)
        if path is None:
            return
        if edge[0] == s.rid:
            p_hat, t_hat, k = select_meeting_point(path, t_tail, o_tail_t, s.cls,
                                                   self.robots[other_rid].cls)
        else:
            p_hat, t_hat, k = select_meeting_point(path, o_tail_t, t_tail,
                                                   self.robots[other_rid].cls, s.cls)
        nxt = CommEvent(t_hat, p_hat, edge, EventKind.INTERNAL, self._next_eid())
        know.addressed[key] = self._mkver({"to": other_rid, "event": _ev_to_dict(nxt)})
        s.plan.append(self._route_for(s, p_tail, p_hat), nxt)
        self._snapshot_plan(s)
        rec.setdefault("tedges", []).append({"edge": list(edge), "eid": nxt.event_id,
                                             "t": t_hat, "p": list(p_hat)})

    def _between(self, ring: list[int], a: int, b: int, x: int) -> bool:
        """True when x lies strictly between a and b walking successor-wise."""
        if a == b:
            return False
        i = ring.index(a)
        while True:
            i = (i + 1) % len(ring)
            if ring[i] == b:
                return False
            if ring[i] == x:
                return True

    def _transition_join(self, r: RobotAgent) -> None:
        """Chainbound robots peel off to their posts once their confirmed
        meetings are exhausted."""
        ch = r.know.chain.value
        if not ch or ch.get("phase") not in ("forming", "active"):
            return
        relays = list(ch["relays"])
        target = ch["target"]
        if r.rid == target and r.mode not in (MODE_CHAIN_TARGET, MODE_CHAIN_BOUND):
            if not any(s.event.kind == EventKind.INTERNAL for s in r.plan.steps):
                pos = tuple(ch["target_pos"])
                ev = CommEvent(self.now, pos, (r.rid,), EventKind.CHAIN_ARRIVAL,
                               self._next_eid())
                t_tail, p_tail = r.tail(self.now)
                r.plan.append(self._route_for(r, p_tail, pos), ev)
                r.mode = MODE_CHAIN_BOUND
                r.chain_post = 0
                self.teams[r.team_id].grace_exempt.add(r.rid)
                self._snapshot_plan(r)
        elif r.rid in relays and r.mode not in (MODE_CHAIN_RELAY, MODE_CHAIN_BOUND):
            if not any(s.event.kind == EventKind.INTERNAL for s in r.plan.steps):
                k = relays.index(r.rid)
                anchor = tuple(ch["cec"]["anchors"][1 + k])
                ev = CommEvent(self.now, anchor, (r.rid,), EventKind.CHAIN_ARRIVAL,
                               self._next_eid())
                t_tail, p_tail = r.tail(self.now)
                r.plan.append(self._route_for(r, p_tail, anchor), ev)
                r.mode = MODE_CHAIN_BOUND
                r.chain_post = 1 + k
                self.teams[r.team_id].grace_exempt.add(r.rid)
                self._snapshot_plan(r)

    def _maybe_transition_done(self, tid: int, know: TeamKnow) -> None:
        ch = know.chain.value
        if not ch:
            return
        pending = [rid for rid in ch["relays"] + [ch["target"]]
                   if self.robots[rid].alive and self.robots[rid].mode
                   not in (MODE_CHAIN_RELAY, MODE_CHAIN_TARGET, MODE_CHAIN_BOUND)]
        if not pending and know.transition.value:
            self._stamp(know.transition, None)

    def _chain_arrival(self, r: RobotAgent, ev: CommEvent) -> None:
        ch = r.know.chain.value
        if not ch:
            return
        r.mode = MODE_CHAIN_TARGET if r.rid == ch["target"] else MODE_CHAIN_RELAY
        self.trace.log(k="chain", t=self.now, team=r.team_id, phase="post",
                       rid=r.rid, at=list(ev.location))
        self._maybe_transition_done(r.team_id, r.know)

    def _chain_tick(self) -> None:
        for tid in sorted(self.teams):
            op = self.operators[tid]
            ch = op.know.chain.value
            if not ch or ch.get("phase") not in ("forming", "active"):
                continue
            members = [ch["target"]] + list(ch["relays"])
            posts = [self.robots[ch["target"]].pose] + [self.robots[r].pose
                                                        for r in ch["relays"]]
            in_place = all(self.robots[r].alive and self.robots[r].mode in
                           (MODE_CHAIN_RELAY, MODE_CHAIN_TARGET) for r in members)
            linked = in_place
            if in_place:
                seq = posts + [op.pose]
                for a, b in zip(seq, seq[1:]):
                    if not self._truth_linked(a, b):
                        linked = False
                        break
            if linked and ch["phase"] == "forming":
                ch2 = dict(ch)
                ch2["phase"] = "active"
                ch2["active_since"] = self.now
                self._stamp(op.know.chain, ch2)
                ch = ch2
                self.trace.log(k="chain", t=self.now, team=tid, phase="active")
            if ch["phase"] != "active":
                continue
            if linked:
                # high-bandwidth link: members and operator stay fully synced
                for rid in members:
                    r = self.robots[rid]
                    self._deliver_to_operator(op, r, scheduled=False, quiet=True)
                    op.stamps[r.slot] = self.now
                for rid in members:
                    r = self.robots[rid]
                    r.grid.merge_from(op.grid)
                    merge_team_know(op.know, r.know)
                    self._apply_knowledge(r)
                ch2 = dict(op.know.chain.value)
                ch2["active_ticks"] = ch2.get("active_ticks", 0) + 1
                self._stamp(op.know.chain, ch2)
                ch = ch2
                # teleop commands for this team
                self._apply_teleop(op)
                if (ch["duration"] and ch["active_ticks"] >= ch["duration"]
                        and ch.get("auto_disband")):
                    ch2 = dict(ch)
                    ch2["phase"] = "disband-pending"
                    self._stamp(op.know.chain, ch2)
                    self._fulfill_chain_request(op, ch2)
                    self.trace.log(k="chain", t=self.now, team=tid, phase="disband-pending")
                    for rid in members:
                        merge_team_know(op.know, self.robots[rid].know)
            else:
                self.trace.log(k="chain", t=self.now, team=tid, phase="degraded")
        for tid in sorted(self.teams):
            op = self.operators[tid]
            ch = op.know.chain.value
            if not ch or ch.get("phase") != "disband-pending":
                continue
            stayers = [rid for rid in self._ring_of(op.know) if self.robots[rid].alive]
            if not stayers:
                # the whole team is on the chain; the command flows through it
                courier = self.robots[ch["target"]]
                self._execute_disband(op, courier)

    def _retarget(self, tid: int, new_target: Cell) -> None:
        """Online chain adjustment: drive the target inside the accessible
        region, or rebuild the chain when the new position needs more hops."""
        op = self.operators[tid]
        ch = op.know.chain.value
        if not ch or ch.get("phase") != "active" or new_target is None:
            self.trace.log(k="chain", t=self.now, team=tid, phase="retarget-rejected",
                           why="no-active-chain")
            return
        cec = chain_mod.Cec(tuple(tuple(a) for a in ch["cec"]["anchors"]),
                            ch["cec"]["margin"])
        region = chain_mod.accessible_region(cec, op.grid, self.params)
        target = self.robots[ch["target"]]
        if new_target in region:
            nav = self._nav(op.grid, target.cls.traversal_mask)
            route = nav.path(target.pose, new_target)
            if route is not None:
                target.plan.steps = []
                ev = CommEvent(self.now, new_target, (target.rid,),
                               EventKind.CHAIN_ARRIVAL, self._next_eid())
                target.plan.append(route, ev)
                target.mode = MODE_CHAIN_BOUND
                self.trace.log(k="chain", t=self.now, team=tid, phase="retarget-direct",
                               to=list(new_target))
            return
        nav_t = self._nav(op.grid, target.cls.traversal_mask)
        out = chain_mod.re_anchor(
            op.grid, nav_t, cec, new_target, op.pose, self.params,
            [chain_mod.RelayCandidate(rid, self.robots[rid].cls, self.now,
                                      self.robots[rid].pose) for rid in ch["relays"]],
            {rid: self._nav(op.grid, self.robots[rid].cls.traversal_mask)
             for rid in ch["relays"]},
            len([r for r in self.teams[tid].rids if self.robots[r].alive]),
        )
        if isinstance(out, chain_mod.Infeasible):
            self.trace.log(k="chain", t=self.now, team=tid, phase="retarget-rejected",
                           why=out.reason)
            return
        new_cec, assign, surplus = out
        if assign is None:
            self.trace.log(k="chain", t=self.now, team=tid, phase="retarget-rejected",
                           why="needs-ring-recruits")
            return
        ch2 = dict(ch)
        ch2["cec"] = new_cec.to_dict()
        ch2["target_pos"] = list(new_target)
        ch2["relays"] = list(assign.anchor_robots)
        ch2["assignment"] = assign.to_dict()
        ch2["phase"] = "forming"
        ch2["active_since"] = None
        self._stamp(op.know.chain, ch2)
        for k, rid in enumerate(assign.anchor_robots):
            r = self.robots[rid]
            anchor = new_cec.anchors[1 + k]
            r.plan.steps = []
            ev = CommEvent(self.now, anchor, (r.rid,), EventKind.CHAIN_ARRIVAL,
                           self._next_eid())
            r.plan.append(self._route_for(r, r.pose, anchor), ev)
            r.mode = MODE_CHAIN_BOUND
            r.chain_post = 1 + k
            merge_team_know(op.know, r.know)
        target.plan.steps = []
        ev = CommEvent(self.now, new_target, (target.rid,), EventKind.CHAIN_ARRIVAL,
                       self._next_eid())
        target.plan.append(self._route_for(target, target.pose, new_target), ev)
        target.mode = MODE_CHAIN_BOUND
        merge_team_know(op.know, target.know)
        for rid in surplus:
            r = self.robots[rid]
            r.plan.steps = []
            rev = CommEvent(self.now, op.pose, (r.rid, ("op", tid)), EventKind.RETURN,
                            self._next_eid())
            r.plan.append(self._route_for(r, r.pose, op.pose), rev)
            r.mode = MODE_MESSENGER_WAIT
            merge_team_know(op.know, r.know)
        self.trace.log(k="chain", t=self.now, team=tid, phase="retarget-rebuild",
                       cec=new_cec.to_dict(), relays=list(assign.anchor_robots),
                       surplus=list(surplus))

    def _regroup_tick(self) -> None:
        for tid in sorted(self.teams):
            op = self.operators[tid]
            ch = op.know.chain.value
            if not ch or ch.get("phase") != "regroup":
                continue
            ring = ch["ring"]
            ready = all(
                self.robots[rid].alive and len(self.robots[rid].plan) == 0
                and self._truth_linked(self.robots[rid].pose, op.pose)
                for rid in ring
            )
            if ready:
                live = [rid for rid in ring if self.robots[rid].alive]
                for rid in live:
                    r = self.robots[rid]
                    r.pose = op.pose
                    self._deliver_to_operator(op, r, scheduled=False, quiet=True)
                self._stamp(op.know.chain, None)
                op.know.ring = self._mkver(live)
                self._reseed_ring(tid, live, self.now, trigger=live[0], location=op.pose)
                self._begin_restore_grace(tid, live)
                for rid in live:
                    merge_team_know(op.know, self.robots[rid].know)
                self.trace.log(k="rewire", t=self.now, team=tid, ring=live,
                               why="regroup-reseed")

    def _fulfill_chain_request(self, op: OperatorAgent, ch: dict) -> None:
        v = op.know.requests.get(ch.get("req"))
        if v and v.value and v.value.get("status") == "active":
            req2 = dict(v.value)
            req2["status"] = "fulfilled"
            req2["fulfilled_at"] = self.now
            self._stamp(v, req2)
            self.trace.log(k="request", t=self.now, status="fulfilled", req=_san(req2))

    def _apply_teleop(self, op: OperatorAgent) -> None:
        ch = op.know.chain.value
        if not ch or ch["phase"] != "active":
            return
        pending, self.pending_teleop = self.pending_teleop, []
        for cmd in pending:
            tid = int(cmd["issuer"].split(":")[1])
            if tid != op.team_id:
                self.pending_teleop.append(cmd)
                continue
            target = self.robots[ch["target"]]
            dx, dy = int(cmd["args"]["dx"]), int(cmd["args"]["dy"])
            dest = (target.pose[0] + dx, target.pose[1] + dy)
            grid = self.truth.grid
            if not grid.in_bounds(dest) or grid.at(dest) != FREE:
                self.trace.log(k="teleop", t=self.now, team=tid, ok=False, why="blocked")
                continue
            cec = chain_mod.Cec(tuple(tuple(a) for a in ch["cec"]["anchors"]),
                                ch["cec"]["margin"])
            best = max(self.qualityfn(tuple(a), dest, op.grid, self.params)
                       for a in cec.anchors[1:])
            if best <= self.params.threshold:
                self.trace.log(k="teleop", t=self.now, team=tid, ok=False, why="connectivity")
                continue
            target.pose = dest
            target.traj += math.hypot(dx, dy)
            self.trace.log(k="teleop", t=self.now, team=tid, ok=True, to=list(dest))

    def _execute_disband(self, op: OperatorAgent, courier: RobotAgent) -> None:
        tid = op.team_id
        ch = op.know.chain.value
        members = [rid for rid in [ch["target"]] + list(ch["relays"])
                   if self.robots[rid].alive]
        ring = [rid for rid in self._ring_of(op.know) if self.robots[rid].alive]
        ring_events: list[tuple[int, Cell, tuple[int, int]]] = []
        seen_eids = set()
        for rid in ring:
            entry = op.know.plans.get(rid)
            if not entry:
                continue
            for d in entry[1]:
                e = _ev_from_dict(d)
                if (e.kind == EventKind.INTERNAL and e.time > self.now
                        and e.event_id not in seen_eids):
                    peers = tuple(p for p in e.peers if isinstance(p, int))
                    if len(peers) == 2 and all(p in ring for p in peers):
                        seen_eids.add(e.event_id)
                        ring_events.append((e.time, e.location, peers, e.event_id))
        if len(ring) >= 2 and ring_events:
            choices = chain_mod.choose_insertions(
                members,
                [(t, loc, edge) for (t, loc, edge, _) in ring_events],
                {rid: self.robots[rid].pose for rid in members},
                {rid: self.robots[rid].cls for rid in members},
                {rid: self._nav(op.grid, self.robots[rid].cls.traversal_mask)
                 for rid in members},
                self.now,
            )
            by_edge: dict[tuple[int, int], list[int]] = {}
            for rid, edge, t_ev in choices:
                by_edge.setdefault(edge, []).append(rid)
            new_ring = list(ring)
            for edge, ins in sorted(by_edge.items()):
                a_r, b_r = edge
                ia = new_ring.index(a_r)
                for off, rid in enumerate(ins):
                    new_ring.insert(ia + 1 + off, rid)
                eid = next(e4 for (t4, l4, e4_edge, e4) in ring_events if e4_edge == edge)
                t_ev, loc = next((t4, l4) for (t4, l4, e4_edge, e4) in ring_events
                                 if e4_edge == edge)
                chain_seq = [a_r] + ins + [b_r]
                subs = []
                for u, v in zip(chain_seq, chain_seq[1:]):
                    subs.append(_ev_to_dict(CommEvent(t_ev, loc, (u, v),
                                                      EventKind.INTERNAL, self._next_eid())))
                op.know.overrides[eid] = self._mkver(subs)
                for rid in ins:
                    r = self.robots[rid]
                    mine = [_ev_from_dict(d) for d in subs
                            if rid in _ev_from_dict(d).peers]
                    r.plan = LocalPlan()
                    src = r.pose
                    for k2, e in enumerate(mine):
                        r.plan.append(self._route_for(r, src, e.location) if k2 == 0
                                      else [e.location], e)
                        src = e.location
                    r.mode = MODE_SPREAD
                    r.chain_post = None
                    self._snapshot_plan(r)
            op.know.ring = self._mkver(new_ring)
            self._begin_restore_grace(tid, new_ring)
            self._stamp(op.know.chain, None)
            self._stamp(op.know.transition, None)
            merge_team_know(op.know, courier.know)
            self._apply_knowledge(courier)
            for rid in members:
                merge_team_know(op.know, self.robots[rid].know)
                self._apply_knowledge(self.robots[rid])
            self.trace.log(k="chain", t=self.now, team=tid, phase="disband",
                           ring=new_ring)
        else:
            # no live ring meetings to splice into: regroup at the operator
            for rid in members:
                r = self.robots[rid]
                r.plan = LocalPlan()
                op_pos = op.pose
                ev = CommEvent(self.now, op_pos, (r.rid, ("op", tid)), EventKind.RETURN,
                               self._next_eid())
                r.plan.append(self._route_for(r, r.pose, op_pos), ev)
                r.mode = MODE_SPREAD
                r.chain_post = None
            gather_ring = sorted(set(ring) | set(members))
            op.know.ring = self._mkver(gather_ring)
            self._stamp(op.know.chain, {"phase": "regroup", "ring": gather_ring})
            self._stamp(op.know.transition, None)
            self.trace.log(k="chain", t=self.now, team=tid, phase="disband-regroup",
                           ring=gather_ring)

    def _begin_restore_grace(self, tid: int, ring: list[int]) -> None:
        team = self.teams[tid]
        team.grace_edges = {frozenset(e) for e in
                            zip(ring, ring[1:] + ring[:1])} if len(ring) > 1 else set()
        team.grace_exempt = set(ring)
        team.round_edges_seen = set()

    def _grace_progress(self, team: TeamRuntime, a: int, b: int) -> None:
        if not team.grace_edges:
            return
        team.grace_edges.discard(frozenset((a, b)))
        if not team.grace_edges:
            # the restored ring completed a round; detached robots stay exempt
            team.grace_exempt = {
                rid for rid in team.grace_exempt
                if self.robots[rid].mode not in (MODE_SPREAD, MODE_SINGLE)
            }

    def _reinsert_waiters(self, op: OperatorAgent, courier: RobotAgent) -> None:
        tid = op.team_id
        waiters = sorted(r.rid for r in self.robots.values()
                         if r.team_id == tid and r.alive and r.mode == MODE_MESSENGER_WAIT)
        if not waiters:
            return
        ring = [rid for rid in self._ring_of(op.know) if self.robots[rid].alive]
        ring_events = []
        seen = set()
        for rid in ring:
            entry = op.know.plans.get(rid)
            if not entry:
                continue
            for d in entry[1]:
                e = _ev_from_dict(d)
                peers = tuple(p for p in e.peers if isinstance(p, int))
                if (e.kind == EventKind.INTERNAL and e.time > self.now
                        and e.event_id not in seen and len(peers) == 2
                        and all(p in ring for p in peers)):
                    seen.add(e.event_id)
                    ring_events.append((e.time, e.location, peers, e.event_id))
        if len(ring) < 2 or not ring_events:
            if len(ring) == 1 and courier.rid == ring[0]:
                # merge with single explorer: reseed a small ring here
                new_ring = sorted(set(ring) | set(waiters))
                for rid in waiters:
                    self.robots[rid].mode = MODE_SPREAD
                op.know.ring = self._mkver(new_ring)
                self._reseed_ring(tid, new_ring, self.now, trigger=courier.rid,
                                  location=op.pose)
                self._begin_restore_grace(tid, new_ring)
                for rid in new_ring:
                    merge_team_know(op.know, self.robots[rid].know)
                self.trace.log(k="rewire", t=self.now, team=tid, ring=new_ring,
                               why="reinsert-gather")
            return
        choices = chain_mod.choose_insertions(
            waiters,
            [(t, loc, edge) for (t, loc, edge, _) in ring_events],
            {rid: self.robots[rid].pose for rid in waiters},
            {rid: self.robots[rid].cls for rid in waiters},
            {rid: self._nav(op.grid, self.robots[rid].cls.traversal_mask)
             for rid in waiters},
            self.now,
        )
        by_edge: dict[tuple[int, int], list[int]] = {}
        for rid, edge, t_ev in choices:
            by_edge.setdefault(edge, []).append(rid)
        new_ring = list(ring)
        for edge, ins in sorted(by_edge.items()):
            a_r, b_r = edge
            ia = new_ring.index(a_r)
            for off, rid in enumerate(ins):
                new_ring.insert(ia + 1 + off, rid)
            t_ev, loc = next((t4, l4) for (t4, l4, e4_edge, _) in ring_events
                             if e4_edge == edge)
            eid = next(e4 for (t4, l4, e4_edge, e4) in ring_events if e4_edge == edge)
            chain_seq = [a_r] + ins + [b_r]
            subs = [_ev_to_dict(CommEvent(t_ev, loc, (u, v), EventKind.INTERNAL,
                                          self._next_eid()))
                    for u, v in zip(chain_seq, chain_seq[1:])]
            op.know.overrides[eid] = self._mkver(subs)
            for rid in ins:
                r = self.robots[rid]
                mine = [_ev_from_dict(d) for d in subs if rid in _ev_from_dict(d).peers]
                r.plan = LocalPlan()
                src = r.pose
                for k2, e in enumerate(mine):
                    r.plan.append(self._route_for(r, src, e.location) if k2 == 0
                                  else [e.location], e)
                    src = e.location
                r.mode = MODE_SPREAD
                self._snapshot_plan(r)
        op.know.ring = self._mkver(new_ring)
        self._begin_restore_grace(tid, new_ring)
        merge_team_know(op.know, courier.know)
        for rid in waiters:
            merge_team_know(op.know, self.robots[rid].know)
            self._apply_knowledge(self.robots[rid])
        self._apply_knowledge(courier)
        self.trace.log(k="rewire", t=self.now, team=tid, ring=new_ring, why="reinsert")

    def _operator_contact_tick(self) -> None:
        """Sustained radio contact with the operator keeps its stamps and map
        current, and unsticks robots idling within range."""
        if not hasattr(self, "_oplinked"):
            self._oplinked: dict[int, set[int]] = {tid: set() for tid in self.teams}
        for tid in sorted(self.teams):
            op = self.operators[tid]
            in_range: list[int] = []
            for rid in self.teams[tid].rids:
                r = self.robots[rid]
                if not r.alive or r.mode == MODE_MIGRATE_CONVOY:
                    continue
                if self._truth_linked(r.pose, op.pose):
                    in_range.append(rid)
                    r.actual[r.slot] = self.now
                    for n in range(len(op.stamps)):
                        op.stamps[n] = max(op.stamps[n], r.actual[n])
                    before = int(np.count_nonzero(op.grid.cells != UNKNOWN))
                    op.grid.merge_from(r.grid)
                    if int(np.count_nonzero(op.grid.cells != UNKNOWN)) != before:
                        self._deliver_to_operator(op, r, scheduled=False)
                    r.grid.merge_from(op.grid)
            cur = set(in_range)
            prev = self._oplinked[tid]
            if cur != prev:
                self.trace.log(k="oplink", t=self.now, team=tid,
                               enter=sorted(cur - prev), leave=sorted(prev - cur))
                self._oplinked[tid] = cur
            if not hasattr(self, "_opstamps_logged"):
                self._opstamps_logged: dict[int, list] = {}
            team = self.teams[tid]
            masked = [(-1 if team.rids[s] in cur else v)
                      for s, v in enumerate(op.stamps)]
            if masked != self._opstamps_logged.get(tid):
                self._opstamps_logged[tid] = masked
                self.trace.log(k="opstamps", t=self.now, team=tid, stamps=masked)
            if not in_range:
                continue
            idle = [rid for rid in in_range if len(self.robots[rid].plan) == 0]
            waiters = [rid for rid in idle
                       if self.robots[rid].mode == MODE_MESSENGER_WAIT]
            singles = [rid for rid in idle
                       if self.robots[rid].mode in (MODE_SINGLE, MODE_SPREAD)]
            needs_business = (bool(op.gated) or (waiters and in_range) or singles
                              or (op.know.chain.value or {}).get("phase") == "disband-pending")
            if needs_business:
                courier = self.robots[singles[0] if singles else in_range[0]]
                self._deliver_to_operator(op, courier, scheduled=False, quiet=True)
                self._operator_business(op, courier)
                merge_team_know(op.know, courier.know)
                self._apply_knowledge(courier)
            for rid in singles:
                r = self.robots[rid]
                if r.mode == MODE_SINGLE and len(r.plan) == 0:
                    self._deliver_to_operator(op, r, scheduled=False, quiet=True)
                    merge_team_know(op.know, r.know)
                    self._apply_knowledge(r)
                    self._single_explore_plan(r, op)

    # ------------------------------------------------------------------
    # handover + externals

    def _handover_meeting(self, pred: RobotAgent, succ: RobotAgent, ev: CommEvent,
                          rec: dict) -> None:
        """A detaching messenger attends its remaining confirmed meetings;
        knowledge flows, the stayer may still schedule a return."""
        m = pred if pred.messenger_for else succ
        stay = succ if m is pred else pred
        rec["handover"] = {"messenger": m.rid}
        if stay.messenger_for:
            return
        ctx = self._pair_context(pred, succ)
        try:
            dec = determine_return(ctx, pred_slot=stay.slot)
        except CoordinationFault:
            return
        pred.omega = dec.omega_i
        succ.omega = dec.omega_j
        rec["chi_pre"] = dec.chi_pre
        rec["chi_star"] = dec.chi_star
        if dec.returner == stay.slot:
            self._append_return(stay, dec.arrival)
            rec["return"] = {"rid": stay.rid, "arrival": dec.arrival}

    def _external_event(self, a: RobotAgent, b: RobotAgent, ev: CommEvent) -> None:
        pk = ev.peers[1][1]
        seq = ev.peers[1][2]
        self.external_log.setdefault(pk, []).append(self.now)
        a.grid.merge_from(b.grid)
        b.grid.merge_from(a.grid)
        merge_externals_only(a.know, b.know)
        loc, t_next = self._compute_external_rendezvous(a.team_id, b.team_id, self.now)
        ext = {"seq": seq + 1, "time": t_next, "loc": list(loc), "messenger": {}}
        a.know.externals[pk] = self._mkver(ext)
        b.know.externals[pk] = a.know.externals[pk].copy()
        for r in (a, b):
            op_pos = tuple(r.know.op_pos.value)
            nav = self._nav(r.grid, r.cls.traversal_mask)
            eta = ticks_for(nav.distance(r.pose, op_pos), r.cls)
            rev = CommEvent(int(self.now + (0 if math.isinf(eta) else eta)), op_pos,
                            (r.rid, ("op", r.team_id)), EventKind.RETURN, self._next_eid())
            r.plan.append(self._route_for(r, r.pose, op_pos), rev)
            self._snapshot_plan(r)
        self.trace.log(k="external", t=self.now, pair=pk, seq=seq,
                       riders=[a.rid, b.rid], next={"t": t_next, "p": list(loc)})

    def _spontaneous(self, pair: tuple) -> None:
        kind = pair[0]
        if kind == "r":
            a, b = self.robots[pair[1]], self.robots[pair[2]]
            if a.team_id == b.team_id:
                self._exchange_robot_robot(a, b, full=False)
                self.trace.log(k="spont", t=self.now, a=a.rid, b=b.rid, kind="team")
            else:
                neighbors = pair_key(a.team_id, b.team_id) in self._hyper_pairs()
                self._exchange_robot_robot(a, b, full=False)
                a.grid.merge_from(b.grid)
                b.grid.merge_from(a.grid)
                if neighbors:
                    self._spontaneous_external(a, b)
                self.trace.log(k="spont", t=self.now, a=a.rid, b=b.rid,
                               kind="neighbor" if neighbors else "foreign")
        else:
            r = self.robots[pair[1]]
            tid = pair[2]
            if tid == r.team_id:
                op = self.operators[tid]
                self._deliver_to_operator(op, r, scheduled=False)
                self._operator_business(op, r)
                merge_team_know(op.know, r.know)
                self._apply_knowledge(r)
                if r.mode == MODE_SINGLE and not r.plan.steps:
                    self._single_explore_plan(r, op)

    def _spontaneous_external(self, a: RobotAgent, b: RobotAgent) -> None:
        pk = pair_key(a.team_id, b.team_id)
        entry_a = a.know.externals.get(pk)
        entry_b = b.know.externals.get(pk)
        if not entry_a or not entry_b:
            return
        ext = entry_a.value if entry_a.version >= entry_b.version else entry_b.value
        if ext.get("messenger"):
            return  # someone is already detached for it; keep the schedule
        self.external_log.setdefault(pk, []).append(self.now)
        loc, t_next = self._compute_external_rendezvous(a.team_id, b.team_id, self.now)
        new_ext = {"seq": ext["seq"] + 1, "time": t_next, "loc": list(loc), "messenger": {}}
        a.know.externals[pk] = self._mkver(new_ext)
        b.know.externals[pk] = a.know.externals[pk].copy()
        self.trace.log(k="external", t=self.now, pair=pk, seq=ext["seq"],
                       riders=[a.rid, b.rid], spontaneous=True,
                       next={"t": t_next, "p": list(loc)})

    # ------------------------------------------------------------------
    # failure handling

    def _failure_detection(self) -> None:
        for rid in sorted(self.robots):
            r = self.robots[rid]
            if not r.alive:
                continue
            head = r.plan.head()
            if head is None or len(head.route) > 1 or r.arrived_at is None:
                continue
            ev = head.event
            if ev.kind not in (EventKind.INTERNAL, EventKind.RENDEZVOUS):
                continue
            other = ev.other(r.rid)
            if not isinstance(other, int):
                continue
            since = max(ev.time, r.arrived_at)
            if self.now <= since:
                continue
            if ev.kind == EventKind.RENDEZVOUS:
                # recovery partners may be held up by confirmed meetings first
                bound = 2 * self.sc.t_plus_max + self.sc.t_minus_max
            else:
                pred_rid = ev.peers[0]
                role = WaitRole.PREDECESSOR if r.rid == pred_rid else WaitRole.SUCCESSOR
                bound = wait_bound(role, self.sc.t_plus_max, self.sc.t_minus_max)
                patience = 2 * self.sc.t_plus_max + self.sc.t_minus_max
                if any(v.value and (not v.value.get("resolved")
                                    or self.now - v.value.get("resolved_at", 0) < patience)
                       for v in r.know.recovery.values()):
                    # a recovery detour is or was in progress; schedules slip
                    bound = max(bound, patience)
            if self.now - since > bound:
                self._declare_failure(r, other, ev)

    def _declare_failure(self, detector: RobotAgent, failed_rid: int, ev: CommEvent) -> None:
        know = detector.know
        team = self.teams[detector.team_id]
        role = "predecessor" if (ev.kind == EventKind.INTERNAL
                                 and ev.peers[0] == detector.rid) else "successor"
        case = "predecessor-wait" if role == "predecessor" else "successor-wait"
        self.trace.log(k="detect", t=self.now, rid=failed_rid, by=detector.rid, case=case)
        team.recovering = True
        cur = know.failed.get(failed_rid, self._mkver(False))
        self._stamp(cur, True)
        know.failed[failed_rid] = cur
        ring = [r for r in self._ring_of(know) if r != failed_rid]
        know.ring = self._mkver(ring)
        team.grace_exempt.add(failed_rid)
        self._begin_restore_grace(detector.team_id, ring)
        detector.plan.pop()  # the dead meeting
        detector.arrived_at = None
        if len(ring) <= 1:
            detector.mode = MODE_SINGLE
            self._snapshot_plan(detector)
            self.trace.log(k="rewire", t=self.now, team=detector.team_id, ring=ring,
                           why=f"failure:{failed_rid}")
            return
        if case == "predecessor-wait":
            nxt = self._failed_next_meeting(detector, failed_rid)
            if nxt is not None:
                partner = next(p for p in nxt.peers if isinstance(p, int) and p != failed_rid)
                rv = CommEvent(nxt.time, nxt.location, (detector.rid, partner),
                               EventKind.RENDEZVOUS, self._next_eid())
                detector.plan.steps.insert(
                    0, PlanStep(self._route_for(detector, detector.pose, rv.location), rv))
                know.recovery[failed_rid] = self._mkver(
                    {"case": 1, "detector": detector.rid, "partner": partner,
                     "rendezvous": list(rv.location), "t": rv.time, "eid": rv.event_id})
                self._snapshot_plan(detector)
                self.trace.log(k="rewire", t=self.now, team=detector.team_id, ring=ring,
                               why=f"failure:{failed_rid}")
                return
            # no knowledge of the failed robot's next meeting; degrade to case two
        # the failed robot's ring predecessor pairs with the detector
        partner = None
        full = list(self.teams[detector.team_id].rids)
        fi = full.index(failed_rid)
        for off in range(1, len(full)):
            cand = full[(fi - off) % len(full)]
            if cand in ring and cand != detector.rid:
                partner = cand
                break
        if partner is None:
            detector.mode = MODE_SINGLE
            self._snapshot_plan(detector)
            return
        rv = CommEvent(self.now, detector.pose, (partner, detector.rid),
                       EventKind.RENDEZVOUS, self._next_eid())
        know.recovery[failed_rid] = self._mkver(
            {"case": 2, "detector": detector.rid, "partner": partner,
             "rendezvous": list(detector.pose), "t": self.now, "eid": rv.event_id})
        # the detector holds its remaining meetings, then waits at the rendezvous
        src = detector.plan.tail_event().location if detector.plan.steps else detector.pose
        detector.plan.append(self._route_for(detector, src, rv.location), rv)
        self._snapshot_plan(detector)
        self.trace.log(k="rewire", t=self.now, team=detector.team_id, ring=ring,
                       why=f"failure:{failed_rid}")

    def _failed_next_meeting(self, detector: RobotAgent, failed_rid: int) -> CommEvent | None:
        entry = detector.know.plans.get(failed_rid)
        if not entry:
            return None
        best = None
        for d in entry[1]:
            e = _ev_from_dict(d)
            peers = [p for p in e.peers if isinstance(p, int)]
            if e.kind != EventKind.INTERNAL or detector.rid in peers:
                continue
            if failed_rid not in peers:
                continue
            if best is None or (e.time, e.event_id) < (best.time, best.event_id):
                best = e
        return best

    # ------------------------------------------------------------------
    # invariants, latency, stall

    def _latency_tick(self) -> None:
        for tid in sorted(self.teams):
            team = self.teams[tid]
            op = self.operators[tid]
            if team.recovering:
                unresolved = any(
                    v.value and not v.value.get("resolved")
                    for agent in ([op] + [self.robots[rid] for rid in team.rids
                                          if self.robots[rid].alive])
                    for v in agent.know.recovery.values()
                )
                if not unresolved and not team.grace_edges:
                    team.recovering = False
            t_h = int(op.know.t_h.value)
            worst = 0
            for rid in team.rids:
                r = self.robots[rid]
                if not r.alive or rid in team.grace_exempt:
                    continue
                if r.mode in (MODE_MESSENGER, MODE_MESSENGER_WAIT, MODE_CHAIN_BOUND,
                              MODE_CHAIN_RELAY, MODE_CHAIN_TARGET, MODE_FAILED):
                    continue
                lat = self.now - op.stamps[r.slot]
                worst = max(worst, lat)
                if lat > t_h:
                    if team.recovering:
                        self.trace.log(k="latency_soft", t=self.now, team=tid, rid=rid,
                                       lat=lat, t_h=t_h)
                    else:
                        self._violation(tid, "latency",
                                        f"robot {rid} latency {lat} > T_h {t_h}")
                        return
            self.max_stamp_latency[tid] = max(self.max_stamp_latency.get(tid, 0), worst)

    def _violation(self, tid: int, what: str, detail: str) -> None:
        self.trace.log(k="violation", t=self.now, team=tid, what=what, detail=detail)
        self.halted = f"violation:{what}"

    def _stall_tick(self) -> None:
        if self.now - self.last_growth > self.stall_window and not self.is_complete():
            self.halted = "stalled"
            self.trace.log(k="stall", t=self.now, last_growth=self.last_growth)


def _san(obj):
    """JSON-safe copy for trace records."""
    return json.loads(json.dumps(obj, default=str))


def run_scenario(sc: Scenario) -> Trace:
    return Sim(sc).run()
