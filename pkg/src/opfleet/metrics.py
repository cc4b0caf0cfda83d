"""Post-hoc trace analytics: data-flow reconstruction, the spatio-temporal
data-flow tree, and the mission report."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

DEFAULT_TILE = 5


class TraceError(Exception):
    pass


def parse_trace(text: str) -> list[dict]:
    records = []
    for i, line in enumerate(text.splitlines()):
        if not line.strip():
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as e:
            raise TraceError(f"malformed trace record {i}: {e}") from e
    if not records or records[0].get("k") != "header":
        raise TraceError("trace must start with a header record")
    return records


@dataclass
class FlowState:
    """Replays who knew which cell when, from the contact log alone."""

    explored: dict[tuple, int] = field(default_factory=dict)     # cell -> first explore tick
    explorer: dict[tuple, int] = field(default_factory=dict)     # cell -> robot id
    team_sensed: dict[int, set] = field(default_factory=dict)    # team -> cells sensed by it
    robot_cells: dict[int, set] = field(default_factory=dict)    # rid -> known cells
    op_cells: dict[int, set] = field(default_factory=dict)       # team -> operator-known cells
    op_receipt: dict[int, dict] = field(default_factory=dict)    # team -> cell -> receipt tick
    deliveries: dict[int, list] = field(default_factory=dict)    # team -> [(t, rid, new cells)]
    robot_team: dict[int, int] = field(default_factory=dict)
    cell_state: dict[tuple, int] = field(default_factory=dict)
    trajectories: dict[str, list] = field(default_factory=dict)  # agent -> [(t, x, y)]
    meetings: list = field(default_factory=list)                 # (t, a, b, x, y)
    returns: list = field(default_factory=list)                  # scheduled returns


def replay_flow(records: list[dict]) -> FlowState:
    st = FlowState()
    header = records[0]
    for team in header["scenario"]["teams"]:
        tid = int(team["id"])
        st.op_cells[tid] = set()
        st.op_receipt[tid] = {}
        st.deliveries[tid] = []
        st.team_sensed[tid] = set()
        for rb in team["robots"]:
            st.robot_team[int(rb["id"])] = tid
            st.robot_cells[int(rb["id"])] = set()
            st.trajectories[f"r{rb['id']}"] = [(0, *rb["start"])]
        st.trajectories[f"op{tid}"] = [(0, *team["operator_start"])]

    for rec in records[1:]:
        k = rec.get("k")
        t = rec.get("t", 0)
        if k == "sense":
            rid = rec["rid"]
            cells = {(c[0], c[1]) for c in rec["cells"]}
            for c in rec["cells"]:
                st.cell_state[(c[0], c[1])] = c[2]
            for c in cells:
                if c not in st.explored:
                    st.explored[c] = t
                    st.explorer[c] = rid
            st.robot_cells[rid] |= cells
            st.team_sensed[st.robot_team[rid]] |= cells
            if "at" in rec:
                st.trajectories[f"r{rid}"].append((t, *rec["at"]))
        elif k == "meet":
            a, b = rec["edge"]
            u = st.robot_cells[a] | st.robot_cells[b]
            st.robot_cells[a] = set(u)
            st.robot_cells[b] = set(u)
            st.meetings.append((t, a, b, *rec["at"]))
            st.trajectories[f"r{a}"].append((t, *rec["at"]))
            st.trajectories[f"r{b}"].append((t, *rec["at"]))
        elif k == "spont" and rec.get("kind") in ("team", "neighbor", "foreign"):
            a, b = rec["a"], rec["b"]
            u = st.robot_cells[a] | st.robot_cells[b]
            st.robot_cells[a] = set(u)
            st.robot_cells[b] = set(u)
        elif k == "external":
            if "riders" in rec and not rec.get("spontaneous"):
                a, b = rec["riders"]
                u = st.robot_cells[a] | st.robot_cells[b]
                st.robot_cells[a] = set(u)
                st.robot_cells[b] = set(u)
        elif k == "deliver" or k == "return":
            if k == "return":
                st.returns.append(rec)
                continue
            rid = rec["rid"]
            tid = rec["team"]
            fresh = st.robot_cells[rid] - st.op_cells[tid]
            if fresh:
                st.op_cells[tid] |= fresh
                for c in fresh:
                    st.op_receipt[tid][c] = t
                st.deliveries[tid].append((t, rid, fresh))
            # contact is bidirectional: the courier leaves with the union
            st.robot_cells[rid] |= st.op_cells[tid]
            if "at" in rec:
                st.trajectories[f"op{tid}"].append((t, *rec["at"]))
        elif k == "opmove":
            st.trajectories[f"op{rec['team']}"].append((t, *rec["at"]))
        elif k == "migrate" and rec.get("phase") == "arrive":
            st.trajectories[f"op{rec['team']}"].append((t, *rec["target"]))
    return st


@dataclass
class SdfEdge:
    kind: str          # E | M | R | L
    tile: tuple | None
    t0: int
    t1: int
    agent: str | None = None
    latency: int | None = None

    def to_dict(self) -> dict:
        return {"kind": self.kind, "tile": list(self.tile) if self.tile else None,
                "t0": self.t0, "t1": self.t1, "agent": self.agent, "latency": self.latency}


@dataclass
class SdfTree:
    tile_size: int
    leaves: dict                      # tile -> {"t1": tick, "explorer": rid}
    edges: list[SdfEdge]
    trajectories: dict[str, list]
    max_latency: int
    l_edge: SdfEdge | None

    def to_dict(self) -> dict:
        return {
            "tile_size": self.tile_size,
            "leaves": [{"tile": list(k), **v} for k, v in sorted(self.leaves.items())],
            "edges": [e.to_dict() for e in self.edges],
            "trajectories": {k: [list(p) for p in v] for k, v in self.trajectories.items()},
            "max_latency": self.max_latency,
            "l_edge": self.l_edge.to_dict() if self.l_edge else None,
        }


def build_sdf_tree(records: list[dict], operator: int, tile: int = DEFAULT_TILE) -> SdfTree:
    """Leaves are map tiles stamped with their first-explored time; R-edges
    link each batch of newly delivered tiles to the operator trajectory, and
    the L-edge marks the worst receipt latency."""
    st = replay_flow(records)
    if operator not in st.op_cells:
        raise TraceError(f"operator {operator} not in trace")
    leaves: dict = {}
    edges: list[SdfEdge] = []
    for c, t0 in st.explored.items():
        key = (c[0] // tile, c[1] // tile)
        if key not in leaves or t0 < leaves[key]["t1"]:
            leaves[key] = {"t1": t0, "explorer": st.explorer[c]}
    for key, leaf in sorted(leaves.items()):
        edges.append(SdfEdge("E", key, leaf["t1"], leaf["t1"], agent=f"r{leaf['explorer']}"))
    for (t, a, b, x, y) in st.meetings:
        edges.append(SdfEdge("M", None, t, t, agent=f"r{a}+r{b}"))
    max_lat = 0
    l_edge = None
    for (t3, rid, cells) in st.deliveries[operator]:
        by_tile: dict = {}
        for c in cells:
            key = (c[0] // tile, c[1] // tile)
            t0 = st.explored.get(c, t3)
            by_tile[key] = min(by_tile.get(key, t3), t0)
        for key, t1 in sorted(by_tile.items()):
            lat = t3 - t1
            e = SdfEdge("R", key, t1, t3, agent=f"r{rid}", latency=lat)
            edges.append(e)
            if lat > max_lat:
                max_lat = lat
                l_edge = SdfEdge("L", key, t1, t1 + lat, latency=lat)
    if l_edge:
        edges.append(l_edge)
    return SdfTree(tile, leaves, edges, st.trajectories, max_lat, l_edge)


def cell_latency_max(records: list[dict]) -> int:
    """Independent recomputation of the worst receipt latency over all
    operators, straight from the contact log."""
    st = replay_flow(records)
    worst = 0
    for tid, dels in st.deliveries.items():
        for (t3, _rid, cells) in dels:
            for c in cells:
                worst = max(worst, t3 - st.explored.get(c, t3))
    return worst


def report(records: list[dict]) -> dict:
    header = records[0]
    sc = header["scenario"]
    st = replay_flow(records)
    summary = records[-1] if records[-1].get("k") == "summary" else {}
    res = 1.0
    if "map_inline" in sc:
        res = float(sc["map_inline"][0].split()[2])
    cell_area = res * res
    teams = {int(t["id"]): t for t in sc["teams"]}
    reachable = summary.get("reachable_cells")
    mission_time = {}
    for tid in teams:
        mt = None
        if reachable:
            free_known = 0
            for rec_t, _rid, cells in st.deliveries[tid]:
                free_known += sum(1 for c in cells if st.cell_state.get(c) == 1)
                if free_known >= reachable:
                    mt = rec_t
                    break
        mission_time[tid] = mt
    last_update = max((r.get("t", 0) for r in records if r.get("k") == "sense"), default=0)
    duration = summary.get("t", last_update)
    returns = [r for r in st.returns]
    rates = {}
    lat_by_team = {}
    for tid, t in teams.items():
        t_h = int(t.get("T_h", 120))
        n_ret = sum(1 for r in returns if r.get("team") == tid)
        rates[tid] = round(n_ret / max(1.0, duration / t_h), 3)
        worst = 0
        for (t3, _rid, cells) in st.deliveries[tid]:
            for c in cells:
                worst = max(worst, t3 - st.explored.get(c, t3))
        lat_by_team[tid] = worst
    gaps = {}
    for pk, times in (summary.get("externals") or {}).items():
        ts = sorted(times)
        gaps[pk] = max((b - a for a, b in zip(ts, ts[1:])), default=0)
    overlap = {}
    tids = sorted(teams)
    for i, a in enumerate(tids):
        for b in tids[i + 1 :]:
            sa, sb = st.team_sensed[a], st.team_sensed[b]
            union = sa | sb
            overlap[f"{a}-{b}"] = round(100.0 * len(sa & sb) / max(1, len(union)), 2)
    coverage = {}
    for tid in teams:
        known = len(st.op_cells[tid])
        coverage[tid] = {
            "cells": known,
            "area_m2": round(known * cell_area, 2),
            "pct_of_reachable": round(100.0 * known / reachable, 2) if reachable else None,
        }
    return {
        "outcome": summary.get("outcome"),
        "complete": summary.get("complete"),
        "duration": duration,
        "coverage": {str(k): v for k, v in coverage.items()},
        "mission_time": {str(k): v for k, v in mission_time.items()},
        "last_update": last_update,
        "return_rate_per_latency_window": {str(k): v for k, v in rates.items()},
        "max_receipt_latency": {str(k): v for k, v in lat_by_team.items()},
        "max_stamp_latency": summary.get("max_stamp_latency"),
        "max_external_gap": gaps,
        "overlap_pct": overlap,
        "trajectory_cells": summary.get("traj"),
        "operator_trajectory_cells": summary.get("op_traj"),
        "returns": len(returns),
    }


def sdf_svg(tree: SdfTree, width: int = 900, height: int = 600) -> str:
    """Static 2.5D projection: space flattened to one axis, time upward."""
    pts = [p for traj in tree.trajectories.values() for p in traj]
    if not pts:
        return "<svg xmlns='http://www.w3.org/2000/svg'/>"
    t_max = max(p[0] for p in pts) or 1
    x_max = max(p[1] + 0.45 * p[2] for p in pts) or 1

    def proj(t, x, y):
        px = 40 + (x + 0.45 * y) / x_max * (width - 80)
        py = height - 30 - (t / t_max) * (height - 60)
        return px, py

    out = [f"<svg xmlns='http://www.w3.org/2000/svg' width='{width}' height='{height}' "
           f"viewBox='0 0 {width} {height}'>",
           "<rect width='100%' height='100%' fill='#10141a'/>"]
    palette = ["#e5484d", "#46a758", "#0091ff", "#f5d90a", "#b16dff", "#f76b15"]
    for i, (agent, traj) in enumerate(sorted(tree.trajectories.items())):
        color = palette[i % len(palette)]
        path = " ".join(f"{'M' if k == 0 else 'L'}{proj(t, x, y)[0]:.1f},{proj(t, x, y)[1]:.1f}"
                        for k, (t, x, y) in enumerate(sorted(traj)))
        wdt = 2.2 if agent.startswith("op") else 1.1
        out.append(f"<path d='{path}' fill='none' stroke='{color}' stroke-width='{wdt}' "
                   f"opacity='0.9'><title>{agent}</title></path>")
    for e in tree.edges:
        if e.kind == "R" and e.tile:
            x = (e.tile[0] + 0.5) * tree.tile_size
            y = (e.tile[1] + 0.5) * tree.tile_size
            x0, y0 = proj(e.t0, x, y)
            x1, y1 = proj(e.t1, x, y)
            out.append(f"<line x1='{x0:.1f}' y1='{y0:.1f}' x2='{x1:.1f}' y2='{y1:.1f}' "
                       "stroke='#8ea1b2' stroke-width='0.6' opacity='0.5'/>")
        elif e.kind == "E" and e.tile:
            x = (e.tile[0] + 0.5) * tree.tile_size
            y = (e.tile[1] + 0.5) * tree.tile_size
            px, py = proj(e.t0, x, y)
            out.append(f"<rect x='{px-2:.1f}' y='{py-2:.1f}' width='4' height='4' "
                       "fill='#3dd68c' opacity='0.8'/>")
    if tree.l_edge and tree.l_edge.tile:
        x = (tree.l_edge.tile[0] + 0.5) * tree.tile_size
        y = (tree.l_edge.tile[1] + 0.5) * tree.tile_size
        x0, y0 = proj(tree.l_edge.t0, x, y)
        x1, y1 = proj(tree.l_edge.t1, x, y)
        out.append(f"<line x1='{x0:.1f}' y1='{y0:.1f}' x2='{x1:.1f}' y2='{y1:.1f}' "
                   "stroke='#ff5d5d' stroke-width='2.5'/>")
        out.append(f"<text x='{x1+6:.1f}' y='{y1:.1f}' fill='#ff5d5d' font-size='12'>"
                   f"max latency {tree.max_latency}</text>")
    out.append("</svg>")
    return "\n".join(out)


def write_outputs(records: list[dict], out_dir: str | Path, svg: bool = True) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rep = report(records)
    (out / "report.json").write_text(json.dumps(rep, indent=2, sort_keys=True) + "\n")
    header = records[0]
    trees = {}
    for team in header["scenario"]["teams"]:
        tid = int(team["id"])
        trees[tid] = build_sdf_tree(records, tid)
    (out / "sdf_tree.json").write_text(json.dumps(
        {str(k): v.to_dict() for k, v in trees.items()}, sort_keys=True) + "\n")
    if svg and trees:
        first = trees[sorted(trees)[0]]
        (out / "sdf_tree.svg").write_text(sdf_svg(first))
    return rep
