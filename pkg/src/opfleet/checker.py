"""Independent invariant checker over a trace.

Recomputes the protocol guarantees straight from the logged contacts without
touching any planner code: return-event bounds, external-event gaps, receipt
latencies, knowledge provenance, event pairing, and transition case rules.
Used by the `check` CLI subcommand as the acceptance oracle.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .metrics import parse_trace, replay_flow
from .protocol import estimate_chi


@dataclass
class Finding:
    rule: str
    t: int
    detail: str

    def __str__(self) -> str:
        return f"[{self.rule}] t={self.t}: {self.detail}"


@dataclass
class CheckResult:
    ok: bool
    findings: list[Finding]
    stats: dict


def check_trace(records: list[dict]) -> CheckResult:
    findings: list[Finding] = []
    header = records[0]
    sc = header["scenario"]
    teams = {int(t["id"]): t for t in sc["teams"]}
    t_h = {tid: int(t.get("T_h", 120)) for tid, t in teams.items()}
    t_c = int(sc.get("T_c", 300))
    robot_team = {}
    slot_of = {}
    for tid, t in teams.items():
        ring = t.get("ring", [r["id"] for r in t["robots"]])
        for k, rid in enumerate(ring):
            robot_team[int(rid)] = tid
            slot_of[int(rid)] = k

    findings += _check_return_bounds(records, teams, t_h, robot_team, slot_of)
    findings += _check_external_gaps(records, sc, t_c)
    findings += _check_receipt_latency(records, t_h, robot_team, t_c)
    findings += _check_event_pairing(records)
    findings += _check_knowledge_provenance(records, teams, t_h, robot_team, slot_of)
    findings += _check_transition_cases(records)
    stats = {
        "records": len(records),
        "meets": sum(1 for r in records if r.get("k") == "meet"),
        "returns": sum(1 for r in records if r.get("k") == "return"),
        "findings": len(findings),
    }
    return CheckResult(not findings, findings, stats)


def _team_rings(records: list[dict], teams: dict) -> dict:
    """Ring membership over time per team, from the rewire log."""
    timeline = {tid: [(0, [int(r["id"]) for r in t["robots"]])]
                for tid, t in teams.items()}
    for rec in records:
        if rec.get("k") == "rewire":
            timeline[int(rec["team"])].append((rec["t"], list(rec["ring"])))
    return timeline


def _ring_at(timeline: list, t: int) -> list[int]:
    cur = timeline[0][1]
    for (tt, ring) in timeline:
        if tt <= t:
            cur = ring
        else:
            break
    return cur


def _soft_windows(records, t_h, robot_team) -> dict[int, list[tuple[int, int]]]:
    """Windows where failure recovery or topology transitions legitimately
    suspend the hard per-tick bound for a team."""
    out: dict[int, list[tuple[int, int]]] = {}
    for rec in records:
        k = rec.get("k")
        if k in ("detect", "fail"):
            tid = robot_team.get(rec.get("rid"))
            if tid is not None:
                out.setdefault(tid, []).append((rec["t"], rec["t"] + 4 * t_h[tid]))
        elif k == "chain" and rec.get("phase") in ("assigned", "disband",
                                                   "disband-regroup"):
            tid = rec["team"]
            out.setdefault(tid, []).append((rec["t"], rec["t"] + 4 * t_h[tid]))
        elif k == "meet" and rec.get("messenger"):
            tid = robot_team.get(rec["messenger"]["rid"])
            if tid is not None:
                out.setdefault(tid, []).append((rec["t"], rec["t"] + 4 * t_h[tid]))
        elif k == "migrate":
            tid = rec["team"]
            out.setdefault(tid, []).append((rec["t"], rec["t"] + 4 * t_h[tid]))
    return out


def _in_window(windows, tid, t) -> bool:
    return any(a <= t <= b for (a, b) in windows.get(tid, []))


def _check_return_bounds(records, teams, t_h, robot_team, slot_of) -> list[Finding]:
    """Return-event guarantee: every scheduled return lands within the latency
    bound measured against the operator's baseline just before the delivery."""
    out = []
    rings = _team_rings(records, teams)
    windows = _soft_windows(records, t_h, robot_team)
    prev_chi: dict[int, int] = {tid: 0 for tid in teams}
    for rec in records:
        if rec.get("k") != "return":
            continue
        tid = rec["team"]
        t = rec["t"]
        ring = _ring_at(rings[tid], t)
        slots = [slot_of[r] for r in ring if r in slot_of]
        if not slots:
            continue  # no active ring: the baseline is undefined
        before = rec.get("stamps_before") or []
        after = rec.get("stamps") or []
        chi_before = min((before[s] for s in slots), default=0) if before else 0
        chi_after = min((after[s] for s in slots), default=0) if after else 0
        if t > t_h[tid] + chi_before and not _in_window(windows, tid, t):
            out.append(Finding("prop1-return-bound", t,
                               f"team {tid}: return at {t} exceeds T_h+chi = "
                               f"{t_h[tid]}+{chi_before}"))
        if chi_after < prev_chi[tid]:
            out.append(Finding("prop1-chi-monotone", t,
                               f"team {tid}: chi regressed {prev_chi[tid]} -> {chi_after}"))
        prev_chi[tid] = chi_after
    return out


def _check_external_gaps(records, sc, t_c_default) -> list[Finding]:
    out = []
    times: dict[str, list[int]] = {}
    t_c_by_pair: dict[str, int] = {}
    for rec in records:
        if rec.get("k") == "external":
            times.setdefault(rec["pair"], []).append(rec["t"])
        if rec.get("k") == "request" and (rec.get("req") or {}).get("kind") == "xi7":
            req = rec["req"]
            if rec.get("status") == "active":
                other = req["args"]["other_team"]
                lo, hi = sorted((req["team"], int(other)))
                t_c_by_pair[f"{lo}-{hi}"] = int(req["args"]["t_c"])
    for pair, ts in times.items():
        bound = t_c_by_pair.get(pair, t_c_default)
        seq = [0] + sorted(ts)
        for a, b in zip(seq, seq[1:]):
            if b - a > bound:
                out.append(Finding("inter-team-gap", b,
                                   f"pair {pair}: external gap {b - a} > T_c {bound}"))
    return out


def _check_receipt_latency(records, t_h, robot_team, t_c) -> list[Finding]:
    """Every delivered cell must be young enough: own-team cells within the
    intra-team bound, foreign cells within one inter-team period on top."""
    out = []
    st = replay_flow(records)
    windows = _soft_windows(records, t_h, robot_team)
    for tid, dels in st.deliveries.items():
        for (t3, _rid, cells) in dels:
            worst_own = 0
            worst_foreign = 0
            for c in cells:
                age = t3 - st.explored.get(c, t3)
                explorer = st.explorer.get(c)
                if explorer is not None and robot_team.get(explorer) == tid:
                    worst_own = max(worst_own, age)
                else:
                    worst_foreign = max(worst_foreign, age)
            if worst_own > t_h[tid] and not _in_window(windows, tid, t3):
                out.append(Finding("receipt-latency", t3,
                                   f"team {tid}: own cells {worst_own} ticks old "
                                   f"> T_h {t_h[tid]}"))
            if worst_foreign > t_h[tid] + t_c and not _in_window(windows, tid, t3):
                out.append(Finding("receipt-latency-foreign", t3,
                                   f"team {tid}: foreign cells {worst_foreign} ticks "
                                   f"old > T_h+T_c {t_h[tid] + t_c}"))
    return out


def _check_event_pairing(records) -> list[Finding]:
    """Each meeting event id is consumed exactly once, by its two peers, at one
    time and place."""
    out = []
    seen: dict[int, tuple] = {}
    for rec in records:
        if rec.get("k") != "meet":
            continue
        eid = rec.get("eid")
        key = (rec["t"], tuple(rec["at"]), tuple(sorted(rec["edge"])))
        if eid in seen and seen[eid] != key:
            out.append(Finding("event-pairing", rec["t"],
                               f"event {eid} fired twice with different context"))
        seen[eid] = key
    return out


def _check_knowledge_provenance(records, teams, t_h, robot_team, slot_of) -> list[Finding]:
    """One forward replay of the contact graph yields both rules: logged
    freshness vectors must be supported by prior contacts, and before every
    stamp-raising event the oldest active teammate's data age must fit the
    team's bound."""
    out = []
    rings = _team_rings(records, teams)
    windows = _soft_windows(records, t_h, robot_team)
    team_sizes: dict[int, int] = {}
    for rid, tid in robot_team.items():
        team_sizes[tid] = max(team_sizes.get(tid, 0), slot_of[rid] + 1)
    vec: dict[int, list[int]] = {rid: [0] * team_sizes[tid]
                                 for rid, tid in robot_team.items()}
    rid_by_slot = {tid: sorted((slot_of[r], r) for r, tt in robot_team.items()
                               if tt == tid) for tid in teams}
    op_vec: dict[int, list[int]] = {tid: [0] * team_sizes[tid] for tid in teams}
    linked: dict[int, set[int]] = {tid: set() for tid in teams}
    detached: dict[int, set[int]] = {tid: set() for tid in teams}

    def check_latency(tid, t):
        if _in_window(windows, tid, t):
            return
        ring = _ring_at(rings[tid], t)
        for rid in ring:
            if rid in detached[tid] or rid in linked[tid] or rid not in slot_of:
                continue
            age = t - op_vec[tid][slot_of[rid]]
            if age > t_h[tid]:
                out.append(Finding("latency-bound", t,
                                   f"team {tid}: robot {rid} data {age} ticks old "
                                   f"> T_h {t_h[tid]}"))

    def sync_group(tid, rids, t):
        merged = op_vec[tid][:]
        for rid in rids:
            for sl in range(len(merged)):
                merged[sl] = max(merged[sl], vec[rid][sl])
        for rid in rids:
            merged[slot_of[rid]] = max(merged[slot_of[rid]], t)
        op_vec[tid] = merged[:]
        for rid in rids:
            vec[rid] = merged[:]

    for rec in records:
        k = rec.get("k")
        t = rec.get("t", 0)
        if k == "sense":
            rid = rec["rid"]
            vec[rid][slot_of[rid]] = t
        elif k == "meet":
            a, b = rec["edge"]
            for label, rid in (("know_pred", a), ("know_succ", b)):
                logged = rec.get(label)
                if logged is None:
                    continue
                expect = list(vec[rid])
                expect[slot_of[rid]] = t  # a robot's own data is always current
                for sl in range(len(expect)):
                    if logged[sl] > expect[sl]:
                        out.append(Finding(
                            "knowledge-partition", t,
                            f"robot {rid} claims slot {sl} freshness {logged[sl]} "
                            f"but contact graph supports only {expect[sl]}"))
                        break
            merged = [max(x, y) for x, y in zip(vec[a], vec[b])]
            merged[slot_of[a]] = t
            merged[slot_of[b]] = t
            vec[a] = list(merged)
            vec[b] = list(merged)
        elif k == "spont" and rec.get("kind") == "team":
            a, b = rec["a"], rec["b"]
            merged = [max(x, y) for x, y in zip(vec[a], vec[b])]
            merged[slot_of[a]] = t
            merged[slot_of[b]] = t
            vec[a] = list(merged)
            vec[b] = list(merged)
        elif k == "deliver":
            rid = rec["rid"]
            tid = rec["team"]
            check_latency(tid, t)
            vec[rid][slot_of[rid]] = t
            cur = op_vec[tid]
            for sl in range(len(cur)):
                cur[sl] = max(cur[sl], vec[rid][sl])
                vec[rid][sl] = max(vec[rid][sl], cur[sl])
        elif k == "opstamps":
            tid = rec["team"]
            check_latency(tid, t)
            for sl, v in enumerate(rec["stamps"]):
                if v >= 0:
                    op_vec[tid][sl] = max(op_vec[tid][sl], v)
        elif k == "oplink":
            tid = rec["team"]
            check_latency(tid, t)
            for rid in rec.get("leave", []):
                linked[tid].discard(rid)
                op_vec[tid][slot_of[rid]] = max(op_vec[tid][slot_of[rid]], t)
            for rid in rec.get("enter", []):
                linked[tid].add(rid)
                op_vec[tid][slot_of[rid]] = max(op_vec[tid][slot_of[rid]], t)
        elif k == "migrate" and rec.get("phase") in ("convoy", "arrive"):
            tid = rec["team"]
            members = rec.get("ring") or [r for r, tt in robot_team.items() if tt == tid]
            sync_group(tid, [r for r in members if r in vec], t)
        elif k == "rewire" and rec.get("why", "").startswith(("reinsert", "regroup")):
            tid = rec["team"]
            sync_group(tid, [r for r in rec.get("ring", []) if r in vec], t)
        elif k == "fail":
            tid = robot_team.get(rec["rid"])
            if tid is not None:
                detached[tid].add(rec["rid"])
        elif k == "meet" and rec.get("messenger"):
            pass
        elif k == "chain" and rec.get("phase") == "assigned":
            tid = rec["team"]
            detached[tid].update(rec.get("relays", []))
            if rec.get("target") is not None:
                detached[tid].add(rec["target"])
        elif k == "chain" and rec.get("phase") in ("disband", "disband-regroup"):
            tid = rec["team"]
            detached[tid] = {r for r in detached[tid]
                             if r not in set(rec.get("ring", []))}
        elif k == "summary":
            for tid in teams:
                check_latency(tid, t)
        if k == "meet" and rec.get("messenger"):
            tid = robot_team.get(rec["messenger"]["rid"])
            if tid is not None:
                detached[tid].add(rec["messenger"]["rid"])
        if k == "rewire" and rec.get("why", "").startswith("reinsert"):
            tid = rec["team"]
            detached[tid] -= set(rec.get("ring", []))
    return out


def _check_transition_cases(records) -> list[Finding]:
    """During a spread->chain epoch every old-ring edge meets at most once and
    the logged case labels match the published role split."""
    out = []
    active: dict[int, dict] = {}
    seen_edges: dict[int, set] = {}
    for rec in records:
        k = rec.get("k")
        if k == "chain" and rec.get("phase") == "assigned":
            tid = rec["team"]
            active[tid] = {"relays": set(rec["relays"]), "target": rec["target"]}
            seen_edges[tid] = set()
        elif k == "chain" and rec.get("phase") in ("active", "disband", "disband-regroup"):
            active.pop(rec.get("team"), None)
        elif k == "meet" and rec.get("transition_case"):
            tid = rec.get("team")
            info = active.get(tid)
            if info is None:
                continue
            a, b = rec["edge"]
            chainbound = lambda rid: rid in info["relays"] or rid == info["target"]
            expect = {
                (False, False): "both-staying",
                (False, True): "stayer-relay",
                (True, False): "relay-stayer",
                (True, True): "both-relays",
            }[(chainbound(a), chainbound(b))]
            if rec["transition_case"] != expect:
                out.append(Finding("transition-case", rec["t"],
                                   f"edge {a}-{b} labelled {rec['transition_case']}, "
                                   f"roles imply {expect}"))
            edge = frozenset((a, b))
            if edge in seen_edges[tid]:
                out.append(Finding("transition-edge-repeat", rec["t"],
                                   f"edge {a}-{b} met twice during the epoch"))
            seen_edges[tid].add(edge)
    return out


def check_text(text: str) -> CheckResult:
    return check_trace(parse_trace(text))
