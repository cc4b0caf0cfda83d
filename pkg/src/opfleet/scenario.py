"""Scenario configuration: parsing, validation, and the run seed."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .commmodel import CommParams, can_communicate
from .world import Cell, GroundTruth, RobotClass, FREE, load_map, parse_map


class ScenarioError(Exception):
    pass


DEFAULT_CLASSES = {
    "ugv": {"max_speed": 1.0, "traversal_mask": ["open", "low"]},
    "uav": {"max_speed": 1.0, "traversal_mask": ["open", "window"]},
    "rover": {"max_speed": 1.0, "traversal_mask": ["open", "low", "window"]},
}


@dataclass
class TeamSpec:
    team_id: int
    operator_start: Cell
    robot_ids: list[int]           # global robot ids in ring order
    robot_classes: list[str]
    robot_starts: list[Cell]
    t_h: int


@dataclass
class Scenario:
    name: str
    truth: GroundTruth
    classes: dict[str, RobotClass]
    teams: list[TeamSpec]
    hyper_ring: list[int]
    t_c: int
    comm: CommParams
    sense_range: int = 5
    t_plus_max: int = 60
    t_minus_max: int = 30
    seed: int = 0
    tick_limit: int = 4000
    migrate_enabled: bool = True
    operator_policy: str = "auto"     # auto | idle
    operator_speed_factor: float = 0.8
    min_frontier_size: int = 3
    stall_window: int | None = None
    requests: list[dict] = field(default_factory=list)
    failures: list[dict] = field(default_factory=list)
    initial_externals: list[dict] = field(default_factory=list)
    raw: dict = field(default_factory=dict)

    @property
    def n_robots(self) -> int:
        return sum(len(t.robot_ids) for t in self.teams)

    def team_of_robot(self, rid: int) -> TeamSpec:
        for t in self.teams:
            if rid in t.robot_ids:
                return t
        raise ScenarioError(f"robot {rid} not in any team")


def load_scenario(path: str | Path) -> Scenario:
    raw = json.loads(Path(path).read_text())
    base = Path(path).parent
    return parse_scenario(raw, base)


def parse_scenario(raw: dict, base: Path | None = None) -> Scenario:
    if "map_file" in raw:
        map_path = Path(raw["map_file"])
        if base is not None and not map_path.is_absolute():
            map_path = base / map_path
        truth = load_map(map_path)
    elif "map_inline" in raw:
        truth = parse_map(list(raw["map_inline"]))
    else:
        raise ScenarioError("scenario needs map_file or map_inline")

    class_defs = dict(DEFAULT_CLASSES)
    class_defs.update(raw.get("classes", {}))
    classes = {
        name: RobotClass(
            name=name,
            max_speed=float(d.get("max_speed", 1.0)),
            traversal_mask=frozenset(d.get("traversal_mask", ["open", "low", "window"])),
            battery_capacity=d.get("battery_capacity"),
            drain_per_cell=float(d.get("drain_per_cell", 0.0)),
        )
        for name, d in class_defs.items()
    }

    teams = []
    for t in raw["teams"]:
        robots = t["robots"]
        ring = t.get("ring", [r["id"] for r in robots])
        by_id = {r["id"]: r for r in robots}
        if sorted(ring) != sorted(by_id):
            raise ScenarioError(f"team {t['id']}: ring must permute robot ids")
        teams.append(
            TeamSpec(
                team_id=int(t["id"]),
                operator_start=tuple(t["operator_start"]),
                robot_ids=[int(r) for r in ring],
                robot_classes=[str(by_id[r].get("class", "rover")) for r in ring],
                robot_starts=[tuple(by_id[r]["start"]) for r in ring],
                t_h=int(t.get("T_h", 120)),
            )
        )

    comm = CommParams.from_dict(raw.get("comm", {})) if raw.get("comm") else CommParams()
    sc = Scenario(
        name=raw.get("name", "scenario"),
        truth=truth,
        classes=classes,
        teams=teams,
        hyper_ring=[int(k) for k in raw.get("hyper_ring", [t.team_id for t in teams])],
        t_c=int(raw.get("T_c", 300)),
        comm=comm,
        sense_range=int(raw.get("sense_range", 5)),
        t_plus_max=int(raw.get("T_plus_max", 60)),
        t_minus_max=int(raw.get("T_minus_max", 30)),
        seed=int(raw.get("seed", 0)),
        tick_limit=int(raw.get("tick_limit", 4000)),
        migrate_enabled=bool(raw.get("migrate_enabled", True)),
        operator_policy=str(raw.get("operator_policy", "auto")),
        operator_speed_factor=float(raw.get("operator_speed_factor", 0.8)),
        min_frontier_size=int(raw.get("min_frontier_size", 3)),
        stall_window=raw.get("stall_window"),
        requests=list(raw.get("requests", [])),
        failures=list(raw.get("failures", [])),
        initial_externals=list(raw.get("initial_externals", [])),
        raw=raw,
    )
    validate_scenario(sc)
    return sc


def validate_scenario(sc: Scenario) -> None:
    grid = sc.truth.grid
    if not sc.teams:
        raise ScenarioError("scenario needs at least one team")
    seen_ids: set[int] = set()
    for t in sc.teams:
        if t.t_h <= 0:
            raise ScenarioError(f"team {t.team_id}: T_h must be positive")
        if not grid.in_bounds(t.operator_start) or grid.at(t.operator_start) != FREE:
            raise ScenarioError(f"team {t.team_id}: operator start not on a free cell")
        for rid, start, cname in zip(t.robot_ids, t.robot_starts, t.robot_classes):
            if rid in seen_ids:
                raise ScenarioError(f"duplicate robot id {rid}")
            seen_ids.add(rid)
            if cname not in sc.classes:
                raise ScenarioError(f"robot {rid}: unknown class {cname}")
            if not grid.in_bounds(start) or grid.at(start) != FREE:
                raise ScenarioError(f"robot {rid}: start not on a free cell")
        anchors = [t.operator_start] + list(t.robot_starts)
        for a in anchors:
            for b in anchors:
                if not can_communicate(a, b, grid, sc.comm, unknown_blocks=False):
                    raise ScenarioError(
                        f"team {t.team_id}: start positions {a} and {b} out of range"
                    )
    if sc.t_c <= 0:
        raise ScenarioError("T_c must be positive")
    if sorted(sc.hyper_ring) != sorted(t.team_id for t in sc.teams):
        raise ScenarioError("hyper_ring must permute team ids")
    if sc.t_plus_max <= sc.t_minus_max:
        raise ScenarioError("T+max must exceed T-max")


def scenario_to_json(sc: Scenario) -> dict:
    return sc.raw
