"""Scenario builders shared by the engine tests and the acceptance suite."""

from __future__ import annotations

from opfleet.mapgen import branch_map, free_cells_near, map_rows, random_map
from conftest import w1_rows


def w1(t_h=60, **over):
    raw = {
        "name": "w1",
        "map_inline": ["20 10 1.0"] + w1_rows(),
        "teams": [{"id": 0, "operator_start": [1, 5], "T_h": t_h,
                   "robots": [{"id": 0, "start": [2, 5]}, {"id": 1, "start": [2, 4]}]}],
        "T_c": 300, "seed": 7, "tick_limit": 800, "sense_range": 4,
    }
    raw.update(over)
    return raw


def single_team_random(seed, width=40, height=30, n_robots=4, t_h=120, **over):
    truth = random_map(width, height, seed)
    starts = free_cells_near(truth, (1, 1), n_robots + 1)
    raw = {
        "name": f"rand-{seed}",
        "map_inline": map_rows(truth),
        "comm": {"q0": 90, "alpha": 2.0, "beta": 15, "threshold": 50, "chain_margin": 5},
        "teams": [{"id": 0, "operator_start": list(starts[0]), "T_h": t_h,
                   "robots": [{"id": i, "start": list(starts[i + 1])}
                              for i in range(n_robots)]}],
        "T_c": 300, "seed": seed, "tick_limit": 1800, "sense_range": 5,
    }
    raw.update(over)
    return raw


def two_team_random(seed, t_c, width=40, height=30, t_h=120, **over):
    truth = random_map(width, height, seed + 100)
    starts = free_cells_near(truth, (1, 1), 6)
    raw = {
        "name": f"pair-{seed}",
        "map_inline": map_rows(truth),
        "comm": {"q0": 90, "alpha": 2.5, "beta": 15, "threshold": 50, "chain_margin": 5},
        "teams": [
            {"id": 0, "operator_start": list(starts[0]), "T_h": t_h,
             "robots": [{"id": 0, "start": list(starts[1])},
                        {"id": 1, "start": list(starts[2])}]},
            {"id": 1, "operator_start": list(starts[3]), "T_h": t_h,
             "robots": [{"id": 2, "start": list(starts[4])},
                        {"id": 3, "start": list(starts[5])}]},
        ],
        "hyper_ring": [0, 1],
        "T_c": t_c, "seed": seed, "tick_limit": 2500, "sense_range": 5,
    }
    raw.update(over)
    return raw


def three_branch(migrate_enabled: bool, t_h=64, **over):
    truth = branch_map(width=80, height=25)
    raw = {
        "name": "branches",
        "map_inline": map_rows(truth),
        "comm": {"q0": 90, "alpha": 3.0, "beta": 15, "threshold": 50, "chain_margin": 5},
        "teams": [{"id": 0, "operator_start": [3, 12], "T_h": t_h,
                   "robots": [{"id": 0, "start": [4, 11]}, {"id": 1, "start": [4, 12]},
                              {"id": 2, "start": [4, 13]}]}],
        "T_c": 600, "seed": 1, "tick_limit": 8000, "sense_range": 4,
        "migrate_enabled": migrate_enabled,
        "operator_policy": "auto",
        "stall_window": 400,
    }
    raw.update(over)
    return raw


def chain_mission(n_robots=4, target_rid=3, target=(30, 10), duration=30,
                  request_tick=400, seed=3, **over):
    width, height = 60, 20
    rows = ["." * width for _ in range(height)]
    robots = [{"id": i, "start": [4 + (i % 2), 9 + i // 2]} for i in range(n_robots)]
    raw = {
        "name": "chain-mission",
        "map_inline": [f"{width} {height} 1.0"] + rows,
        "comm": {"q0": 90, "alpha": 3.0, "beta": 15, "threshold": 50, "chain_margin": 10},
        "teams": [{"id": 0, "operator_start": [3, 10], "T_h": 150, "robots": robots}],
        "T_c": 600, "seed": seed, "tick_limit": 2500, "sense_range": 5,
        "operator_policy": "idle",
        "requests": [{"tick": request_tick, "issuer": "operator:0", "kind": "xi4",
                      "args": {"robot": target_rid, "target": list(target),
                               "duration": duration}}],
    }
    raw.update(over)
    return raw


def door_pair(t_c, t_h=150, seed=5, **over):
    """Two teams split by a one-door wall; externals must cross via messengers."""
    width, height = 90, 10
    rows = ["".join("#" if (x == 45 and y != 5) else "." for x in range(width))
            for y in range(height)]
    raw = {
        "name": "door-pair",
        "map_inline": [f"{width} {height} 1.0"] + rows,
        "comm": {"q0": 90, "alpha": 3.0, "beta": 40, "threshold": 50, "chain_margin": 5},
        "teams": [
            {"id": 0, "operator_start": [46, 5], "T_h": t_h,
             "robots": [{"id": 0, "start": [47, 5]}, {"id": 1, "start": [47, 6]}]},
            {"id": 1, "operator_start": [44, 5], "T_h": t_h,
             "robots": [{"id": 2, "start": [43, 5]}, {"id": 3, "start": [43, 4]}]},
        ],
        "hyper_ring": [0, 1],
        "T_c": t_c, "seed": seed, "tick_limit": 3000, "sense_range": 5,
        "operator_policy": "auto",
    }
    raw.update(over)
    return raw


def failure_mission(kill_tick=None, victim=1, width=56, height=30, t_h=400, **over):
    rows = ["." * width for _ in range(height)]
    robots = [{"id": i, "start": [3 + (i % 2), 14 + i // 2]} for i in range(4)]
    raw = {
        "name": "failure-mission",
        "map_inline": [f"{width} {height} 1.0"] + rows,
        "comm": {"q0": 90, "alpha": 2.0, "beta": 15, "threshold": 50, "chain_margin": 5},
        "teams": [{"id": 0, "operator_start": [2, 15], "T_h": t_h, "robots": robots}],
        "T_c": 1200, "seed": 2, "tick_limit": 2500, "sense_range": 3,
        "T_plus_max": 60, "T_minus_max": 30,
        "operator_policy": "idle",
        "failures": [{"tick": kill_tick, "robot": victim}] if kill_tick else [],
    }
    raw.update(over)
    return raw
