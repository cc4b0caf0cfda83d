"""Small combinatorial solvers: open-path TSP ordering and bottleneck assignment.

Both are deterministic; ties resolve to the lexicographically smallest
solution so identical inputs always reproduce identical plans.
"""

from __future__ import annotations

import math
from itertools import permutations

HELD_KARP_LIMIT = 12


def tsp_order(dist: list[list[float]]) -> list[int]:
    """Visit order of waypoints between a start and an end depot.

    ``dist`` is (n+2)x(n+2): index 0 the start depot, indices 1..n the
    waypoints, index n+1 the end depot.  Returns waypoint indices (1..n) in
    visiting order.  Exact Held-Karp up to HELD_KARP_LIMIT waypoints, then
    nearest-neighbor with 2-opt refinement.
    """
    n = len(dist) - 2
    if n <= 0:
        return []
    if n == 1:
        return [1]
    if n <= HELD_KARP_LIMIT:
        return _held_karp(dist, n)
    return _two_opt(dist, _nearest_neighbor(dist, n))


def tour_length(dist: list[list[float]], order: list[int]) -> float:
    n = len(dist) - 2
    seq = [0] + list(order) + [n + 1]
    return sum(dist[a][b] for a, b in zip(seq, seq[1:]))


def _held_karp(dist: list[list[float]], n: int) -> list[int]:
    # dp[(mask, last)] = (cost, parent); waypoints are 1..n, bit k-1 <-> waypoint k
    dp: dict[tuple[int, int], tuple[float, int]] = {}
    for k in range(1, n + 1):
        dp[(1 << (k - 1), k)] = (dist[0][k], 0)
    for mask in range(1, 1 << n):
        if mask & (mask - 1) == 0:
            continue
        for last in range(1, n + 1):
            bit = 1 << (last - 1)
            if not mask & bit:
                continue
            prev_mask = mask ^ bit
            best: tuple[float, int] | None = None
            for prev in range(1, n + 1):
                if not prev_mask & (1 << (prev - 1)):
                    continue
                entry = dp.get((prev_mask, prev))
                if entry is None:
                    continue
                cand = (entry[0] + dist[prev][last], prev)
                if best is None or cand < best:
                    best = cand
            if best is not None:
                dp[(mask, last)] = best
    full = (1 << n) - 1
    best_last: tuple[float, int] | None = None
    for last in range(1, n + 1):
        entry = dp.get((full, last))
        if entry is None:
            continue
        cand = (entry[0] + dist[last][n + 1], last)
        if best_last is None or cand < best_last:
            best_last = cand
    order = []
    mask, last = full, best_last[1]
    while last != 0:
        order.append(last)
        cost, prev = dp[(mask, last)]
        mask ^= 1 << (last - 1)
        last = prev
    order.reverse()
    return order


def _nearest_neighbor(dist: list[list[float]], n: int) -> list[int]:
    left = set(range(1, n + 1))
    order = []
    cur = 0
    while left:
        nxt = min(left, key=lambda k: (dist[cur][k], k))
        order.append(nxt)
        left.remove(nxt)
        cur = nxt
    return order


def _two_opt(dist: list[list[float]], order: list[int]) -> list[int]:
    seq = [0] + list(order) + [len(dist) - 1]
    improved = True
    while improved:
        improved = False
        for i in range(1, len(seq) - 2):
            for j in range(i + 1, len(seq) - 1):
                before = dist[seq[i - 1]][seq[i]] + dist[seq[j]][seq[j + 1]]
                after = dist[seq[i - 1]][seq[j]] + dist[seq[i]][seq[j + 1]]
                if after < before - 1e-12:
                    seq[i : j + 1] = reversed(seq[i : j + 1])
                    improved = True
    return seq[1:-1]


def brute_force_tsp(dist: list[list[float]]) -> tuple[float, list[int]]:
    """Exhaustive oracle for small instances."""
    n = len(dist) - 2
    best = (math.inf, [])
    for perm in permutations(range(1, n + 1)):
        length = tour_length(dist, list(perm))
        if length < best[0] - 1e-12:
            best = (length, list(perm))
    return best


# ---------------------------------------------------------------------------
# Linear bottleneck assignment

def bottleneck_assignment(costs: list[list[float]]) -> tuple[list[int], float] | None:
    """Injective task->agent assignment minimizing the maximum cost.

    ``costs[t][a]`` is the cost of agent a serving task t; rows must not
    outnumber columns.  Returns (agent index per task, bottleneck value) or
    None when some task has no finite-cost agent.  Among optimal assignments
    the lexicographically smallest agent vector is returned.
    """
    n_tasks = len(costs)
    if n_tasks == 0:
        return [], 0.0
    n_agents = len(costs[0])
    if n_tasks > n_agents:
        return None
    finite = sorted({c for row in costs for c in row if math.isfinite(c)})
    if not finite:
        return None
    lo, hi = 0, len(finite) - 1
    if not _feasible(costs, finite[hi]):
        return None
    while lo < hi:
        mid = (lo + hi) // 2
        if _feasible(costs, finite[mid]):
            hi = mid
        else:
            lo = mid + 1
    bound = finite[lo]
    assignment = _lex_smallest(costs, bound)
    return assignment, bound


def _feasible(costs: list[list[float]], bound: float, fixed: dict[int, int] | None = None) -> bool:
    """Bipartite matching feasibility with all chosen costs <= bound.

    ``fixed`` pins task->agent pairs that may not be displaced.
    """
    n_tasks, n_agents = len(costs), len(costs[0])
    fixed = fixed or {}
    match_agent: dict[int, int] = {a: t for t, a in fixed.items()}

    def augment(t: int, seen: set[int]) -> bool:
        for a in range(n_agents):
            if a in seen or costs[t][a] > bound + 1e-12:
                continue
            seen.add(a)
            holder = match_agent.get(a)
            if holder is None:
                match_agent[a] = t
                return True
            if holder not in fixed and augment(holder, seen):
                match_agent[a] = t
                return True
        return False

    for t in range(n_tasks):
        if t in fixed:
            continue
        if not augment(t, set()):
            return False
    return True


def _lex_smallest(costs: list[list[float]], bound: float) -> list[int]:
    """Fix tasks in order to the smallest agent index keeping the bound feasible."""
    n_agents = len(costs[0])
    fixed: dict[int, int] = {}
    for t in range(len(costs)):
        for a in range(n_agents):
            if a in fixed.values() or costs[t][a] > bound + 1e-12:
                continue
            trial = dict(fixed)
            trial[t] = a
            if _feasible(costs, bound, trial):
                fixed[t] = a
                break
        else:
            raise RuntimeError("bound certified feasible but no extension found")
    return [fixed[t] for t in range(len(costs))]


def brute_force_bottleneck(costs: list[list[float]]) -> float | None:
    """Exhaustive oracle over all injective assignments."""
    n_tasks = len(costs)
    n_agents = len(costs[0]) if costs else 0
    best = math.inf
    for perm in permutations(range(n_agents), n_tasks):
        worst = max(costs[t][perm[t]] for t in range(n_tasks))
        best = min(best, worst)
    return None if math.isinf(best) else best
