"""Pairwise communication-quality model and the pluggable estimator contract.

Quality is a decibel-like scalar that decays with Euclidean distance and with
every wall cell crossed on the straight segment between two positions.  Any
alternative estimator must be deterministic and symmetric in its endpoints.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Protocol

from .world import Cell, OccGrid, OCCUPIED, UNKNOWN, bresenham


@dataclass(frozen=True)
class CommParams:
    q0: float = 90.0          # quality at zero distance
    alpha: float = 1.0        # attenuation per cell of distance
    beta: float = 15.0        # attenuation per wall cell crossed
    threshold: float = 50.0   # minimum usable quality
    chain_margin: float = 5.0  # extra quality margin required along relay chains

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0 or self.chain_margin < 0:
            raise ValueError("attenuation and margin parameters must be >= 0")
        if self.threshold >= self.q0:
            raise ValueError("threshold must be below zero-distance quality")

    @property
    def open_range(self) -> float:
        """Open-space communication range implied by the attenuation model."""
        return (self.q0 - self.threshold) / self.alpha if self.alpha > 0 else math.inf

    def to_dict(self) -> dict:
        return {
            "q0": self.q0,
            "alpha": self.alpha,
            "beta": self.beta,
            "threshold": self.threshold,
            "chain_margin": self.chain_margin,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CommParams":
        return cls(**{k: float(v) for k, v in d.items()})


class QualityEstimator(Protocol):
    """Pluggable pairwise quality oracle: deterministic and symmetric in the
    two endpoints; unknown_blocks selects planner pessimism vs ground truth."""

    def __call__(self, a: Cell, b: Cell, grid: OccGrid, params: CommParams,
                 unknown_blocks: bool = True) -> float: ...


def wall_count(a: Cell, b: Cell, grid: OccGrid, unknown_blocks: bool = True) -> int:
    """Occupied cells on the Bresenham segment a->b.

    Unknown cells count as walls when predicting quality inside planners;
    ground-truth evaluation passes unknown_blocks=False on a fully known grid.
    The segment is canonicalised so the count is symmetric in (a, b).
    """
    lo, hi = (a, b) if a <= b else (b, a)
    n = 0
    for c in bresenham(lo, hi):
        if not grid.in_bounds(c):
            n += 1
            continue
        s = grid.at(c)
        if s == OCCUPIED or (unknown_blocks and s == UNKNOWN):
            n += 1
    return n


def quality(a: Cell, b: Cell, grid: OccGrid, params: CommParams, unknown_blocks: bool = True) -> float:
    """Attenuation model: q0 - alpha * distance - beta * walls-crossed."""
    d = math.hypot(a[0] - b[0], a[1] - b[1])
    return params.q0 - params.alpha * d - params.beta * wall_count(a, b, grid, unknown_blocks)


def can_communicate(a: Cell, b: Cell, grid: OccGrid, params: CommParams, unknown_blocks: bool = True) -> bool:
    return quality(a, b, grid, params, unknown_blocks) > params.threshold


def make_truth_link_test(grid: OccGrid, params: CommParams) -> Callable[[Cell, Cell], bool]:
    """Ground-truth connectivity predicate used by the simulation kernel."""

    def linked(a: Cell, b: Cell) -> bool:
        return can_communicate(a, b, grid, params, unknown_blocks=False)

    return linked
