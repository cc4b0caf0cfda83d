"""Failure detection through bounded waiting and ring-repair recovery."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .world import Cell


class WaitRole(str, Enum):
    PREDECESSOR = "predecessor"  # waiting for one's data-flow successor
    SUCCESSOR = "successor"      # waiting for one's data-flow predecessor


@dataclass
class WaitState:
    """A robot holding position at an agreed event, watching for its peer.

    The data-flow predecessor gives up after T-max; the successor-side
    detector waits the longer T+max so a redirected predecessor from the
    first failure case can still make contact.
    """

    robot: int
    expected_peer: int
    location: Cell
    since: int        # max(event time, own arrival)
    bound: int
    role: WaitRole

    def to_dict(self) -> dict:
        return {
            "robot": self.robot,
            "peer": self.expected_peer,
            "p": list(self.location),
            "since": self.since,
            "bound": self.bound,
            "role": self.role.value,
        }


def wait_bound(role: WaitRole, t_plus_max: int, t_minus_max: int) -> int:
    if t_plus_max <= t_minus_max:
        raise ValueError("T+max must exceed T-max")
    return t_minus_max if role == WaitRole.PREDECESSOR else t_plus_max


def detect_failure(wait: WaitState, now: int) -> bool:
    """True once the waiting bound is strictly exceeded."""
    return now - wait.since > wait.bound


@dataclass
class RecoveryAction:
    """What the detector does after declaring its peer failed.

    Case one (detector is the failed robot's ring predecessor): go straight to
    the failed robot's next known meeting and pair with the successor there.
    Case two (detector is the successor): pick a local rendezvous point and
    push it around the ring until the predecessor redirects to it.
    """

    case: str                    # "predecessor-wait" | "successor-wait"
    failed: int
    detector: int
    redirect_to: Cell | None     # case one: location of the failed robot's next meeting
    redirect_time: int | None
    rendezvous: Cell | None      # case two: detector-chosen meeting point
    new_partner: int             # the surviving robot the detector will pair with
