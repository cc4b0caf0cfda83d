"""Pydantic wire models for the operator-console bridge.

Messages are single-line JSON with a protocol version tag; every
request_submit is answered by exactly one ack or error carrying its seq.
"""

from __future__ import annotations

from typing import Any, Literal, Optional

from pydantic import BaseModel, Field

WIRE_VERSION = 1


class WireMessage(BaseModel):
    v: int = WIRE_VERSION
    kind: str
    seq: int
    body: dict[str, Any] = Field(default_factory=dict)


class RequestSubmit(BaseModel):
    v: int = WIRE_VERSION
    kind: Literal["request_submit"] = "request_submit"
    seq: int
    request_kind: str            # xi1..xi7 | migrate | disband | retarget
    args: dict[str, Any] = Field(default_factory=dict)


class Teleop(BaseModel):
    v: int = WIRE_VERSION
    kind: Literal["teleop"] = "teleop"
    seq: int
    dx: int = 0
    dy: int = 0


class Ack(BaseModel):
    v: int = WIRE_VERSION
    kind: Literal["ack"] = "ack"
    seq: int
    of: int                      # client seq being acknowledged
    status: str                  # queued | accepted | applied
    body: dict[str, Any] = Field(default_factory=dict)


class ErrorMsg(BaseModel):
    v: int = WIRE_VERSION
    kind: Literal["error"] = "error"
    seq: int
    of: Optional[int] = None
    reason: str


class Snapshot(BaseModel):
    v: int = WIRE_VERSION
    kind: Literal["snapshot"] = "snapshot"
    seq: int
    tick: int
    team: int
    width: int
    height: int
    rows: list[str]              # operator-known map: '?' unknown, '.' free, '#' wall
    operator: list[int]
    teammates: dict[str, Any]    # rid -> {as_of, events, mode?}
    ring: list[int]
    requests: list[dict]
    chain: Optional[dict] = None
    complete: bool = False


class FeasibleRegion(BaseModel):
    v: int = WIRE_VERSION
    kind: Literal["feasible_region"] = "feasible_region"
    seq: int
    tick: int
    cells: list[list[int]]


class ChainState(BaseModel):
    v: int = WIRE_VERSION
    kind: Literal["chain_state"] = "chain_state"
    seq: int
    tick: int
    phase: str
    anchors: list[list[int]]
    relays: list[int]
    target: Optional[int] = None
    accessible: list[list[int]] = Field(default_factory=list)
