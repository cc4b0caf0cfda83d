"""Live service boundary between the simulation kernel and operator consoles.

One WebSocket session per operator; each session sees only what its operator
knows.  Commands enter an ordered queue drained at tick boundaries; snapshots
stream once per simulated tick.
"""

from __future__ import annotations

import asyncio
import json
from pathlib import Path

from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from .. import chain as chain_mod
from ..commmodel import quality
from ..engine import Sim, UNKNOWN, FREE
from ..scenario import Scenario
from .models import (
    WIRE_VERSION,
    Ack,
    ChainState,
    ErrorMsg,
    FeasibleRegion,
    Snapshot,
)

HEARTBEAT_S = 2.0

OPERATOR_KINDS = {"xi1", "xi2", "xi3", "xi4", "xi7", "migrate", "disband", "retarget"}


class Session:
    def __init__(self, team: int, ws: WebSocket):
        self.team = team
        self.ws = ws
        self.out_seq = 0
        self.last_in_seq = 0

    def next_seq(self) -> int:
        self.out_seq += 1
        return self.out_seq


class Bridge:
    """Owns the kernel and the per-operator sessions."""

    def __init__(self, sc: Scenario):
        self.sim = Sim(sc)
        self.sessions: dict[int, Session] = {}
        self.pending_acks: list[tuple[int, dict]] = []   # (team, message dict)

    # ---- command side -------------------------------------------------

    def submit(self, team: int, msg: dict) -> dict:
        """Translate one console message into kernel commands; returns the
        ack/error body to send back."""
        kind = msg.get("kind")
        seq = int(msg.get("seq", 0))
        if msg.get("v") != WIRE_VERSION:
            return ErrorMsg(seq=0, of=seq, reason="version-mismatch").model_dump()
        if kind == "teleop":
            ch = self.sim.operators[team].know.chain.value
            if not ch or ch.get("phase") != "active":
                return ErrorMsg(seq=0, of=seq, reason="no-chain").model_dump()
            dest_ok, why = self._teleop_gate(team, int(msg.get("dx", 0)), int(msg.get("dy", 0)))
            if not dest_ok:
                return ErrorMsg(seq=0, of=seq, reason=why).model_dump()
            self.sim.commands.append({
                "issuer": f"operator:{team}", "kind": "teleop",
                "args": {"dx": int(msg.get("dx", 0)), "dy": int(msg.get("dy", 0))},
            })
            return Ack(seq=0, of=seq, status="applied").model_dump()
        if kind == "request_submit":
            rk = msg.get("request_kind")
            if rk not in OPERATOR_KINDS:
                return ErrorMsg(seq=0, of=seq, reason="unauthorized").model_dump()
            self.sim.commands.append({
                "issuer": f"operator:{team}", "kind": rk, "args": msg.get("args", {}),
            })
            # operator-gated kinds land at the next contact with the operator
            return Ack(seq=0, of=seq, status="queued").model_dump()
        return ErrorMsg(seq=0, of=seq, reason="unknown-kind").model_dump()

    def _teleop_gate(self, team: int, dx: int, dy: int) -> tuple[bool, str]:
        op = self.sim.operators[team]
        ch = op.know.chain.value
        target = self.sim.robots[ch["target"]]
        dest = (target.pose[0] + dx, target.pose[1] + dy)
        if not op.grid.in_bounds(dest) or op.grid.at(dest) != FREE:
            return False, "blocked"
        cec = chain_mod.Cec(tuple(tuple(a) for a in ch["cec"]["anchors"]),
                            ch["cec"]["margin"])
        best = max(quality(tuple(a), dest, op.grid, self.sim.params)
                   for a in cec.anchors[1:])
        if best <= self.sim.params.threshold:
            return False, "connectivity"
        return True, ""

    # ---- snapshot side ------------------------------------------------

    def snapshot(self, team: int, session: Session) -> dict:
        """Everything this operator knows right now, and nothing more."""
        op = self.sim.operators[team]
        grid = op.grid
        chars = {UNKNOWN: "?", FREE: ".", 2: "#"}
        rows = ["".join(chars[int(grid.cells[y, x])] for x in range(grid.width))
                for y in range(grid.height)]
        teammates = {}
        for rid, (as_of, events) in sorted(op.know.plans.items()):
            teammates[str(rid)] = {"as_of": as_of, "events": events}
        requests = [v.value for _rid, v in sorted(op.know.requests.items())
                    if v.value is not None]
        ch = op.know.chain.value
        return Snapshot(
            seq=session.next_seq(),
            tick=self.sim.now,
            team=team,
            width=grid.width,
            height=grid.height,
            rows=rows,
            operator=list(op.pose),
            teammates=teammates,
            ring=list(op.know.ring.value or []),
            requests=requests,
            chain={"phase": ch.get("phase")} if ch else None,
            complete=self.sim.halted == "complete",
        ).model_dump()

    def overlays(self, team: int, session: Session) -> list[dict]:
        out = []
        op = self.sim.operators[team]
        region = self.sim._feasible_region(op)
        out.append(FeasibleRegion(
            seq=session.next_seq(), tick=self.sim.now,
            cells=sorted([list(c) for c in region.cells]),
        ).model_dump())
        ch = op.know.chain.value
        if ch and ch.get("phase") in ("forming", "active"):
            cec = chain_mod.Cec(tuple(tuple(a) for a in ch["cec"]["anchors"]),
                                ch["cec"]["margin"])
            accessible = []
            if ch.get("phase") == "active":
                accessible = sorted(list(c) for c in
                                    chain_mod.accessible_region(cec, op.grid, self.sim.params))
            out.append(ChainState(
                seq=session.next_seq(), tick=self.sim.now,
                phase=ch["phase"],
                anchors=[list(a) for a in cec.anchors],
                relays=list(ch["relays"]),
                target=ch["target"],
                accessible=accessible,
            ).model_dump())
        return out

    def step(self, n: int = 1) -> None:
        for _ in range(n):
            if self.sim.halted is None and self.sim.now < self.sim.sc.tick_limit:
                self.sim.step()
                if self.sim.is_complete():
                    self.sim.halted = "complete"


def create_app(sc: Scenario, ticks_per_second: float = 10.0, autostep: bool = True) -> FastAPI:
    app = FastAPI(title="opfleet bridge")
    bridge = Bridge(sc)
    app.state.bridge = bridge
    app.state.ticks_per_second = ticks_per_second

    @app.get("/healthz")
    def healthz():
        return {"ok": True, "tick": bridge.sim.now, "halted": bridge.sim.halted}

    @app.get("/scenario")
    def scenario():
        return {"name": sc.name, "teams": [t.team_id for t in sc.teams],
                "width": sc.truth.grid.width, "height": sc.truth.grid.height}

    @app.post("/internal/step")
    def internal_step(n: int = 1):
        bridge.step(n)
        return {"tick": bridge.sim.now, "halted": bridge.sim.halted}

    @app.websocket("/ws/operator/{team}")
    async def operator_ws(ws: WebSocket, team: int):
        if team not in bridge.sim.operators:
            await ws.close(code=4404)
            return
        await ws.accept()
        session = Session(team, ws)
        bridge.sessions[team] = session
        last_tick = -1
        try:
            await ws.send_text(json.dumps(bridge.snapshot(team, session)))
            for msg in bridge.overlays(team, session):
                await ws.send_text(json.dumps(msg))
            last_tick = bridge.sim.now
            last_beat = asyncio.get_event_loop().time()
            while True:
                try:
                    raw = await asyncio.wait_for(ws.receive_text(), timeout=0.05)
                    msg = json.loads(raw)
                    reply = bridge.submit(team, msg)
                    reply["seq"] = session.next_seq()
                    await ws.send_text(json.dumps(reply))
                except asyncio.TimeoutError:
                    pass
                if bridge.sim.now != last_tick:
                    last_tick = bridge.sim.now
                    await ws.send_text(json.dumps(bridge.snapshot(team, session)))
                    for m in bridge.overlays(team, session):
                        await ws.send_text(json.dumps(m))
                now = asyncio.get_event_loop().time()
                if now - last_beat >= HEARTBEAT_S:
                    last_beat = now
                    await ws.send_text(json.dumps(
                        {"v": WIRE_VERSION, "kind": "heartbeat",
                         "seq": session.next_seq(), "body": {"tick": bridge.sim.now}}))
        except WebSocketDisconnect:
            pass
        finally:
            bridge.sessions.pop(team, None)

    if autostep:
        @app.on_event("startup")
        async def _pace():
            async def loop():
                period = 1.0 / max(0.1, app.state.ticks_per_second)
                while bridge.sim.halted is None:
                    bridge.step(1)
                    await asyncio.sleep(period)
            app.state._pacer = asyncio.create_task(loop())

    return app


def serve_live(sc: Scenario, host: str, port: int, ticks_per_second: float,
               out_dir: Path) -> int:
    import uvicorn

    app = create_app(sc, ticks_per_second=ticks_per_second, autostep=True)
    uvicorn.run(app, host=host, port=port, log_level="warning")
    bridge: Bridge = app.state.bridge
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "trace.jsonl").write_text(bridge.sim.trace.dump())
    return 0
