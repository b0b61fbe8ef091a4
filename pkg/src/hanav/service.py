"""Live state streaming and operator command ingestion over a websocket.

One scenario runs in a background thread, paced to wall time. Every
control cycle produces one self-contained JSON snapshot; connected
clients receive the latest snapshot and may steer External humans with
velocity commands. The control loop never blocks on the network: clients
read from a latest-value buffer, so a slow consumer just skips frames.
"""

from __future__ import annotations

import asyncio
import json
import math
import threading
import time
from dataclasses import dataclass, field

from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from .core import AgentState
from .costmap import parse_map_text
from .simulator import (
    External,
    RunTrace,
    ScenarioSpec,
    run_scenario,
)

SCHEMA_VERSION = 1


class _ServiceStopped(Exception):
    """Raised inside the control loop to abandon a stopped run."""


def scenario_message(spec: ScenarioSpec) -> dict:
    """Static scenario geometry for clients: the map, the goal, and which
    humans accept steering commands."""
    grid = parse_map_text(spec.map_text)
    rows = [
        "".join("#" if c else "." for c in row) for row in grid.occupied
    ]
    return {
        "v": SCHEMA_VERSION,
        "type": "scenario",
        "name": spec.name,
        "map": {
            "resolution": grid.resolution,
            "origin": [grid.origin.x, grid.origin.y],
            "width": grid.width,
            "height": grid.height,
            "rows": rows,
        },
        "robot_start": [spec.robot_start.x, spec.robot_start.y],
        "robot_goal": [spec.robot_goal.x, spec.robot_goal.y],
        "external_humans": [
            h.id for h in spec.humans if h.controller == "external"
        ],
    }


def _agent_dict(state: AgentState, activity: str | None) -> dict:
    return {
        "id": state.id,
        "kind": state.kind.value,
        "x": state.pose.x,
        "y": state.pose.y,
        "theta": state.pose.theta,
        "vx": state.velocity.linear_x,
        "vy": state.velocity.linear_y,
        "omega": state.velocity.angular,
        "radius": state.radius,
        "activity": activity,
    }


def _band_dict(band, agent_id: str | None = None) -> dict:
    out = {
        "poses": [[float(x), float(y), float(th)] for x, y, th in band.poses],
        "times": [float(t) for t in band.timestamps()],
    }
    if agent_id is not None:
        out["id"] = agent_id
    return out


def snapshot_message(world, session, path_length: float) -> dict:
    """Full world/planner state as one self-contained message."""
    activities = {}
    snap = session.last_snapshot
    if snap is not None:
        for s, a, _ in snap.visible_humans:
            activities[s.id] = a.value.value
    agents = [_agent_dict(world.robot, None)]
    hr = {}
    for hid in sorted(world.humans):
        h = world.humans[hid]
        agents.append(_agent_dict(h, activities.get(hid)))
        hr[hid] = math.hypot(
            h.pose.x - world.robot.pose.x, h.pose.y - world.robot.pose.y
        )
    bands: dict = {"robot": None, "humans": []}
    if session.bands is not None:
        bands["robot"] = _band_dict(session.bands.robot_band)
        bands["humans"] = [
            _band_dict(b, b.agent_id) for b in session.bands.human_bands
        ]
    return {
        "v": SCHEMA_VERSION,
        "type": "snapshot",
        "t": world.t,
        "mode": session.last_mode.value,
        "backoff_phase": (
            session.controller.backoff_phase.value
            if session.controller.backoff_phase
            else ""
        ),
        "agents": agents,
        "bands": bands,
        "metrics": {"path_length": path_length, "hr_distances": hr},
        "transitions": session.controller.transition_log[-5:],
    }


def serialize(message: dict) -> str:
    return json.dumps(message, separators=(",", ":"), sort_keys=True)


def parse(text: str) -> dict:
    return json.loads(text)


@dataclass
class ScenarioService:
    """Owns the simulation thread and the latest-snapshot buffer."""

    spec: ScenarioSpec
    seed: int | None = None
    realtime: float = 1.0  # sim seconds per wall second; 0 = free-running
    _mailboxes: dict = field(default_factory=dict)
    _latest: tuple = (0, None)  # (sequence, serialized snapshot)
    _lock: threading.Lock = field(default_factory=threading.Lock)
    _thread: threading.Thread | None = None
    _trace: RunTrace | None = None
    _stop_requested: bool = False

    def start(self) -> None:
        self._thread = threading.Thread(target=self._run, daemon=True)
        self._thread.start()

    def stop(self) -> None:
        """Abort the simulation thread at its next control cycle."""
        self._stop_requested = True
        if self._thread is not None:
            self._thread.join(timeout=2.0)

    def _run(self) -> None:
        t0 = time.monotonic()
        seq = 0

        def on_cycle(world, session):
            nonlocal seq
            if self._stop_requested:
                raise _ServiceStopped()
            pl = self._path_length
            if self._last_pose is not None:
                pl += math.hypot(
                    world.robot.pose.x - self._last_pose[0],
                    world.robot.pose.y - self._last_pose[1],
                )
            self._path_length = pl
            self._last_pose = (world.robot.pose.x, world.robot.pose.y)
            msg = serialize(snapshot_message(world, session, pl))
            seq += 1
            with self._lock:
                self._latest = (seq, msg)
            if self.realtime > 0.0:
                target = t0 + world.t / self.realtime
                delay = target - time.monotonic()
                if delay > 0.0:
                    time.sleep(delay)

        self._path_length = 0.0
        self._last_pose = None
        self._trace = run_scenario(
            self.spec,
            seed=self.seed,
            mailboxes=self._mailboxes,
            on_cycle=on_cycle,
        )

    def latest(self) -> tuple:
        with self._lock:
            return self._latest

    def running(self) -> bool:
        return self._thread is not None and self._thread.is_alive()

    def ingest_human_command(self, msg: dict, t: float) -> dict:
        """Apply a steering command to an External human; returns the ack."""
        hid = msg.get("id")
        box = self._mailboxes.get(hid)
        if not isinstance(box, External):
            return {
                "v": SCHEMA_VERSION,
                "type": "error",
                "error": f"human {hid!r} is not externally controlled",
            }
        vx = float(msg.get("vx", 0.0))
        vy = float(msg.get("vy", 0.0))
        applied = box.submit(vx, vy, t)
        return {
            "v": SCHEMA_VERSION,
            "type": "ack",
            "id": hid,
            "vx": applied.linear_x,
            "vy": applied.linear_y,
            "clamped": (applied.linear_x, applied.linear_y) != (vx, vy),
        }

    @property
    def sim_time(self) -> float:
        _, msg = self.latest()
        return parse(msg)["t"] if msg else 0.0


def create_app(service: ScenarioService) -> FastAPI:
    app = FastAPI()
    app.state.service = service

    @app.on_event("startup")
    def _start():
        if not service.running():
            service.start()

    @app.get("/scenario")
    def scenario():
        return scenario_message(service.spec)

    @app.websocket("/ws")
    async def ws(sock: WebSocket):
        await sock.accept()
        last_seq = -1

        async def sender():
            nonlocal last_seq
            while True:
                seq, msg = service.latest()
                if msg is not None and seq != last_seq:
                    last_seq = seq
                    await sock.send_text(msg)
                await asyncio.sleep(0.02)

        async def receiver():
            while True:
                text = await sock.receive_text()
                try:
                    msg = parse(text)
                except ValueError:
                    await sock.send_text(serialize({
                        "v": SCHEMA_VERSION, "type": "error",
                        "error": "malformed message",
                    }))
                    continue
                if msg.get("type") == "human_command":
                    ack = service.ingest_human_command(msg, service.sim_time)
                    await sock.send_text(serialize(ack))
                else:
                    await sock.send_text(serialize({
                        "v": SCHEMA_VERSION, "type": "error",
                        "error": f"unknown type {msg.get('type')!r}",
                    }))

        send_task = asyncio.ensure_future(sender())
        try:
            await receiver()
        except WebSocketDisconnect:
            pass
        finally:
            send_task.cancel()

    return app
