"""Real-time HTTP bridge for the operator UI.

Headless runs execute as fast as possible; with the bridge enabled a pacing
thread advances the virtual clock 1:1 with wall time so a human can operate
the process. All HTTP-triggered work happens under one lock, between pacing
steps, so commands are serialized with kernel turns and determinism inside a
step is preserved.

The historian rewrite endpoint is unauthenticated on purpose: it is the
supervisory-layer attack surface, and every use lands in the ground-truth
event log.
"""
from __future__ import annotations

import json
import threading
import time

from fastapi import FastAPI, HTTPException
from fastapi.responses import StreamingResponse

from .kernel import SECOND
from .scenario import ScenarioConfig, ScheduledAttack, Testbed, _dispatch_attack
from .supervisory import ModeError, QueryError


class Bridge:
    def __init__(self, config: ScenarioConfig | None = None, speed: float = 1.0):
        self.config = config or ScenarioConfig(duration_s=3600)
        self.testbed = Testbed(self.config)
        self.speed = speed
        self.lock = threading.Lock()
        self._stop = threading.Event()
        self._thread = None

    # -- pacing -----------------------------------------------------------

    def start(self):
        self.testbed.start()
        for cmd in self.config.operator:
            self.testbed.kernel.at(
                int(cmd.t_s * SECOND),
                lambda c=cmd: self.testbed.hmi.hmi_command(c.cmd, **c.kwargs),
            )
        for spec in self.config.attacks:
            self.testbed.kernel.at(
                int(spec.t_s * SECOND),
                lambda s=spec: _dispatch_attack(self.testbed, s),
            )
        self._thread = threading.Thread(target=self._pace, daemon=True)
        self._thread.start()

    def stop(self):
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=2)

    def _pace(self):
        t0 = time.monotonic()
        end_us = self.config.duration_us
        while not self._stop.is_set():
            target = int((time.monotonic() - t0) * self.speed * SECOND)
            target = min(target, end_us)
            with self.lock:
                if target > self.testbed.kernel.now_us:
                    self.testbed.kernel.run_until(target)
            if target >= end_us:
                break
            time.sleep(0.005)

    # -- serialized command entry points -----------------------------------

    def command(self, cmd: str, **kwargs):
        with self.lock:
            self.testbed.hmi.hmi_command(cmd, **kwargs)
            return self.testbed.hmi.snapshot_dict()

    def state(self) -> dict:
        with self.lock:
            return self.testbed.hmi.snapshot_dict()

    def historian(self, point: str, t0_us: int = 0, t1_us: int | None = None):
        with self.lock:
            rows = self.testbed.scada.historian_query(point, t0_us, t1_us)
            return [
                {"t_us": r.t_us, "point": r.point, "value": r.value,
                 "quality": r.quality}
                for r in rows
            ]

    def historian_rewrite(self, point: str, value: int, t0_us: int = 0,
                          t1_us: int | None = None) -> int:
        with self.lock:
            return self.testbed.scada.rewrite(point, value, t0_us, t1_us)

    def launch_attack(self, op: str, profile: str, params: dict):
        with self.lock:
            _dispatch_attack(self.testbed, ScheduledAttack(
                self.testbed.kernel.now_us / SECOND, op, profile, params,
            ))
            return {"scheduled": op, "t_us": self.testbed.kernel.now_us}

    def events_since(self, cursor: int):
        with self.lock:
            events = self.testbed.hmi.events
            return events[cursor:], len(events)


def sse_stream(bridge: Bridge, poll_s: float = 0.1):
    """Server-sent events: every new HMI event, else keepalive comments.

    Joins at the tail, so a client only sees events from its connect time on.
    Ends when the bridge shuts down.
    """
    _, cursor = bridge.events_since(0)
    while not bridge._stop.is_set():
        events, cursor = bridge.events_since(cursor)
        for ev in events:
            yield f"data: {json.dumps(ev)}\n\n"
        if not events:
            yield ": keepalive\n\n"
        time.sleep(poll_s)


def create_app(bridge: Bridge) -> FastAPI:
    app = FastAPI(title="icsbed operator bridge")

    @app.get("/api/state")
    def get_state():
        return bridge.state()

    @app.post("/api/order")
    def post_order():
        return bridge.command("place_order")

    @app.post("/api/reset")
    def post_reset():
        return bridge.command("reset")

    @app.post("/api/estop")
    def post_estop():
        return bridge.command("estop")

    @app.post("/api/mode")
    def post_mode(body: dict):
        if "manual" not in body or not isinstance(body["manual"], bool):
            raise HTTPException(422, "body must be {\"manual\": bool}")
        return bridge.command("set_manual", manual=body["manual"])

    @app.post("/api/control")
    def post_control(body: dict):
        motor = body.get("motor")
        direction = body.get("dir")
        if motor not in ("conveyor", "punch") or not isinstance(direction, str):
            raise HTTPException(422, "body must be {\"motor\", \"dir\"}")
        try:
            return bridge.command("manual_motor", motor=motor, direction=direction)
        except ModeError as exc:
            raise HTTPException(409, str(exc)) from exc
        except ValueError as exc:
            raise HTTPException(422, str(exc)) from exc

    @app.get("/api/historian")
    def get_historian(point: str, t0: float = 0.0, t1: float | None = None):
        try:
            return bridge.historian(
                point, int(t0 * SECOND),
                None if t1 is None else int(t1 * SECOND),
            )
        except QueryError as exc:
            raise HTTPException(404, str(exc)) from exc

    @app.post("/api/historian/rewrite")
    def post_rewrite(body: dict):
        point = body.get("point")
        if not isinstance(point, str) or not isinstance(body.get("value"), int):
            raise HTTPException(422, "body must be {\"point\", \"value\"}")
        try:
            changed = bridge.historian_rewrite(point, body["value"])
        except QueryError as exc:
            raise HTTPException(404, str(exc)) from exc
        return {"records_changed": changed}

    @app.post("/api/attack")
    def post_attack(body: dict):
        op = body.get("op")
        profile = body.get("profile", "local")
        params = body.get("params", {})
        if not isinstance(op, str) or profile not in ("local", "remote"):
            raise HTTPException(422, "body must be {\"op\", \"profile\"?, \"params\"?}")
        if op not in ("flood", "mitm_spoof", "sniff", "discover",
                      "unauthorized_write", "tamper_historian", "physical",
                      "hmi_physical"):
            raise HTTPException(422, f"unknown attack op {op!r}")
        try:
            return bridge.launch_attack(op, profile, dict(params))
        except (KeyError, ValueError) as exc:
            raise HTTPException(422, f"bad attack params: {exc}") from exc

    @app.get("/api/events")
    def get_events():
        return StreamingResponse(sse_stream(bridge), media_type="text/event-stream")

    @app.get("/api/summary")
    def get_summary():
        with bridge.lock:
            return bridge.testbed.summary()

    return app


def serve(config: ScenarioConfig, port: int, host: str = "127.0.0.1",
          speed: float = 1.0):
    """Blocking entry point used by the CLI's --bridge-http flag."""
    import uvicorn

    bridge = Bridge(config, speed=speed)
    bridge.start()
    app = create_app(bridge)
    try:
        uvicorn.run(app, host=host, port=port, log_level="warning")
    finally:
        bridge.stop()
