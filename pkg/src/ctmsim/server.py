"""Dashboard server: live or replayed simulation streamed over a WebSocket.

One simulation session per server; any number of clients.  The session loop
is a single asyncio task, so command application is naturally serialized at
step boundaries: steering can never corrupt mid-step state.  Controller
hot-swaps latch until the next decision boundary; scenario switches and
resets rebuild the state before the following step.
"""

from __future__ import annotations

import asyncio
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.responses import HTMLResponse
from fastapi.staticfiles import StaticFiles

from . import _kernels as K
from .controllers import CONTROLLER_NAMES, canonical_controller_name, scenario_controller
from .engine import Engine, EngineConfig
from .replay import (PROTOCOL_VERSION, frame_message, geometry_message,
                     read_replay)
from .scenarios import TABLE_SCENARIOS, make as make_scenario

MAX_SPEED = 1000.0
TARGET_FPS = 20.0


@dataclass
class ServeConfig:
    scenario: str = "single-intersection-v0"
    controller: str = "fixed"
    replay: Optional[str] = None
    mesoscopic: bool = False
    lost_time: Optional[float] = None
    seed: int = 0
    speed: float = 1.0


def _ack(cmd: str, applied_at_t: float) -> dict:
    return {"v": PROTOCOL_VERSION, "kind": "ack", "ok": True, "cmd": cmd,
            "applied_at_t": applied_at_t}


def _error(message: str) -> dict:
    return {"v": PROTOCOL_VERSION, "kind": "error", "message": message}


class BaseSession:
    def __init__(self):
        self.clients: list = []
        self.paused = False
        self.speed = 1.0
        self._running = True

    def attach(self) -> asyncio.Queue:
        q: asyncio.Queue = asyncio.Queue(maxsize=4096)
        self.clients.append(q)
        return q

    def detach(self, q) -> None:
        if q in self.clients:
            self.clients.remove(q)

    def broadcast(self, msg: dict) -> None:
        for q in self.clients:
            try:
                q.put_nowait(msg)
            except asyncio.QueueFull:
                # Slow client: drop the frame for it, never stall the sim.
                pass

    def stop(self) -> None:
        self._running = False

    def _set_speed(self, value) -> dict:
        try:
            speed = float(value)
        except (TypeError, ValueError):
            return _error("set_speed requires a numeric multiplier")
        if not (0.0 < speed <= MAX_SPEED):
            return _error(f"speed multiplier must be in (0, {MAX_SPEED:g}]")
        self.speed = speed
        return _ack("set_speed", self.now_t())

    def now_t(self) -> float:
        raise NotImplementedError


class LiveSession(BaseSession):
    """Runs the engine in wall-clock pacing and applies steering commands."""

    def __init__(self, config: ServeConfig):
        super().__init__()
        self.config = config
        self.speed = config.speed
        self.scenario_name = config.scenario
        self.controller_name = canonical_controller_name(config.controller)
        self.pending_controller: Optional[str] = None
        self._build(config.scenario, self.controller_name, config.seed)

    def _build(self, scenario_name: str, controller_name: str, seed: int):
        self.scenario = make_scenario(scenario_name)
        self.scenario_name = scenario_name
        self.net = self.scenario.compile()
        tau = (self.config.lost_time if self.config.lost_time is not None
               else (2.0 if self.config.mesoscopic else 0.0))
        self.tau = tau
        self.engine = Engine(self.net, self.scenario.origin_rate_vector(self.net),
                             EngineConfig(lost_time=tau,
                                          stochastic=self.config.mesoscopic,
                                          seed=seed))
        self.controller = scenario_controller(
            controller_name, self.scenario, self.net, lost_time=tau)
        self.controller_name = controller_name
        self.k = float(self.scenario.decision_interval)
        self.delay_cum = 0.0

    def now_t(self) -> float:
        return self.engine.clock

    def geometry(self) -> dict:
        return geometry_message(
            self.net, self.scenario_name, mode="live",
            controllers=list(CONTROLLER_NAMES),
            scenarios=list(TABLE_SCENARIOS),
            controller=self.controller_name,
            speed=self.speed, paused=self.paused)

    def handle_command(self, msg: dict) -> dict:
        cmd = msg.get("cmd")
        t = self.engine.clock
        if cmd == "pause":
            self.paused = True
            return _ack("pause", t)
        if cmd == "resume":
            self.paused = False
            return _ack("resume", t)
        if cmd == "set_speed":
            return self._set_speed(msg.get("value"))
        if cmd == "set_controller":
            name = str(msg.get("value", ""))
            try:
                canonical = canonical_controller_name(name)
            except ValueError as e:
                return _error(str(e))
            self.pending_controller = canonical
            return _ack("set_controller", self._next_decision_boundary())
        if cmd == "set_scenario":
            name = str(msg.get("value", ""))
            try:
                self._build(name, self.controller_name, self.config.seed)
            except KeyError as e:
                return _error(str(e.args[0]))
            self.delay_cum = 0.0
            self.broadcast(self.geometry())
            return _ack("set_scenario", 0.0)
        if cmd == "reset":
            seed = int(msg.get("value", self.config.seed) or 0)
            self.engine.reset(seed)
            self.controller.reset()
            self.delay_cum = 0.0
            return _ack("reset", 0.0)
        return _error(f"unknown command '{cmd}'")

    def _next_decision_boundary(self) -> float:
        t = self.engine.clock
        k = self.k
        periods = int(t / k)
        boundary = periods * k
        return boundary if abs(boundary - t) < 1e-9 else (periods + 1) * k

    def _maybe_swap_controller(self):
        if self.pending_controller is None:
            return
        r = self.engine.clock % self.k
        if r < 1e-9 or self.k - r < 1e-9:
            self.controller = scenario_controller(
                self.pending_controller, self.scenario, self.net,
                lost_time=self.tau)
            self.controller_name = self.pending_controller
            self.pending_controller = None

    def step_once(self) -> dict:
        self._maybe_swap_controller()
        req = self.controller.decide(self.engine)
        rows = self.engine.run(1, requests=req)
        self.delay_cum += float(rows[0, K.M_DELAY])
        den = rows[0, K.M_SPEED_DEN]
        speed = float(rows[0, K.M_SPEED_NUM] / den) if den > 0 else 0.0
        return frame_message(self.engine, self.engine.cumulative_exited,
                             self.delay_cum, speed)

    async def loop(self):
        next_wall = time.perf_counter()
        emitted = 0
        while self._running:
            if self.paused:
                await asyncio.sleep(0.02)
                next_wall = time.perf_counter()
                continue
            frame = self.step_once()
            # Frame-skipping caps wall-clock frame rate; display only.
            steps_per_s = self.speed / self.net.dt
            emit_every = max(1, int(steps_per_s / TARGET_FPS))
            emitted += 1
            if emitted % emit_every == 0:
                self.broadcast(frame)
            next_wall += self.net.dt / self.speed
            delay = next_wall - time.perf_counter()
            if delay > 0:
                await asyncio.sleep(delay)
            else:
                if delay < -1.0:
                    next_wall = time.perf_counter()
                await asyncio.sleep(0)


class ReplaySession(BaseSession):
    """Streams a recorded file; only pause/resume/speed are applicable."""

    def __init__(self, path, speed: float = 1.0):
        super().__init__()
        self.header, self.frames = read_replay(path)
        self.speed = speed
        self.index = 0
        self.dt = float(self.header.get("dt", 1.0))

    def now_t(self) -> float:
        if self.index < len(self.frames):
            return float(self.frames[self.index].get("t", 0.0))
        return float(self.frames[-1]["t"]) if self.frames else 0.0

    def geometry(self) -> dict:
        msg = dict(self.header)
        msg["mode"] = "replay"
        msg["speed"] = self.speed
        msg["paused"] = self.paused
        msg["total_frames"] = len(self.frames)
        return msg

    def handle_command(self, msg: dict) -> dict:
        cmd = msg.get("cmd")
        if cmd == "pause":
            self.paused = True
            return _ack("pause", self.now_t())
        if cmd == "resume":
            self.paused = False
            return _ack("resume", self.now_t())
        if cmd == "set_speed":
            return self._set_speed(msg.get("value"))
        if cmd in ("set_controller", "set_scenario", "reset"):
            return _error(f"'{cmd}' is not available in replay mode")
        return _error(f"unknown command '{cmd}'")

    async def loop(self):
        next_wall = time.perf_counter()
        while self._running and self.index < len(self.frames):
            if self.paused or not self.clients:
                await asyncio.sleep(0.02)
                next_wall = time.perf_counter()
                continue
            self.broadcast(self.frames[self.index])
            self.index += 1
            next_wall += self.dt / self.speed
            delay = next_wall - time.perf_counter()
            await asyncio.sleep(max(delay, 0))
        if self._running:
            self.broadcast({"v": PROTOCOL_VERSION, "kind": "end",
                            "t": self.now_t()})


_FALLBACK_PAGE = """<!doctype html>
<html><head><title>ctmsim dashboard</title></head>
<body><h1>ctmsim</h1>
<p>The dashboard frontend is not built. Connect to <code>/ws</code> for the
frame stream, or build the assets under <code>frontend/</code>.</p>
</body></html>"""


def create_app(config: ServeConfig) -> FastAPI:
    app = FastAPI(title="ctmsim dashboard")
    if config.replay:
        session: BaseSession = ReplaySession(config.replay, config.speed)
    else:
        session = LiveSession(config)
    app.state.session = session

    @app.on_event("startup")
    async def _start():
        app.state.loop_task = asyncio.create_task(session.loop())

    @app.on_event("shutdown")
    async def _stop():
        session.stop()
        task = getattr(app.state, "loop_task", None)
        if task:
            task.cancel()

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket):
        await ws.accept()
        queue = session.attach()
        await ws.send_json(session.geometry())

        async def pump():
            while True:
                msg = await queue.get()
                await ws.send_json(msg)

        sender = asyncio.create_task(pump())
        try:
            while True:
                msg = await ws.receive_json()
                if msg.get("kind") == "command":
                    await queue.put(session.handle_command(msg))
                else:
                    await queue.put(_error("expected a command message"))
        except WebSocketDisconnect:
            pass
        finally:
            sender.cancel()
            session.detach(queue)

    static_dir = Path(__file__).parent / "static"
    if static_dir.is_dir() and (static_dir / "index.html").exists():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True),
                  name="static")
    else:
        @app.get("/")
        async def index():
            return HTMLResponse(_FALLBACK_PAGE)

    return app


def serve(config: ServeConfig, host: str = "127.0.0.1", port: int = 8000):
    import uvicorn
    uvicorn.run(create_app(config), host=host, port=port, log_level="warning")
