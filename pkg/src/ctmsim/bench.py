"""Benchmark harness: speed tables, fundamental-diagram validation,
controller evaluation, and replay recording."""

from __future__ import annotations

import io
import json
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels as K
from .controllers import make_controller, scenario_controller
from .engine import Engine, EngineConfig
from .network import (DEFAULT_CAPACITY, DEFAULT_FREE_FLOW_SPEED,
                      DEFAULT_JAM_DENSITY, DEFAULT_WAVE_SPEED,
                      LinkSpec, NetworkSpec, NodeSpec, compile_network)
from .replay import ReplayWriter, frame_message, geometry_message
from .scenarios import TABLE_SCENARIOS, make as make_scenario


def run_controlled(engine: Engine, controller, n_steps: int) -> np.ndarray:
    """Advance with a controller, batching when its plan is time-only."""
    if controller.schedulable:
        schedule = controller.schedule(n_steps, engine.clock, engine.dt)
        return engine.run(n_steps, requests=schedule)
    return engine.run(n_steps, controller=controller)


# ---------------------------------------------------------------------------
# speed
# ---------------------------------------------------------------------------

def cmd_speed(scenarios=None, steps: int = 10_000) -> list:
    """Wall-time the engine under FixedTime; one result row per scenario."""
    names = list(scenarios) if scenarios else list(TABLE_SCENARIOS)
    rows = []
    for name in names:
        sd = make_scenario(name)
        net = sd.compile()
        rates = sd.origin_rate_vector(net)
        ctrl = make_controller("fixed", net)
        warm = Engine(net, rates, EngineConfig())
        run_controlled(warm, ctrl, 50)            # JIT warm-up, uncounted

        eng = Engine(net, rates, EngineConfig())
        schedule = ctrl.schedule(steps, 0.0, net.dt)
        t0 = time.perf_counter()
        eng.run(steps, requests=schedule)
        wall = time.perf_counter() - t0
        sps = steps / wall
        rows.append({
            "scenario": name, "intersections": int(net.n_sig),
            "cells": int(net.n_cells), "wall_s": round(wall, 4),
            "steps_per_s": round(sps, 1), "speedup": round(sps * net.dt, 1),
        })
    return rows


# ---------------------------------------------------------------------------
# fd
# ---------------------------------------------------------------------------

FD_CELLS = 30
FD_WARMUP = 2000
FD_MEASURE = 1000


def _fd_link_network(lanes: int = 1) -> NetworkSpec:
    length = FD_CELLS * DEFAULT_FREE_FLOW_SPEED
    return NetworkSpec(
        nodes=[NodeSpec("a", (0.0, 0.0)), NodeSpec("b", (length, 0.0))],
        links=[LinkSpec("pipe", "a", "b", length, lanes=lanes,
                        is_origin=True, is_sink=True)],
        movements=[], dt=1.0, metadata={"name": "fd-pipe"})


@dataclass
class FDResult:
    points: list           # (density, flow, branch)
    r2_free: float
    r2_congested: float
    slope_free: float
    slope_congested: float
    critical_density: float
    critical_flow: float
    wall_s: float


def cmd_fd(levels: int = 120) -> FDResult:
    """Steady-state flow at demand levels from zero to twice capacity.

    Free-flow points come from metered inflow on an open link; congested
    points from saturating the link while throttling the sink, which forces
    queuing at the corresponding congested-branch density.
    """
    if levels < 2:
        raise ValueError("need at least 2 demand levels")
    t0 = time.perf_counter()
    net = compile_network(_fd_link_network())
    Q = DEFAULT_CAPACITY
    mid = FD_CELLS // 2
    points = []
    for rate in np.linspace(0.0, 2.0 * Q, levels):
        congested = rate > Q
        inflow = Q if congested else rate
        sink_cap = (2.0 * Q - rate) if congested else Q
        eng = Engine(net, [inflow], EngineConfig(),
                     sink_caps=[max(sink_cap, 0.0)])
        eng.probe_cell = mid
        eng.run(FD_WARMUP)
        rows = eng.run(FD_MEASURE)
        k = float(eng.density[mid])
        q = float(rows[:, K.M_PROBE].mean() / net.dt)
        points.append((k, q, "congested" if congested else "free"))

    def fit(branch):
        ks = np.array([p[0] for p in points if p[2] == branch])
        qs = np.array([p[1] for p in points if p[2] == branch])
        slope, intercept = np.polyfit(ks, qs, 1)
        pred = slope * ks + intercept
        ss_res = float(np.sum((qs - pred) ** 2))
        ss_tot = float(np.sum((qs - qs.mean()) ** 2))
        r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
        return slope, r2

    slope_free, r2_free = fit("free")
    slope_cong, r2_cong = fit("congested")
    free_pts = [p for p in points if p[2] == "free"]
    kc, qc, _ = max(free_pts, key=lambda p: p[1])
    return FDResult(points, r2_free, r2_cong, slope_free, slope_cong,
                    kc, qc, time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

def evaluate(scenario: str, controller: str, seconds: int = 3600,
             seeds=(0,), mesoscopic: bool = False,
             lost_time: Optional[float] = None, **controller_overrides) -> list:
    """Run one (scenario, controller) cell across seeds; one row per seed."""
    sd = make_scenario(scenario)
    net = sd.compile()
    rates = sd.origin_rate_vector(net)
    tau = lost_time if lost_time is not None else (2.0 if mesoscopic else 0.0)
    steps = int(round(seconds / net.dt))
    rows = []
    for seed in sorted(int(s) for s in seeds):
        eng = Engine(net, rates, EngineConfig(
            lost_time=tau, stochastic=mesoscopic, seed=seed))
        ctrl = scenario_controller(controller, sd, net, lost_time=tau,
                                   **controller_overrides)
        t0 = time.perf_counter()
        metrics = run_controlled(eng, ctrl, steps)
        wall = time.perf_counter() - t0
        exited = eng.cumulative_exited
        rows.append({
            "scenario": scenario, "controller": controller, "seed": seed,
            "throughput": round(exited, 2),
            "delay": round(float(metrics[:, K.M_DELAY].sum()) / max(exited, 1e-9), 3),
            "queue": round(float(metrics[:, K.M_QUEUE].mean()), 2),
            "wall_s": round(wall, 4),
            "steps_per_s": round(steps / wall, 1),
        })
    return rows


def summarize(rows: list) -> dict:
    out = {}
    for key in ("throughput", "delay", "queue"):
        vals = np.array([r[key] for r in rows], dtype=float)
        out[key] = {"mean": float(vals.mean()), "std": float(vals.std())}
    return out


# ---------------------------------------------------------------------------
# record
# ---------------------------------------------------------------------------

def cmd_record(scenario: str, controller: str, seconds: int, out,
               mesoscopic: bool = False, seed: int = 0,
               lost_time: Optional[float] = None) -> dict:
    """Record a run as a replay file: geometry header plus one frame/step."""
    sd = make_scenario(scenario)
    net = sd.compile()
    rates = sd.origin_rate_vector(net)
    tau = lost_time if lost_time is not None else (2.0 if mesoscopic else 0.0)
    eng = Engine(net, rates, EngineConfig(
        lost_time=tau, stochastic=mesoscopic, seed=seed))
    ctrl = scenario_controller(controller, sd, net, lost_time=tau)
    steps = int(round(seconds / net.dt))
    header = geometry_message(net, scenario, mode="replay",
                              controller=controller, seed=seed,
                              mesoscopic=mesoscopic)
    delay_cum = 0.0
    with ReplayWriter(out, header) as writer:
        for _ in range(steps):
            req = ctrl.decide(eng)
            rows = eng.run(1, requests=req)
            delay_cum += float(rows[0, K.M_DELAY])
            den = rows[0, K.M_SPEED_DEN]
            speed = float(rows[0, K.M_SPEED_NUM] / den) if den > 0 else 0.0
            writer.write_frame(frame_message(
                eng, eng.cumulative_exited, delay_cum, speed))
    return {"path": str(out), "frames": steps, "scenario": scenario,
            "controller": controller}


# ---------------------------------------------------------------------------
# formatting
# ---------------------------------------------------------------------------

EVAL_COLUMNS = ("scenario", "controller", "seed", "throughput", "delay",
                "queue", "wall_s", "steps_per_s")
SPEED_COLUMNS = ("scenario", "intersections", "cells", "wall_s",
                 "steps_per_s", "speedup")


def to_csv(rows: list, columns) -> str:
    buf = io.StringIO()
    buf.write(",".join(columns) + "\n")
    for r in rows:
        buf.write(",".join(str(r[c]) for c in columns) + "\n")
    return buf.getvalue()


def to_table(rows: list, columns) -> str:
    widths = [max(len(c), *(len(str(r[c])) for r in rows)) if rows else len(c)
              for c in columns]
    lines = ["  ".join(c.ljust(w) for c, w in zip(columns, widths))]
    for r in rows:
        lines.append("  ".join(str(r[c]).ljust(w)
                               for c, w in zip(columns, widths)))
    return "\n".join(lines)


def format_rows(rows: list, columns, fmt: str) -> str:
    if fmt == "csv":
        return to_csv(rows, columns)
    if fmt == "json":
        return json.dumps(rows, indent=2)
    return to_table(rows, columns)
