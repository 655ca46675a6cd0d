"""Rule-based signal controllers.

Every controller is a decision function from observable simulation state to a
per-node phase request; the engine owns all transition mechanics (yellow,
all-red, pending-phase latching).  Controllers are deterministic: identical
(controller state, engine state, clock) always yields identical requests.

Registry names: fixed, webster, sotl, maxpressure, ltmp, effmp, greenwave.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .engine import Engine
from .network import CompiledNetwork, GREEN

CONTROLLER_NAMES = ("fixed", "webster", "sotl", "maxpressure", "ltmp",
                    "effmp", "greenwave")


@dataclass(frozen=True)
class ControllerConfig:
    kind: str = "fixed"
    min_green: float = 5.0
    max_green: float = 60.0
    fixed_split: float = 30.0
    sotl_threshold: float = 5.0   # accumulated vehicle-steps to request green
    sotl_distance: float = 2.0    # detection window, in cells upstream of stop line
    sotl_gap: float = 1.0         # green flow (veh in window) that blocks a cut
    efficiency_gain: float = 1.0  # extra green seconds per vehicle of pressure
    lost_time: float = 0.0        # tau_L of the engine, for switch-cost pricing
    switch_cost_factor: float = 1.0  # scales the seconds->vehicles conversion
    tie_epsilon: float = 0.0      # pressure margin treated as a tie
    webster_discount: float = 1.0  # demand-propagation attenuation per crossing

    def __post_init__(self):
        if self.min_green > self.max_green:
            raise ValueError("min_green must not exceed max_green")
        for f in ("min_green", "max_green", "fixed_split"):
            if getattr(self, f) < 0:
                raise ValueError(f"{f} must be >= 0")


def effective_green_fraction(min_green: float, yellow: float, all_red: float,
                             lost_time: float) -> float:
    """Share of a minimal switch cycle spent at full discharge capacity."""
    return min_green / (min_green + yellow + all_red + lost_time)


def phase_pressures(engine: Engine) -> np.ndarray:
    """Vehicle-count pressure of every (node, phase) row.

    Pressure sums, over the phase's movements, the difference between the
    upstream boundary cell's and the downstream boundary cell's vehicle
    counts: the two cells the intersection flow couples.
    """
    net = engine.net
    nveh = engine.density * net.cell_dx * net.cell_lanes
    per_mov = nveh[net.mov_up] - nveh[net.mov_down]
    if len(net.phase_movs) == 0:
        return np.zeros(0)
    return np.add.reduceat(per_mov[net.phase_movs], net.sig_phase_ptr[:-1])


class Controller:
    """Base class; subclasses implement :meth:`decide`."""

    name = "base"
    schedulable = False

    def __init__(self, net: CompiledNetwork, config: ControllerConfig):
        self.net = net
        self.config = config
        self.diagnostics: list = []

    def reset(self) -> None:
        pass

    def decide(self, engine: Engine) -> np.ndarray:
        raise NotImplementedError


class FixedTime(Controller):
    """Cycles phases on equal wall-clock splits."""

    name = "fixed"
    schedulable = True

    def __init__(self, net, config):
        super().__init__(net, config)
        self.offsets = np.zeros(net.n_sig, dtype=np.float64)

    def requests_at(self, t) -> np.ndarray:
        g = self.config.fixed_split
        n = self.net.sig_nphases
        return (((t - self.offsets) % (n * g)) // g).astype(np.int64)

    def decide(self, engine):
        return self.requests_at(engine.clock)

    def schedule(self, n_steps: int, t0: float, dt: float) -> np.ndarray:
        ts = t0 + dt * np.arange(n_steps)
        g = self.config.fixed_split
        n = self.net.sig_nphases
        return (((ts[:, None] - self.offsets[None, :]) % (n * g)) // g
                ).astype(np.int64)


class GreenWave(FixedTime):
    """Fixed-time plan shifted per node by corridor travel-time offsets."""

    name = "greenwave"

    def __init__(self, net, config, corridors=None):
        super().__init__(net, config)
        offsets = {}
        for corridor in corridors or []:
            offsets.update(green_wave_offsets(
                net, corridor, cycle=self._cycle_of(corridor)))
        for nid, off in offsets.items():
            ni = net.node_index.get(nid)
            if ni is None:
                continue
            hits = np.nonzero(net.sig_nodes == ni)[0]
            if len(hits):
                self.offsets[hits[0]] = off

    def _cycle_of(self, corridor) -> float:
        first = self.net.node_index.get(corridor[0])
        if first is None:
            return 2 * self.config.fixed_split
        si = np.nonzero(self.net.sig_nodes == first)[0]
        n = int(self.net.sig_nphases[si[0]]) if len(si) else 2
        return n * self.config.fixed_split


def green_wave_offsets(net: CompiledNetwork, corridor, cycle: float,
                       free_flow_speed: Optional[float] = None) -> dict:
    """Offsets (seconds) from cumulative distance along an ordered corridor.

    Nodes not on the corridor get offset 0.
    """
    if cycle <= 0:
        raise ValueError("cycle must be positive")
    vf = free_flow_speed
    offsets = {}
    dist = 0.0
    prev_xy = None
    for nid in corridor:
        ni = net.node_index.get(nid)
        if ni is None:
            offsets[nid] = 0.0
            continue
        xy = net.node_xy[ni]
        if prev_xy is not None:
            dist += float(np.hypot(*(xy - prev_xy)))
        prev_xy = xy
        v = vf if vf is not None else float(np.max(net.cell_vf))
        offsets[nid] = (dist / v) % cycle
    return offsets


class Webster(Controller):
    """Demand-proportional fixed plans with Webster's optimal cycle length."""

    name = "webster"
    schedulable = True
    MIN_CYCLE, MAX_CYCLE = 40.0, 180.0

    def __init__(self, net, config, origin_rates=None):
        super().__init__(net, config)
        rates = (np.zeros(len(net.origin_links)) if origin_rates is None
                 else np.asarray(origin_rates, dtype=np.float64))
        link_demand = estimate_link_demand(net, rates,
                                           discount=config.webster_discount)
        mov_demand = net.mov_beta * link_demand[_mov_from_link(net)]
        self.cycles = np.zeros(net.n_sig, dtype=np.float64)
        self.slot_bounds: list = []
        for s in range(net.n_sig):
            n = int(net.sig_nphases[s])
            start = net.sig_phase_start[s]
            ys = np.zeros(n)
            for p in range(n):
                row = start + p
                movs = net.phase_movs[net.sig_phase_ptr[row]:net.sig_phase_ptr[row + 1]]
                if len(movs):
                    ys[p] = np.max(mov_demand[movs] / net.mov_sat[movs])
            interim = net.sig_yellow[s] + net.sig_all_red[s]
            lost = n * interim
            Y = float(ys.sum())
            if Y >= 1.0:
                cycle = self.MAX_CYCLE
                self.diagnostics.append(
                    f"node {net.node_ids[net.sig_nodes[s]]}: oversaturated "
                    f"(Y={Y:.3f}), fell back to max cycle")
            elif Y <= 0.0:
                cycle = self.MIN_CYCLE
            else:
                cycle = min(max((1.5 * lost + 5.0) / (1.0 - Y),
                                self.MIN_CYCLE), self.MAX_CYCLE)
            share = ys / Y if Y > 0 else np.full(n, 1.0 / n)
            greens = (cycle - lost) * share
            slots = greens + interim
            self.cycles[s] = float(slots.sum())
            self.slot_bounds.append(np.cumsum(slots))

    @staticmethod
    def plan(demand_by_phase, saturation_by_phase, interim: float):
        """(cycle, greens) for one node from per-phase demand/saturation lists."""
        ys = np.array([max(np.asarray(d) / np.asarray(s))
                       for d, s in zip(demand_by_phase, saturation_by_phase)])
        n = len(ys)
        lost = n * interim
        Y = float(ys.sum())
        if Y >= 1.0:
            cycle = Webster.MAX_CYCLE
        else:
            cycle = min(max((1.5 * lost + 5.0) / (1.0 - Y),
                            Webster.MIN_CYCLE), Webster.MAX_CYCLE)
        share = ys / Y if Y > 0 else np.full(n, 1.0 / n)
        return cycle, (cycle - lost) * share

    def requests_at(self, t) -> np.ndarray:
        out = np.zeros(self.net.n_sig, dtype=np.int64)
        for s in range(self.net.n_sig):
            pos = t % self.cycles[s]
            out[s] = int(np.searchsorted(self.slot_bounds[s], pos, side="right"))
            out[s] = min(out[s], int(self.net.sig_nphases[s]) - 1)
        return out

    def decide(self, engine):
        return self.requests_at(engine.clock)

    def schedule(self, n_steps, t0, dt):
        return np.stack([self.requests_at(t0 + dt * i) for i in range(n_steps)])


def _mov_from_link(net: CompiledNetwork) -> np.ndarray:
    return net.cell_link[net.mov_up]


def estimate_link_demand(net: CompiledNetwork, origin_rates,
                         discount: float = 1.0) -> np.ndarray:
    """Nominal per-link demand (veh/s) from configured arrival rates.

    Solves the linear propagation d = r + (discount * B) d, where B routes
    each link's demand onto its successors by turn ratio.  A discount below
    one attenuates the estimate per intersection crossed, modelling how far
    a planner trusts configured boundary rates into the network interior.
    """
    n_links = len(net.link_ids)
    r = np.zeros(n_links)
    r[net.origin_links] = origin_rates
    B = np.zeros((n_links, n_links))
    from_links = _mov_from_link(net)
    to_links = net.cell_link[net.mov_down]
    for beta, fl, tl in zip(net.mov_beta, from_links, to_links):
        B[tl, fl] += beta * discount
    return np.linalg.solve(np.eye(n_links) - B, r)


class MaxPressure(Controller):
    """Serves the phase with the largest boundary-cell pressure.

    A max-green guard bounds starvation: when the current green exceeds
    ``max_green`` and another phase has waiting vehicles, the controller
    rotates to the strongest competitor even if its pressure does not beat
    the current phase (pressures degenerate to zero under mutual spillback).
    """

    name = "maxpressure"

    def _upstream_load(self, engine) -> np.ndarray:
        net = self.net
        nveh = engine.cell_vehicles()
        if len(net.phase_movs) == 0:
            return np.zeros(0)
        return np.add.reduceat(nveh[net.mov_up[net.phase_movs]],
                               net.sig_phase_ptr[:-1])

    def _force_rotate(self, engine, s, press, req):
        net = self.net
        if engine.sig_green_elapsed[s] < self.config.max_green:
            return False
        start = net.sig_phase_start[s]
        n = int(net.sig_nphases[s])
        up = self._upstream_load(engine)
        best, best_p = -1, -np.inf
        for p in range(n):
            if p == req[s] or up[start + p] <= 1e-9:
                continue
            if press[start + p] > best_p:
                best, best_p = p, press[start + p]
        if best >= 0:
            req[s] = best
            return True
        return False

    def decide(self, engine):
        press = phase_pressures(engine)
        net = self.net
        req = engine.sig_current.copy()
        ok = (engine.sig_interim == GREEN) & \
             (engine.sig_green_elapsed >= self.config.min_green)
        for s in np.nonzero(ok)[0]:
            if self._force_rotate(engine, s, press, req):
                continue
            start = net.sig_phase_start[s]
            rows = press[start:start + net.sig_nphases[s]]
            best = int(np.argmax(rows))
            if rows[best] > rows[req[s]] + self.config.tie_epsilon:
                req[s] = best
        return req


class LTAwareMP(MaxPressure):
    """MaxPressure that switches only when the gain beats the switching cost.

    The dead time of a switch (yellow + all-red + half the start-up ramp) is
    converted to vehicle-equivalents through the mean saturation rate of the
    currently served movements.
    """

    name = "ltmp"

    def __init__(self, net, config):
        super().__init__(net, config)
        self.row_mean_sat = np.zeros(net.n_phase_rows)
        for row in range(net.n_phase_rows):
            movs = net.phase_movs[net.sig_phase_ptr[row]:net.sig_phase_ptr[row + 1]]
            if len(movs):
                self.row_mean_sat[row] = float(np.mean(net.mov_sat[movs]))

    def decide(self, engine):
        press = phase_pressures(engine)
        net = self.net
        req = engine.sig_current.copy()
        ok = (engine.sig_interim == GREEN) & \
             (engine.sig_green_elapsed >= self.config.min_green)
        dead = net.sig_yellow + net.sig_all_red + self.config.lost_time / 2.0
        for s in np.nonzero(ok)[0]:
            if self._force_rotate(engine, s, press, req):
                continue
            start = net.sig_phase_start[s]
            rows = press[start:start + net.sig_nphases[s]]
            best = int(np.argmax(rows))
            if best == req[s]:
                continue
            cost = (dead[s] * self.row_mean_sat[start + req[s]]
                    * self.config.switch_cost_factor)
            if rows[best] - rows[req[s]] > cost:
                req[s] = best
        return req


class EfficientMP(MaxPressure):
    """Plans each green's duration from the pressure measured at entry."""

    name = "effmp"

    def __init__(self, net, config):
        super().__init__(net, config)
        self.reset()

    def reset(self):
        self.planned = np.full(self.net.n_sig, self.config.min_green)
        self.base = np.zeros(self.net.n_sig)
        self._was_green = np.ones(self.net.n_sig, dtype=bool)

    def _plan(self, pressure: float) -> float:
        c = self.config
        return float(np.clip(c.min_green + c.efficiency_gain * pressure,
                             c.min_green, c.max_green))

    def decide(self, engine):
        press = phase_pressures(engine)
        net = self.net
        req = engine.sig_current.copy()
        green = engine.sig_interim == GREEN
        entered = green & ~self._was_green
        for s in np.nonzero(entered)[0]:
            self.base[s] = 0.0
            self.planned[s] = self._plan(
                press[net.sig_phase_start[s] + req[s]])
        for s in np.nonzero(green)[0]:
            if engine.sig_green_elapsed[s] - self.base[s] < self.planned[s]:
                continue
            if self._force_rotate(engine, s, press, req):
                continue
            start = net.sig_phase_start[s]
            rows = press[start:start + net.sig_nphases[s]]
            best = int(np.argmax(rows))
            if rows[best] > rows[req[s]]:
                req[s] = best
            else:
                self.base[s] = engine.sig_green_elapsed[s]
                self.planned[s] = self._plan(rows[req[s]])
        self._was_green = green.copy()
        return req


class SOTL(Controller):
    """Self-organizing control.

    Red approaches accumulate a demand integral from vehicles detected near
    the stop line; crossing the threshold requests their phase.  The current
    green is extended while its own detection window still carries traffic,
    up to ``max_green``, so discharging platoons are not cut.
    """

    name = "sotl"

    def __init__(self, net, config):
        super().__init__(net, config)
        # Approaches = incoming links of signalized nodes that carry movements.
        from_link_of_mov = _mov_from_link(net)
        app_links: list = []
        app_sig: list = []
        app_phase: list = []
        for li in range(len(net.link_ids)):
            sig = net.link_to_sig[li]
            if sig < 0:
                continue
            movs = np.nonzero(from_link_of_mov == li)[0]
            if len(movs) == 0:
                continue
            mask = int(net.mov_phase_mask[movs[0]])
            phase = (mask & -mask).bit_length() - 1  # lowest serving phase
            app_links.append(li)
            app_sig.append(int(sig))
            app_phase.append(phase)
        self.app_sig = np.asarray(app_sig, dtype=np.int64)
        self.app_phase = np.asarray(app_phase, dtype=np.int64)
        n_det = max(1, int(round(config.sotl_distance)))
        ptr = [0]
        cells: list = []
        for li in app_links:
            first, last = net.link_first[li], net.link_last[li]
            lo = max(first, last - n_det + 1)
            cells.extend(range(lo, last + 1))
            ptr.append(len(cells))
        self.det_cells = np.asarray(cells, dtype=np.int64)
        self.det_ptr = np.asarray(ptr, dtype=np.int64)
        self.reset()

    def reset(self):
        self.kappa = np.zeros(len(self.app_sig))
        self.crossed_at = np.full(len(self.app_sig), -1, dtype=np.int64)
        self._tick = 0

    def decide(self, engine):
        net = self.net
        self._tick += 1
        veh = engine.cell_vehicles()
        det = (np.add.reduceat(veh[self.det_cells], self.det_ptr[:-1])
               if len(self.det_cells) else np.zeros(0))
        # The phase being (or about to be) served: pending during interim.
        served_phase = np.where(engine.sig_interim == GREEN,
                                engine.sig_current, engine.sig_pending)
        red = self.app_phase != served_phase[self.app_sig]
        self.kappa[red] += det[red]
        self.kappa[~red] = 0.0
        self.crossed_at[~red] = -1
        newly = red & (self.kappa >= self.config.sotl_threshold) & \
            (self.crossed_at < 0)
        self.crossed_at[newly] = self._tick

        req = engine.sig_current.copy()
        ok = (engine.sig_interim == GREEN) & \
             (engine.sig_green_elapsed >= self.config.min_green)
        for s in np.nonzero(ok)[0]:
            here = self.app_sig == s
            green_flow = float(det[here & ~red].sum()) if len(det) else 0.0
            expired = engine.sig_green_elapsed[s] >= self.config.max_green
            trig = here & (self.crossed_at > 0)
            target = -1
            if trig.any() and (green_flow < self.config.sotl_gap or expired):
                # First past the threshold wins; ties to the lowest phase.
                order = np.lexsort((self.app_phase[trig],
                                    self.crossed_at[trig]))
                target = int(self.app_phase[trig][order[0]])
            elif expired:
                red_here = here & (self.app_phase != req[s]) & (self.kappa > 0)
                if red_here.any():
                    kmax = self.kappa[red_here].max()
                    cand = red_here & (self.kappa >= kmax)
                    target = int(self.app_phase[cand].min())
            if target >= 0 and target != req[s]:
                req[s] = target
                will_serve = here & (self.app_phase == target)
                self.kappa[will_serve] = 0.0
                self.crossed_at[will_serve] = -1
        return req


def canonical_controller_name(name: str) -> str:
    key = name.lower().replace("-", "").replace("_", "")
    aliases = {"fixedtime": "fixed", "maxp": "maxpressure",
               "ltawaremp": "ltmp", "ltawaremaxpressure": "ltmp",
               "efficientmp": "effmp", "efficientmaxpressure": "effmp"}
    key = aliases.get(key, key)
    if key not in CONTROLLER_NAMES:
        raise ValueError(
            f"unknown controller '{name}'; available: {', '.join(CONTROLLER_NAMES)}")
    return key


def make_controller(name: str, net: CompiledNetwork,
                    config: Optional[ControllerConfig] = None,
                    origin_rates=None, corridors=None, **overrides) -> Controller:
    """Instantiate a controller by registry name.

    ``origin_rates`` feeds Webster's demand ratios; ``corridors`` (lists of
    node ids) feed GreenWave's offsets.  Keyword overrides patch the config.
    """
    key = canonical_controller_name(name)
    cfg = config or ControllerConfig(kind=key)
    if overrides:
        cfg = replace(cfg, **overrides)
    if key == "fixed":
        return FixedTime(net, cfg)
    if key == "webster":
        return Webster(net, cfg, origin_rates=origin_rates)
    if key == "sotl":
        return SOTL(net, cfg)
    if key == "maxpressure":
        return MaxPressure(net, cfg)
    if key == "ltmp":
        return LTAwareMP(net, cfg)
    if key == "effmp":
        return EfficientMP(net, cfg)
    return GreenWave(net, cfg, corridors=corridors)


def scenario_controller(name: str, scenario, net: CompiledNetwork,
                        lost_time: float = 0.0, **overrides) -> Controller:
    """Controller wired to a scenario: demand rates, corridors, and the
    scenario's per-controller default parameters, patched by overrides."""
    key = canonical_controller_name(name)
    params = dict(scenario.default_controller_params.get(key, {}))
    params.update(overrides)
    return make_controller(
        key, net, origin_rates=scenario.origin_rate_vector(net),
        corridors=scenario.corridors, lost_time=lost_time, **params)
