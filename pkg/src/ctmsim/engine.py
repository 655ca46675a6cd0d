"""Simulation engine: owns the mutable state and advances it step by step.

One :class:`Engine` owns one simulation state; stepping is strictly
sequential.  Several engines may share a single immutable
:class:`~ctmsim.network.CompiledNetwork`.

Set the environment variable ``CTMSIM_DEBUG=1`` to assert the density-bounds
and conservation invariants after every step batch.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels as K
from ._kernels import StateArrays, make_scratch
from .network import CompiledNetwork, GREEN

DEBUG = os.environ.get("CTMSIM_DEBUG", "") not in ("", "0")

# Movements turned green before the simulation started are treated as warm
# (no start-up ramp at t=0).
_WARM_START = -1.0e18


@dataclass(frozen=True)
class EngineConfig:
    lost_time: float = 0.0      # start-up lost time tau_L, seconds
    stochastic: bool = False    # Poisson arrivals instead of deterministic
    seed: int = 0

    def __post_init__(self):
        if self.lost_time < 0:
            raise ValueError(f"lost_time must be >= 0, got {self.lost_time}")


@dataclass
class StepMetrics:
    total_queue: float
    throughput_increment: float
    delay_increment: float
    mean_speed: float
    per_node_queue: Optional[np.ndarray] = None


class Engine:
    """Advances a compiled network under per-node phase requests."""

    def __init__(self, net: CompiledNetwork, demand,
                 config: EngineConfig = EngineConfig(),
                 sink_caps=None, use_basic_kernel: bool = False):
        self.net = net
        self.config = config
        self.dt = net.dt
        self._use_basic = use_basic_kernel

        rates = np.zeros(len(net.origin_links), dtype=np.float64)
        if demand is not None:
            origin_ids = [net.link_ids[li] for li in net.origin_links]
            if isinstance(demand, dict):
                for link_id, r in demand.items():
                    if link_id not in origin_ids:
                        raise ValueError(f"'{link_id}' is not an origin link")
                    if r < 0:
                        raise ValueError(f"negative arrival rate for '{link_id}'")
                    rates[origin_ids.index(link_id)] = r
            else:
                rates[:] = np.asarray(demand, dtype=np.float64)
                if (rates < 0).any():
                    raise ValueError("negative arrival rate")
        self.origin_rates = rates

        self.sink_caps = (np.array(net.sink_cap, dtype=np.float64)
                          if sink_caps is None
                          else np.asarray(sink_caps, dtype=np.float64))
        self._netpack = K.NetArrays(
            net.cell_lanes, net.cell_vf, net.cell_w, net.cell_kj, net.cell_q,
            net.cell_dx, net.cell_down, net.cell_kc, net.cell_queue_sig,
            net.mov_up, net.mov_down, net.mov_beta, net.mov_sat, net.mov_sig,
            net.mov_phase_mask, net.sig_phase_start, net.sig_phase_ptr,
            net.phase_movs, net.sig_nphases, net.sig_yellow, net.sig_all_red,
            net.origin_first_cell, net.sink_last_cell, self.sink_caps)
        self._scratch = make_scratch(net.n_cells, net.n_movements)
        self.probe_cell = -1
        self.reset(config.seed)

    # State ------------------------------------------------------------------

    def reset(self, seed: Optional[int] = None) -> None:
        """Zero densities and timers, re-seed the RNG, restart the clock."""
        net = self.net
        if seed is not None:
            self._seed = int(seed)
        self.rng = np.random.default_rng(self._seed)
        self.density = np.zeros(net.n_cells, dtype=np.float64)
        self.origin_queue = np.zeros(len(net.origin_links), dtype=np.float64)
        self._clock = np.zeros(1, dtype=np.float64)
        self.sig_current = np.zeros(net.n_sig, dtype=np.int64)
        self.sig_interim = np.full(net.n_sig, GREEN, dtype=np.int64)
        self.sig_timer = np.zeros(net.n_sig, dtype=np.float64)
        self.sig_green_elapsed = np.zeros(net.n_sig, dtype=np.float64)
        self.sig_pending = np.full(net.n_sig, -1, dtype=np.int64)
        self.mov_last_green = np.full(net.n_movements, _WARM_START,
                                      dtype=np.float64)
        self._totals = np.zeros(4, dtype=np.float64)  # injected, exited + Kahan carry
        self.cell_delay_acc = np.zeros(net.n_cells, dtype=np.float64)
        self.origin_wait_acc = np.zeros(len(net.origin_links), dtype=np.float64)
        self._statepack = StateArrays(
            self.density, self.origin_queue, self._clock,
            self.sig_current, self.sig_interim, self.sig_timer,
            self.sig_green_elapsed, self.sig_pending, self.mov_last_green,
            self._totals, self.cell_delay_acc, self.origin_wait_acc)

    @property
    def clock(self) -> float:
        return float(self._clock[0])

    @property
    def cumulative_injected(self) -> float:
        return float(self._totals[0])

    @property
    def cumulative_exited(self) -> float:
        return float(self._totals[1])

    def vehicles_in_cells(self) -> float:
        return float(np.sum(self.density * self.net.cell_dx * self.net.cell_lanes))

    def ledger_error(self) -> float:
        """Conservation residual: injected - (in cells + queued + exited)."""
        return (self.cumulative_injected
                - (self.vehicles_in_cells() + float(self.origin_queue.sum())
                   + self.cumulative_exited))

    def cell_vehicles(self) -> np.ndarray:
        return self.density * self.net.cell_dx * self.net.cell_lanes

    def total_queue(self) -> float:
        """Vehicles in at-or-above-critical cells on signalized approaches."""
        net = self.net
        mask = (net.cell_queue_sig >= 0) & (self.density >= net.cell_kc - 1e-12)
        return float(np.sum(self.cell_vehicles()[mask]))

    def per_node_queue(self) -> np.ndarray:
        net = self.net
        mask = (net.cell_queue_sig >= 0) & (self.density >= net.cell_kc - 1e-12)
        out = np.zeros(net.n_sig, dtype=np.float64)
        np.add.at(out, net.cell_queue_sig[mask], self.cell_vehicles()[mask])
        return out

    # Stepping ----------------------------------------------------------------

    def _draw_arrivals(self, n_steps: int) -> np.ndarray:
        lam = self.origin_rates * self.dt
        if self.config.stochastic:
            if len(lam) == 0:
                return np.zeros((n_steps, 0), dtype=np.float64)
            return self.rng.poisson(
                lam, size=(n_steps, len(lam))).astype(np.float64)
        return np.broadcast_to(lam, (n_steps, len(lam))).copy()

    def _prep_requests(self, requests, n_steps: int) -> np.ndarray:
        n_sig = self.net.n_sig
        if requests is None:
            return np.full((n_steps, n_sig), -1, dtype=np.int64)
        req = np.asarray(requests, dtype=np.int64)
        if req.ndim == 0:
            req = np.full(n_sig, int(req))
        if req.ndim == 1:
            req = np.broadcast_to(req, (n_steps, n_sig)).copy()
        if req.shape != (n_steps, n_sig):
            raise ValueError(f"requests shape {req.shape} != ({n_steps}, {n_sig})")
        bad = (req >= self.net.sig_nphases[None, :]) | (req < -1)
        if bad.any():
            s = int(np.argwhere(bad.any(axis=0))[0][0])
            raise ValueError(
                f"invalid phase index for signalized node {s}: "
                f"max allowed {int(self.net.sig_nphases[s]) - 1}")
        return req

    def run(self, n_steps: int, requests=None, arrivals=None,
            controller=None) -> np.ndarray:
        """Advance ``n_steps``; returns the per-step metric rows.

        ``requests`` may be None (hold), one index per node, or a full
        (n_steps, n_sig) schedule.  A ``controller`` (anything with a
        ``decide(engine) -> requests`` method) overrides ``requests`` and is
        consulted every step.
        """
        if controller is not None:
            out = np.empty((n_steps, K.N_METRICS), dtype=np.float64)
            arr = self._draw_arrivals(n_steps) if arrivals is None else arrivals
            for i in range(n_steps):
                req = self._prep_requests(controller.decide(self), 1)
                self._dispatch(req, arr[i:i + 1], out[i:i + 1])
            if DEBUG:
                self._check_invariants()
            return out
        req = self._prep_requests(requests, n_steps)
        arr = self._draw_arrivals(n_steps) if arrivals is None else arrivals
        out = np.empty((n_steps, K.N_METRICS), dtype=np.float64)
        self._dispatch(req, arr, out)
        if DEBUG:
            self._check_invariants()
        return out

    def _dispatch(self, req, arr, out):
        if self._use_basic:
            if self.config.lost_time != 0.0:
                raise ValueError("basic kernel cannot model lost time")
            K.run_steps_basic(self._netpack, self._statepack, self._scratch,
                              req, arr, self.dt, self.probe_cell, out)
        else:
            K.run_steps(self._netpack, self._statepack, self._scratch,
                        req, arr, self.dt, self.config.lost_time,
                        self.probe_cell, out)

    def step(self, requests=None) -> StepMetrics:
        """Advance one step; see :meth:`run` for request semantics."""
        row = self.run(1, requests=requests)[0]
        den = row[K.M_SPEED_DEN]
        speed = row[K.M_SPEED_NUM] / den if den > 0 else 0.0
        return StepMetrics(total_queue=row[K.M_QUEUE],
                           throughput_increment=row[K.M_EXITED],
                           delay_increment=row[K.M_DELAY],
                           mean_speed=speed)

    def _check_invariants(self):
        k = self.density
        assert (k >= -1e-9).all(), f"negative density: {k.min()}"
        assert (k <= self.net.cell_kj + 1e-9).all(), (
            f"density above jam: {(k - self.net.cell_kj).max()}")
        err = abs(self.ledger_error())
        assert err < 1e-6, f"conservation ledger broken: {err}"

    # Snapshots ----------------------------------------------------------------

    def signal_snapshot(self) -> list:
        return [{"phase": int(self.sig_current[s]),
                 "interim": int(self.sig_interim[s])}
                for s in range(self.net.n_sig)]

    def normalized_density(self) -> np.ndarray:
        return np.clip(self.density / self.net.cell_kj, 0.0, 1.0)
