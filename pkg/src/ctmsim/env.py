"""Episodic environment wrapper around the engine.

The API mirrors the conventional five-tuple step contract
``(obs, reward, terminated, truncated, info)`` so the environment plugs into
standard RL stacks without depending on any of them.  Observation, action,
and reward components are addressable by name; single-agent mode concatenates
per-node observations, multi-agent mode returns one entry per signalized
node (heterogeneous dimensions, optionally zero-padded).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from . import _kernels as K
from .engine import Engine, EngineConfig
from .network import CompiledNetwork, GREEN
from .scenarios import ScenarioDefinition, make as make_scenario

OBS_KINDS = ("default", "pressure", "full_density")
ACTION_KINDS = ("phase_select", "next_or_stay")
REWARD_KINDS = ("queue", "pressure", "delay", "waiting", "throughput",
                "norm_throughput")


@dataclass(frozen=True)
class EnvConfig:
    scenario: str = "single-intersection-v0"
    decision_interval: Optional[float] = None   # seconds; scenario default
    horizon: Optional[int] = None               # decision steps; scenario default
    obs_kind: str = "default"
    action_kind: str = "phase_select"
    reward_kind: str = "queue"
    lost_time: float = 0.0
    stochastic: bool = False
    seed: int = 0
    multi_agent: bool = False
    pad_observations: bool = False
    demand_scale: float = 1.0

    def __post_init__(self):
        if self.obs_kind not in OBS_KINDS:
            raise ValueError(f"obs_kind must be one of {OBS_KINDS}")
        if self.action_kind not in ACTION_KINDS:
            raise ValueError(f"action_kind must be one of {ACTION_KINDS}")
        if self.reward_kind not in REWARD_KINDS:
            raise ValueError(f"reward_kind must be one of {REWARD_KINDS}")


class TrafficEnv:
    """Signal-control environment over one scenario.

    Distinct instances are independent and may run concurrently over a shared
    compiled network.
    """

    def __init__(self, scenario: Union[str, ScenarioDefinition],
                 config: EnvConfig = EnvConfig()):
        if isinstance(scenario, str):
            scenario = make_scenario(scenario, demand_scale=config.demand_scale)
        elif config.demand_scale != 1.0:
            scenario = scenario.scaled(config.demand_scale)
        self.scenario = scenario
        self.config = config
        self.net: CompiledNetwork = scenario.compile()
        self.k = float(config.decision_interval
                       if config.decision_interval is not None
                       else scenario.decision_interval)
        if self.k < self.net.dt:
            raise ValueError("decision interval shorter than one engine step")
        self.steps_per_decision = max(1, int(round(self.k / self.net.dt)))
        self.horizon = int(config.horizon if config.horizon is not None
                           else scenario.horizon)
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")

        rates = scenario.origin_rate_vector(self.net)
        self.total_demand_rate = float(np.sum(rates))
        self.engine = Engine(self.net, rates, EngineConfig(
            lost_time=config.lost_time, stochastic=config.stochastic,
            seed=config.seed))

        self._build_node_tables()
        self._decision = 0

    # Static per-node index tables -------------------------------------------

    def _build_node_tables(self):
        net = self.net
        self.agent_ids = [net.node_ids[ni] for ni in net.sig_nodes]
        self.n_agents = net.n_sig
        self.incoming_links: list = []       # per sig node: link indices
        for s in range(net.n_sig):
            self.incoming_links.append(
                np.nonzero(net.link_to_sig == s)[0].astype(np.int64))
        self.origin_sig = np.array(
            [net.link_to_sig[li] for li in net.origin_links], dtype=np.int64)

    # Dimensions ----------------------------------------------------------------

    def obs_dim(self, agent_index: int) -> int:
        net = self.net
        if self.config.obs_kind == "default":
            return int(net.sig_nphases[agent_index]
                       + 2 * len(self.incoming_links[agent_index]))
        if self.config.obs_kind == "pressure":
            return int(net.sig_nphases[agent_index])
        return net.n_cells

    @property
    def obs_dims(self) -> list:
        return [self.obs_dim(s) for s in range(self.n_agents)]

    def action_count(self, agent_index: int) -> int:
        if self.config.action_kind == "phase_select":
            return int(self.net.sig_nphases[agent_index])
        return 2

    # Observations ----------------------------------------------------------------

    def _node_obs(self, s: int) -> np.ndarray:
        net = self.net
        eng = self.engine
        if self.config.obs_kind == "full_density":
            return eng.normalized_density()
        if self.config.obs_kind == "pressure":
            from .controllers import phase_pressures
            press = phase_pressures(eng)
            start = net.sig_phase_start[s]
            return press[start:start + net.sig_nphases[s]].astype(np.float64)
        one_hot = np.zeros(int(net.sig_nphases[s]))
        one_hot[int(eng.sig_current[s])] = 1.0
        dens = []
        flags = []
        for li in self.incoming_links[s]:
            cells = slice(net.link_first[li], net.link_last[li] + 1)
            norm = eng.density[cells] / net.cell_kj[cells]
            dens.append(float(norm.mean()))
            flags.append(float(
                (eng.density[cells] >= net.cell_kc[cells] - 1e-12).any()))
        return np.concatenate([one_hot, dens, flags])

    def _observe(self):
        if self.config.multi_agent:
            obs = {aid: self._node_obs(s)
                   for s, aid in enumerate(self.agent_ids)}
            if self.config.pad_observations:
                width = max(len(v) for v in obs.values())
                obs = {k: np.pad(v, (0, width - len(v))) for k, v in obs.items()}
            return obs
        return np.concatenate([self._node_obs(s) for s in range(self.n_agents)])

    # Actions -------------------------------------------------------------------

    def _requests_from_action(self, action) -> np.ndarray:
        net = self.net
        if self.config.multi_agent and isinstance(action, dict):
            action = [action[aid] for aid in self.agent_ids]
        a = np.atleast_1d(np.asarray(action, dtype=np.int64))
        if a.shape != (self.n_agents,):
            raise ValueError(
                f"action must have one entry per controlled node "
                f"({self.n_agents}), got shape {a.shape}")
        if self.config.action_kind == "phase_select":
            if ((a < 0) | (a >= net.sig_nphases)).any():
                raise ValueError("phase index out of range")
            return a
        if ((a < 0) | (a > 1)).any():
            raise ValueError("next_or_stay action must be 0 or 1")
        return (self.engine.sig_current + a) % net.sig_nphases

    # Rewards --------------------------------------------------------------------

    def _reward(self, rows: np.ndarray, delay_cells: np.ndarray,
                wait_origin: np.ndarray):
        kind = self.config.reward_kind
        eng = self.engine
        if self.config.multi_agent:
            per = self._per_node_reward(kind, rows, delay_cells, wait_origin)
            return {aid: float(per[s]) for s, aid in enumerate(self.agent_ids)}
        if kind == "queue":
            return -eng.total_queue()
        if kind == "pressure":
            from .controllers import phase_pressures
            press = phase_pressures(eng)
            total = 0.0
            for s in range(self.n_agents):
                start = self.net.sig_phase_start[s]
                total += abs(float(
                    press[start:start + self.net.sig_nphases[s]].sum()))
            return -total
        if kind == "delay":
            return -float(rows[:, K.M_DELAY].sum())
        if kind == "waiting":
            return -float(rows[:, K.M_WAIT].sum())
        exited = float(rows[:, K.M_EXITED].sum())
        if kind == "throughput":
            return exited
        expected = self.k * self.total_demand_rate
        return exited / expected if expected > 0 else 0.0

    def _per_node_reward(self, kind, rows, delay_cells, wait_origin):
        net = self.net
        eng = self.engine
        out = np.zeros(self.n_agents)
        if kind == "queue":
            out = -eng.per_node_queue()
        elif kind == "pressure":
            from .controllers import phase_pressures
            press = phase_pressures(eng)
            for s in range(self.n_agents):
                start = net.sig_phase_start[s]
                out[s] = -abs(float(
                    press[start:start + net.sig_nphases[s]].sum()))
        elif kind in ("delay", "waiting"):
            for s in range(self.n_agents):
                w = float(wait_origin[self.origin_sig == s].sum())
                if kind == "waiting":
                    out[s] = -w
                else:
                    cells = net.cell_queue_sig == s
                    out[s] = -(float(delay_cells[cells].sum()) + w)
        else:
            exited = float(rows[:, K.M_EXITED].sum())
            if kind == "norm_throughput":
                expected = self.k * self.total_demand_rate
                exited = exited / expected if expected > 0 else 0.0
            out[:] = exited
        return out

    # Episode API -----------------------------------------------------------------

    def reset(self, seed: Optional[int] = None):
        self.engine.reset(self.config.seed if seed is None else seed)
        self._decision = 0
        self._cum_delay = 0.0
        return self._observe(), self._info()

    def step(self, action):
        if self._decision >= self.horizon:
            raise RuntimeError("episode over; call reset()")
        req = self._requests_from_action(action)
        eng = self.engine
        d0 = eng.cell_delay_acc.copy()
        w0 = eng.origin_wait_acc.copy()
        rows = eng.run(self.steps_per_decision, requests=req)
        delay_cells = eng.cell_delay_acc - d0
        wait_origin = eng.origin_wait_acc - w0
        self._cum_delay += float(rows[:, K.M_DELAY].sum())
        self._decision += 1
        reward = self._reward(rows, delay_cells, wait_origin)
        truncated = self._decision >= self.horizon
        return self._observe(), reward, False, truncated, self._info()

    def _info(self) -> dict:
        eng = self.engine
        return {"throughput": eng.cumulative_exited,
                "queue": eng.total_queue(),
                "delay": getattr(self, "_cum_delay", 0.0),
                "sim_time": eng.clock}


def make_env(scenario_name: str, **options) -> TrafficEnv:
    """Environment factory mirroring the scenario registry names."""
    config = EnvConfig(scenario=scenario_name, **options)
    return TrafficEnv(scenario_name, config)
