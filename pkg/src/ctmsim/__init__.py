"""ctmsim: fast macroscopic traffic-signal simulation on the cell
transmission model, with rule-based controllers, an episodic environment API
for learning experiments, a benchmark CLI, and a streaming web dashboard."""

from .network import (
    LinkSpec, MovementSpec, NodeSpec, PhaseSpec, NetworkSpec,
    CompiledNetwork, Diagnostic, validate, compile_network,
    load_network_json, save_network_json, movement_key,
    GREEN, YELLOW, ALL_RED,
)
from .engine import Engine, EngineConfig, StepMetrics
from .controllers import ControllerConfig, make_controller, CONTROLLER_NAMES
from .scenarios import (
    ScenarioDefinition, make as registry_make, available_scenarios,
    gen_single_intersection, gen_grid, gen_arterial, generate_demand,
)
from .env import EnvConfig, TrafficEnv, make_env

__all__ = [
    "LinkSpec", "MovementSpec", "NodeSpec", "PhaseSpec", "NetworkSpec",
    "CompiledNetwork", "Diagnostic", "validate", "compile_network",
    "load_network_json", "save_network_json", "movement_key",
    "GREEN", "YELLOW", "ALL_RED",
    "Engine", "EngineConfig", "StepMetrics",
    "ControllerConfig", "make_controller", "CONTROLLER_NAMES",
    "ScenarioDefinition", "registry_make", "make", "available_scenarios",
    "gen_single_intersection", "gen_grid", "gen_arterial", "generate_demand",
    "EnvConfig", "TrafficEnv", "make_env",
]

make = registry_make
__version__ = "0.1.0"
