"""mrsim: decentralized multi-robot logistics simulation.

A fleet of simulated transport robots plans port-to-port routes on a
topological map.  Edge costs are travel times estimated on demand by a
per-robot, per-arc Kalman filter over a bilinear state-dependent
time-series model; robots exchange time-stamped observations through
per-robot triple stores so that an arc a robot has not traversed recently
can still be estimated from a neighbour's experience.  The experiment
harness compares planned path costs with and without that sharing.
"""

from mrsim.estimator import EstimatorConfig, EstimatorState, TravelTimeSeries
from mrsim.harness import ScenarioConfig, load_scenario, reference_scenario, run_experiment
from mrsim.knowledge import KnowledgeBase, export_triples, import_triples
from mrsim.planner import PathPlan, plan
from mrsim.sharing import FleetDirectory, request_observation
from mrsim.topomap import Arc, Node, TopoMap, load_map, save_map
from mrsim.worldsim import TravelObservation, World, WorldConfig, battery_factor

__all__ = [
    "Arc",
    "EstimatorConfig",
    "EstimatorState",
    "FleetDirectory",
    "KnowledgeBase",
    "Node",
    "PathPlan",
    "ScenarioConfig",
    "TopoMap",
    "TravelObservation",
    "TravelTimeSeries",
    "World",
    "WorldConfig",
    "battery_factor",
    "export_triples",
    "import_triples",
    "load_map",
    "load_scenario",
    "plan",
    "reference_scenario",
    "request_observation",
    "run_experiment",
    "save_map",
]

__version__ = "0.1.0"
