"""Event-triggered adaptive dynamic average consensus."""

from .consensus import AlgorithmParams, EdgeGain
from .sim import Engine, GainConfig, Scenario, Trace, Uniform, run
from .topology import TimedTopology, TopologyChange
from .trigger import TriggerParams

__all__ = [
    "AlgorithmParams",
    "EdgeGain",
    "Engine",
    "GainConfig",
    "Scenario",
    "Trace",
    "Uniform",
    "run",
    "TimedTopology",
    "TopologyChange",
    "TriggerParams",
]

__version__ = "0.1.0"
