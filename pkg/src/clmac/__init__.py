"""Multi-channel MAC simulator with a continual-learning Q-learning agent."""
from .continual import ContextRegistry, canonicalize, context_bound
from .fairness import jain_index, water_fill
from .harness import ScenarioSpec, aggregate, load_scenario, run_scenario, sample_stochastic_timeline
from .incumbents import UEProfile, parse_profile
from .oracle import brute_force_optimum, check_constraints, derive_support
from .sim import SimConfig, Simulation

__all__ = [
    "ContextRegistry",
    "ScenarioSpec",
    "SimConfig",
    "Simulation",
    "UEProfile",
    "aggregate",
    "brute_force_optimum",
    "canonicalize",
    "check_constraints",
    "context_bound",
    "derive_support",
    "jain_index",
    "load_scenario",
    "parse_profile",
    "run_scenario",
    "sample_stochastic_timeline",
    "water_fill",
]
__version__ = "0.1.0"
