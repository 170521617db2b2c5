"""Agent-based market ecology of mutual funds: value investors, noise traders and trend followers."""

from .config import SimConfig, load_config
from .engine import AdaptiveSpec, RunRecord, Simulation, run, run_ensemble

__all__ = ["AdaptiveSpec", "RunRecord", "SimConfig", "Simulation", "load_config", "run", "run_ensemble"]
__version__ = "0.1.0"
