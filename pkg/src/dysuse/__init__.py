"""Susceptibility estimation for diffusion on dynamic social networks."""

from .diffusion import DiffusionModelSpec, run_dynamic
from .dyngraph import DynamicGraph, Snapshot, build_snapshots, load_temporal_edgelist, make_ba_dynamic, perturb_snapshots
from .errors import CapacityError, CorruptFileError, ParseError, ValidationError
from .model import DySuseModel, ModelConfig
from .oracle import estimate_susceptibility, exact_susceptibility, generate_ground_truth

__version__ = "0.1.0"

__all__ = [
    "CapacityError",
    "CorruptFileError",
    "DiffusionModelSpec",
    "DySuseModel",
    "DynamicGraph",
    "ModelConfig",
    "ParseError",
    "Snapshot",
    "ValidationError",
    "build_snapshots",
    "estimate_susceptibility",
    "exact_susceptibility",
    "generate_ground_truth",
    "load_temporal_edgelist",
    "make_ba_dynamic",
    "perturb_snapshots",
    "run_dynamic",
]
