"""Simulation and maximum likelihood estimation for Gibbs point processes.

Models with a hardcore distance, piecewise-constant pair potentials (Strauss
and friends), Lennard-Jones and area-interaction energies are simulated by a
birth-death-move Metropolis-Hastings chain and fitted by Monte Carlo maximum
likelihood with free boundary conditions.
"""

from .geometry import PointConfig, Window, pairwise_min_distance, read_pattern, write_pattern
from .models import GibbsModel, Kind, ModelError, ModelParams, hamiltonian, local_energy
from .sampler import SampleSet, SamplerConfig, gnz_residual, run_chain
from .partition import BridgeSchedule, LogZEstimate, log_z_bridged, log_z_brute, log_z_ratio
from .estimator import (
    FitResult,
    InfeasibleData,
    OptimizerConfig,
    contrast,
    hardcore_mle,
    mc_mle,
    profile_range,
    pseudolikelihood_fit,
)

__version__ = "0.1.0"

__all__ = [
    "BridgeSchedule", "FitResult", "GibbsModel", "InfeasibleData", "Kind", "LogZEstimate",
    "ModelError", "ModelParams", "OptimizerConfig", "PointConfig", "SampleSet",
    "SamplerConfig", "Window", "contrast", "gnz_residual", "hamiltonian", "hardcore_mle",
    "local_energy", "log_z_bridged", "log_z_brute", "log_z_ratio", "mc_mle",
    "pairwise_min_distance", "profile_range", "pseudolikelihood_fit", "read_pattern",
    "run_chain", "write_pattern",
]
