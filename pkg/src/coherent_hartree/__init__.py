"""Coherent-state wave packets for semiclassical Hartree equations.

Solvers for the full equation (split-step Fourier), the classical centre
dynamics, the envelope equations of each nonlinear regime, the finite-eps
moving-frame system and the first-order corrector, plus an experiment harness.
"""

from .assembly import PacketFrame, assemble, initial_data, semiclassical_grid
from .classical import Trajectory, action_modified, integrate_coupled, integrate_standard
from .experiments import (ExperimentConfig, ExperimentRecord, __version__, default_config, fit_slope,
                          load_config, run_experiment)
from .grid import Grid, SpectralField
from .pde import HartreeSolver, PDEConfig

__all__ = [
    "ExperimentConfig", "ExperimentRecord", "Grid", "HartreeSolver", "PDEConfig", "PacketFrame", "SpectralField",
    "Trajectory", "__version__", "action_modified", "assemble", "default_config", "fit_slope", "initial_data",
    "integrate_coupled", "integrate_standard", "load_config", "run_experiment", "semiclassical_grid",
]
