"""Monte Carlo wave-function simulator for coupled DOPO networks."""

__version__ = "0.1.0"

from .engine import (EnsembleStats, TimeGrid, TrajectoryResult,
                     estimate_timestep_error, evolve_trajectory,
                     run_ensemble, trajectory_stream)
from .fock import (FockGeometry, MultiModeState, TruncationWarning,
                   basis_state, cat_state, coherent_state, product_state)
from .ising import (ProblemInstance, brute_force_ground, builtin_instances,
                    energy, make_instance, maxcut_to_ising)
from .model import JumpOperator, NetworkModel, Schedule, build_jump_set
from .observables import (HermiteHalfTable, MeanPhoton, SignProbability,
                          SuccessRate, build_hermite_half_table,
                          config_probability, mean_photon, purity,
                          quadrature_distribution, success_rate)

__all__ = [
    "EnsembleStats", "TimeGrid", "TrajectoryResult",
    "estimate_timestep_error", "evolve_trajectory", "run_ensemble",
    "trajectory_stream",
    "FockGeometry", "MultiModeState", "TruncationWarning", "basis_state",
    "cat_state", "coherent_state", "product_state",
    "ProblemInstance", "brute_force_ground", "builtin_instances", "energy",
    "make_instance", "maxcut_to_ising",
    "JumpOperator", "NetworkModel", "Schedule", "build_jump_set",
    "HermiteHalfTable", "MeanPhoton", "SignProbability", "SuccessRate",
    "build_hermite_half_table", "config_probability", "mean_photon",
    "purity", "quadrature_distribution", "success_rate",
]
