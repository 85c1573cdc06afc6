"""Gridless line spectral estimation by sequential atom identification and refinement."""

from .bench import TrialSpec, gen_instance, nmse, run_benchmark
from .model import MeasurementOperator, steering_vector
from .solver import Estimate, SolverConfig, reconstruct, recover_gains, sair_run

__all__ = [
    "Estimate",
    "MeasurementOperator",
    "SolverConfig",
    "TrialSpec",
    "gen_instance",
    "nmse",
    "reconstruct",
    "recover_gains",
    "run_benchmark",
    "sair_run",
    "steering_vector",
]
