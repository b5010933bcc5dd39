from xsigma.accessors import SigmaDatasetAccessor
from xsigma.core import SpectralField, norms, to_physical, to_spectral
from xsigma.criticality import classify, decay_rate_table, emit_region_map, gamma_c
from xsigma.experiments import ExperimentConfig, load_config
from xsigma.grid import Grid
from xsigma.integrator import DuhamelIntegrator, IntegratorControls, initial_state
from xsigma.params import ModelParams
from xsigma.propagators import Equation, mode_propagator
from xsigma.testfunctions import TestFunctionSet

__all__ = [
    "Grid",
    "ModelParams",
    "SpectralField",
    "to_spectral",
    "to_physical",
    "norms",
    "Equation",
    "mode_propagator",
    "DuhamelIntegrator",
    "IntegratorControls",
    "initial_state",
    "gamma_c",
    "classify",
    "decay_rate_table",
    "emit_region_map",
    "TestFunctionSet",
    "ExperimentConfig",
    "load_config",
    "SigmaDatasetAccessor",
]
