"""Particle-optimization variational inference with entropy-regularized updates."""

from .dynamics import BetaSchedule, UpdateRule
from .engine import DivergenceError, Ensemble, InitSpec, RunPlan, StepConfig, run
from .kernels import Bandwidth, KernelConfig
from .nnet import LayerSpec
from .targets import BayesLogReg, BnnPosterior, GaussianMixture, standard_normal

__all__ = [
    "Bandwidth",
    "BayesLogReg",
    "BetaSchedule",
    "BnnPosterior",
    "DivergenceError",
    "Ensemble",
    "GaussianMixture",
    "InitSpec",
    "KernelConfig",
    "LayerSpec",
    "RunPlan",
    "StepConfig",
    "UpdateRule",
    "run",
    "standard_normal",
]

__version__ = "0.1.0"
