"""Reaction-diffusion model with a Preisach-type hysteresis term.

Modules: :mod:`hysteresis` (relays and configurations), :mod:`kernels`
(heat kernels on the threshold interval), :mod:`solver` (the coupled
PDE/ODE integrator), :mod:`fronts` (front tracking on recorded runs) and
:mod:`experiments` (observation plans, verification, asymptotics).
"""
from .hysteresis import SimpleConfig, config_update
from .kernels import ThresholdDomain
from .solver import ModelParams, run

__all__ = ["SimpleConfig", "ThresholdDomain", "ModelParams", "config_update", "run"]
__version__ = "0.1.0"
