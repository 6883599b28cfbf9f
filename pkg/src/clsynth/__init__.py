"""Closed-loop controller synthesis and simulation."""

from .errors import *  # noqa: F401,F403
from .framework import (ControllerModel, Dims, NoiseModel, SynthesisAlgorithm, SystemModel,
                        run_simulation, run_synthesis)
from .systems import LTISystem, center_node, make_chain, spectral_radius
from .noise import FixedImpulse, GaussianNoise, SumNoise, ZeroNoise
from .simulator import SimulationResult, Simulator, compare

__version__ = "0.1.0"
