"""Component contracts and the two workflows built from them.

Synthesis turns a :class:`SystemModel` into a :class:`ControllerModel` through
a :class:`SynthesisAlgorithm`.  Simulation feeds a controller back into a
system under disturbances drawn from a :class:`NoiseModel`.  Everything except
the synthesis algorithm works on time-domain signals only, so a controller
produced here can be driven by any source of measurements.

New methods are added by subclassing; the workflows below never need to know
the concrete types.
"""

from abc import ABC, abstractmethod
from typing import NamedTuple

import numpy as np

from .errors import DimensionMismatch, InvalidArgument

__all__ = [
    "Dims",
    "SystemModel",
    "ControllerModel",
    "NoiseModel",
    "SynthesisAlgorithm",
    "run_synthesis",
    "run_simulation",
    "check_vector",
]


class Dims(NamedTuple):
    n_x: int
    n_u: int
    n_w: int
    n_y: int
    n_z: int


def check_vector(v, dim, name):
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.shape[0] != dim:
        raise DimensionMismatch(f"{name} has length {v.shape[0]}, expected {dim}")
    return v


class SystemModel(ABC):
    """A plant with internal state, driven by control ``u`` and noise ``w``."""

    @property
    @abstractmethod
    def dims(self) -> Dims:
        ...

    @property
    @abstractmethod
    def state(self) -> np.ndarray:
        ...

    @abstractmethod
    def reset(self):
        """Restore the initial internal state."""

    @abstractmethod
    def measure(self, w) -> np.ndarray:
        """Measurement at the current state before any control is applied.

        Only meaningful for plants without direct feedthrough from ``u`` to
        ``y``.
        """

    @abstractmethod
    def step(self, u, w):
        """Advance one step; return ``(x_next, y, z)``.

        ``y`` and ``z`` are evaluated at the state held before the step.
        """

    @property
    def has_feedthrough(self) -> bool:
        return False


class ControllerModel(ABC):
    """Causal map from measurements to controls, evaluated one step at a time."""

    n_y: int
    n_u: int

    @abstractmethod
    def control(self, y) -> np.ndarray:
        ...

    @abstractmethod
    def reset(self):
        ...


class NoiseModel(ABC):
    n_w: int

    @abstractmethod
    def sample(self, t) -> np.ndarray:
        ...

    def reset(self):
        pass

    def describe(self) -> dict:
        return {"type": type(self).__name__, "n_w": self.n_w}


class SynthesisAlgorithm(ABC):
    """Designs a controller from a system model.

    Implementations may work in any domain internally but must return a
    :class:`ControllerModel`.  ``synthesize`` must not mutate the algorithm
    or the system.
    """

    @abstractmethod
    def synthesize(self, system: SystemModel) -> ControllerModel:
        ...


def _check_synthesis_dims(system):
    dims = system.dims
    if dims.n_u == 0:
        raise DimensionMismatch("system has no actuators (n_u = 0)")
    if dims.n_x == 0 or dims.n_y == 0:
        raise DimensionMismatch(f"degenerate system dimensions {tuple(dims)}")


def run_synthesis(algorithm: SynthesisAlgorithm, system: SystemModel) -> ControllerModel:
    """Synthesis workflow."""
    _check_synthesis_dims(system)
    controller = algorithm.synthesize(system)
    dims = system.dims
    if controller.n_y != dims.n_y or controller.n_u != dims.n_u:
        raise DimensionMismatch(
            f"controller maps {controller.n_y} measurements to {controller.n_u} controls, "
            f"system has n_y={dims.n_y}, n_u={dims.n_u}")
    return controller


def run_simulation(system, controller, noise, horizon, simulator=None):
    """Simulation workflow; returns a :class:`~clsynth.simulator.SimulationResult`."""
    from .simulator import Simulator

    if int(horizon) != horizon or horizon < 1:
        raise InvalidArgument(f"horizon must be a positive integer, got {horizon!r}")
    simulator = simulator or Simulator()
    return simulator.simulate(system, controller, noise, int(horizon))
