"""System level synthesis over FIR closed-loop maps."""

from dataclasses import dataclass
import logging

from ..controllers import OfSlsController, SfSlsController
from ..errors import DimensionMismatch, InvalidArgument, NumericalFailure
from ..framework import SynthesisAlgorithm, _check_synthesis_dims
from ..qp import solve_admm, solve_qp
from .modules import ConstraintModule, H2Objective, OFAchievability, SFAchievability, \
    compose_objectives
from .params import SlsParamsOF, SlsParamsSF, of_residuals, sf_residuals
from .problem import SynthesisProblem

__all__ = ["assemble_sf", "assemble_of", "SLS", "SLSResult"]

log = logging.getLogger(__name__)

ACHIEVABILITY_TOL = 1e-8


def _check_T(T):
    if int(T) != T or T < 1:
        raise InvalidArgument(f"FIR horizon T must be a positive integer, got {T!r}")
    return int(T)


def assemble_sf(system, T):
    """Register ``Phi_x``, ``Phi_u`` (elements 1..T) and the state-feedback equalities."""
    T = _check_T(T)
    n_x, n_u = system.dims.n_x, system.dims.n_u
    problem = SynthesisProblem(system, T, "sf")
    problem.add_block("Phi_x", (n_x, n_x), 1)
    problem.add_block("Phi_u", (n_u, n_x), 1)
    for expr in SFAchievability().emit(problem):
        problem.add_equality(expr, "achievability")
    return problem


def assemble_of(system, T):
    """Register the four output-feedback blocks and both achievability identities."""
    T = _check_T(T)
    n_x, n_u, _, n_y, _ = system.dims
    problem = SynthesisProblem(system, T, "of")
    problem.add_block("Phi_xx", (n_x, n_x), 1)
    problem.add_block("Phi_ux", (n_u, n_x), 1)
    problem.add_block("Phi_xy", (n_x, n_y), 1)
    problem.add_block("Phi_uy", (n_u, n_y), 0)
    for expr in OFAchievability().emit(problem):
        problem.add_equality(expr, "achievability")
    return problem


@dataclass
class SLSResult:
    params: object
    controller: object
    objective: float
    residual: float
    solution: object


class SLS(SynthesisAlgorithm):
    """State- or output-feedback SLS with user-selected modules.

    Parameters
    ----------
    mode : {"sf", "of"}
    T : int
        Number of spectral elements kept in each closed-loop map.
    objectives : list of ObjectiveModule
        Composed in order; defaults to a single :class:`H2Objective`.
    constraints : list of ConstraintModule
        Emitted and composed before the objectives.
    rho : float
        ADMM penalty, used only when the objective has l1 terms.
    """

    def __init__(self, mode="sf", T=20, objectives=None, constraints=(), rho=1.0):
        if mode not in ("sf", "of"):
            raise InvalidArgument(f"mode must be 'sf' or 'of', got {mode!r}")
        self.mode = mode
        self.T = _check_T(T)
        self.objectives = [H2Objective()] if objectives is None else list(objectives)
        self.constraints = list(constraints)
        self.rho = rho

    def assemble(self, system):
        _check_synthesis_dims(system)
        if self.mode == "sf" and system.dims.n_y != system.dims.n_x:
            raise DimensionMismatch(
                f"state feedback needs the full state as measurement (n_y={system.dims.n_y}, "
                f"n_x={system.dims.n_x})")
        problem = (assemble_sf if self.mode == "sf" else assemble_of)(system, self.T)
        for module in self.constraints:
            for expr in module.emit(problem):
                problem.add_equality(expr, type(module).__name__)
        objective = compose_objectives(self.constraints + self.objectives, problem)
        return problem, objective

    def solve(self, system):
        problem, objective = self.assemble(system)
        program = problem.to_program(objective)
        log.debug("SLS %s: %d variables, %d equalities", self.mode, program.n, program.E.shape[0])
        if program.has_l1:
            sol = solve_admm(program, rho=self.rho)
        else:
            sol = solve_qp(program)
        blocks = problem.extract(sol.x)
        if self.mode == "sf":
            params = SlsParamsSF(blocks["Phi_x"], blocks["Phi_u"])
            residual = sf_residuals(params, system.A, system.B2)
            controller = SfSlsController(params)
        else:
            params = SlsParamsOF(blocks["Phi_xx"], blocks["Phi_ux"], blocks["Phi_xy"],
                                 blocks["Phi_uy"])
            residual = of_residuals(params, system.A, system.B2, system.C2)
            controller = OfSlsController(params, system.D22)
        if residual > ACHIEVABILITY_TOL:
            raise NumericalFailure(f"achievability residual {residual:.3e} exceeds "
                                   f"{ACHIEVABILITY_TOL:.0e}")
        value = objective.evaluate(problem.values(sol.x))
        return SLSResult(params, controller, value, residual, sol)

    def synthesize(self, system):
        return self.solve(system).controller
