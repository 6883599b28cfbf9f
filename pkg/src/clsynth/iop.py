"""Input-output parametrization for stable plants.

For ``y = G u + Pyw w`` and ``z = Pzu u + Pzw w`` the closed-loop maps
``X, W, Y, Z`` of a controller ``K = Y X^-1`` satisfy

    X - G Y = I,   W - G Z = 0,   W - X G = 0,   Z - Y G = I

and the regulated response is ``Pzw + Pzu Y Pyw``.  All four maps are FIR
with elements ``0 .. T``; transfer products are truncated at index ``T`` and
the part they lose beyond ``T`` is reported as the truncation residual.
"""

from dataclasses import dataclass
import logging
import warnings

import numpy as np

from .controllers import FirFeedbackController
from .errors import ConstructionError, InvalidArgument, NumericalFailure, UnstablePlant
from .fir import FirTransferMatrix, fir_product
from .framework import SynthesisAlgorithm, _check_synthesis_dims
from .qp import solve_qp
from .sls.problem import AffineExpr, Expression, SynthesisProblem
from .systems import spectral_radius

__all__ = ["PlantTransfers", "IopParams", "plant_transfers", "IOP", "IOPResult",
           "iop_residuals", "TruncationWarning"]

log = logging.getLogger(__name__)

TRUNCATION_TOL = 1e-6


class TruncationWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class PlantTransfers:
    G: FirTransferMatrix
    Pyw: FirTransferMatrix
    Pzu: FirTransferMatrix
    Pzw: FirTransferMatrix

    @property
    def T(self):
        return self.G.T


@dataclass(frozen=True)
class IopParams:
    X: FirTransferMatrix
    W: FirTransferMatrix
    Y: FirTransferMatrix
    Z: FirTransferMatrix

    @property
    def T(self):
        return self.X.T

    def blocks(self):
        return {"X": self.X, "W": self.W, "Y": self.Y, "Z": self.Z}


def _markov(C, A, B, D, T):
    out = np.zeros((T + 1, C.shape[0], B.shape[1]))
    out[0] = D
    AkB = B.copy()
    for tau in range(1, T + 1):
        out[tau] = C @ AkB
        AkB = A @ AkB
    return FirTransferMatrix(out)


def plant_transfers(system, T_p):
    """Markov parameters ``0 .. T_p`` of the four plant transfer matrices."""
    if int(T_p) != T_p or T_p < 1:
        raise InvalidArgument(f"truncation horizon must be a positive integer, got {T_p!r}")
    rho = spectral_radius(system.A)
    if rho >= 1:
        raise UnstablePlant(f"input-output parametrization needs a stable plant (spectral radius {rho:.4g})")
    s = system
    return PlantTransfers(
        G=_markov(s.C2, s.A, s.B2, s.D22, T_p),
        Pyw=_markov(s.C2, s.A, s.B1, s.D21, T_p),
        Pzu=_markov(s.C1, s.A, s.B2, s.D12, T_p),
        Pzw=_markov(s.C1, s.A, s.B1, s.D11, T_p),
    )


def iop_residuals(params, G, upto):
    """Coefficients ``0 .. upto`` of the four defining identities minus their targets.

    Returns a dict of arrays with shape ``(upto + 1, rows, cols)``.
    """
    X, W, Y, Z = (p.dense(upto + 1) for p in (params.X, params.W, params.Y, params.Z))
    eye_y = np.zeros_like(X)
    eye_y[0] = np.eye(X.shape[1])
    eye_u = np.zeros_like(Z)
    eye_u[0] = np.eye(Z.shape[1])
    Gd = G.dense(upto + 1)
    return {
        "X-GY": X - fir_product(Gd, Y, upto) - eye_y,
        "W-GZ": W - fir_product(Gd, Z, upto),
        "W-XG": W - fir_product(X, Gd, upto),
        "Z-YG": Z - fir_product(Y, Gd, upto) - eye_u,
    }


def _complete(Y, G, T):
    """``X, W, Z`` implied by ``Y`` through the identities, truncated at ``T``."""
    Gd = G.dense(T + 1)
    Yd = Y.dense(T + 1)
    X = fir_product(Gd, Yd, T)
    X[0] += np.eye(X.shape[1])
    Z = fir_product(Yd, Gd, T)
    Z[0] += np.eye(Z.shape[1])
    W = fir_product(Gd, Z, T)
    return IopParams(FirTransferMatrix(X), FirTransferMatrix(W), Y, FirTransferMatrix(Z))


@dataclass
class IOPResult:
    params: IopParams
    controller: FirFeedbackController
    plant: PlantTransfers
    objective: float
    residual: float
    truncation_residual: float
    solution: object


class IOP(SynthesisAlgorithm):
    """H2-optimal input-output parametrization.

    Minimizes ``sum_{k=0..T} ||(Pzw + Pzu Y Pyw)[k]||_F^2`` subject to the
    four identities at coefficients ``0 .. T``.  ``T_p`` is the number of
    plant Markov parameters kept (default ``2 T``, enough to evaluate the
    truncation residual on ``T+1 .. 2T``).

    With ``reduce=True`` (default) only ``Y`` enters the program: the
    identities give ``X = I + G Y`` and ``Z = I + Y G`` directly, and
    ``W = G Z`` then also equals ``X G``.  This is an exact elimination of the
    equalities and is much cheaper than the four-block program
    (``reduce=False``), which is kept for cross-checking.
    """

    def __init__(self, T=20, T_p=None, reduce=True):
        if int(T) != T or T < 1:
            raise InvalidArgument(f"FIR horizon T must be a positive integer, got {T!r}")
        self.T = int(T)
        self.T_p = 2 * self.T if T_p is None else int(T_p)
        if self.T_p < 2 * self.T:
            raise InvalidArgument(f"T_p must be at least 2T = {2 * self.T}")
        self.reduce = bool(reduce)

    def assemble(self, system):
        _check_synthesis_dims(system)
        plant = plant_transfers(system, self.T_p)
        T = self.T
        n_u, n_y = system.dims.n_u, system.dims.n_y
        problem = SynthesisProblem(system, T, "iop")
        if self.reduce:
            problem.add_block("Y", (n_u, n_y), 0)
            objective = Expression.zero()
            for expr in self._regulated_terms(problem, plant):
                objective = objective + Expression.sum_squares(expr)
            return problem, objective, plant
        for name, shape in (("X", (n_y, n_y)), ("W", (n_y, n_u)),
                            ("Y", (n_u, n_y)), ("Z", (n_u, n_u))):
            problem.add_block(name, shape, 0)
        G = plant.G
        for k in range(T + 1):
            x_gy = problem.term(None, "X", k)
            w_gz = problem.term(None, "W", k)
            w_xg = problem.term(None, "W", k)
            z_yg = problem.term(None, "Z", k)
            for j in range(k + 1):
                x_gy = x_gy - problem.term(G[k - j], "Y", j)
                w_gz = w_gz - problem.term(G[k - j], "Z", j)
                w_xg = w_xg - problem.term(None, "X", j, G[k - j])
                z_yg = z_yg - problem.term(None, "Y", j, G[k - j])
            if k == 0:
                x_gy = x_gy - np.eye(n_y)
                z_yg = z_yg - np.eye(n_u)
            for expr, label in ((x_gy, "X-GY"), (w_gz, "W-GZ"), (w_xg, "W-XG"), (z_yg, "Z-YG")):
                problem.add_equality(expr, label)
        objective = Expression.zero()
        for expr in self._regulated_terms(problem, plant):
            objective = objective + Expression.sum_squares(expr)
        return problem, objective, plant

    def _regulated_terms(self, problem, plant):
        # Coefficient k of Pzu Y Pyw is sum_j S[k-j] vec(Y[j]) with
        # S[d] = sum_{i+l=d} kron(Pzu[i], Pyw[l]').
        import scipy.sparse as sp

        T = self.T
        n_z, n_w = plant.Pzw.shape
        S = [sum(np.kron(plant.Pzu[i], plant.Pyw[d - i].T) for i in range(d + 1))
             for d in range(T + 1)]
        S = [sp.csr_matrix(s) for s in S]
        blk = problem["Y"]
        terms = []
        for k in range(T + 1):
            coefs = {blk.element(j): S[k - j] for j in range(k + 1)}
            terms.append(AffineExpr(n_z * n_w, coefs, plant.Pzw[k].reshape(-1)))
        return terms

    def solve(self, system):
        problem, objective, plant = self.assemble(system)
        program = problem.to_program(objective)
        log.debug("IOP: %d variables, %d equalities", program.n, program.E.shape[0])
        sol = solve_qp(program)
        b = problem.extract(sol.x)
        T = self.T
        if self.reduce:
            params = _complete(b["Y"], plant.G, T)
        else:
            params = IopParams(b["X"], b["W"], b["Y"], b["Z"])
        res = iop_residuals(params, plant.G, 2 * T)
        inside = max(float(np.max(np.abs(r[:T + 1]))) for r in res.values())
        tail = max(float(np.max(np.abs(r[T + 1:]))) for r in res.values())
        if inside > 1e-8:
            raise NumericalFailure(f"IOP identities violated by {inside:.3e}")
        if tail > TRUNCATION_TOL:
            warnings.warn(f"IOP truncation residual {tail:.3e} exceeds {TRUNCATION_TOL:.0e}; "
                          "increase T", TruncationWarning)
        try:
            controller = FirFeedbackController(params.X, params.Y)
        except ConstructionError as exc:
            raise NumericalFailure(str(exc)) from exc
        value = objective.evaluate(problem.values(sol.x))
        return IOPResult(params, controller, plant, value, inside, tail, sol)

    def synthesize(self, system):
        return self.solve(system).controller
