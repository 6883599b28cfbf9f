"""Closed-loop maps produced by SLS synthesis and their achievability checks."""

from dataclasses import dataclass

import numpy as np

from ..errors import ConstructionError
from ..fir import FirTransferMatrix, fir_product

__all__ = ["SlsParamsSF", "SlsParamsOF", "sf_residuals", "of_residuals"]


@dataclass(frozen=True)
class SlsParamsSF:
    """State feedback maps: disturbance to state (``Phi_x``) and control (``Phi_u``)."""

    Phi_x: FirTransferMatrix
    Phi_u: FirTransferMatrix

    def __post_init__(self):
        if self.Phi_x.start != 1 or self.Phi_u.start != 1:
            raise ConstructionError("state-feedback maps must be strictly proper")
        if self.Phi_x.T != self.Phi_u.T or self.Phi_x.shape[1] != self.Phi_u.shape[1]:
            raise ConstructionError("Phi_x and Phi_u disagree on horizon or input dimension")

    @property
    def T(self):
        return self.Phi_x.T

    def blocks(self):
        return {"Phi_x": self.Phi_x, "Phi_u": self.Phi_u}


@dataclass(frozen=True)
class SlsParamsOF:
    """Output feedback maps from (state disturbance, measurement noise) to (x, u)."""

    Phi_xx: FirTransferMatrix
    Phi_ux: FirTransferMatrix
    Phi_xy: FirTransferMatrix
    Phi_uy: FirTransferMatrix

    def __post_init__(self):
        if min(self.Phi_xx.start, self.Phi_ux.start, self.Phi_xy.start) != 1:
            raise ConstructionError("Phi_xx, Phi_ux and Phi_xy must be strictly proper")
        if self.Phi_uy.start != 0:
            raise ConstructionError("Phi_uy carries a feedthrough element and starts at 0")

    @property
    def T(self):
        return self.Phi_xx.T

    def blocks(self):
        return {"Phi_xx": self.Phi_xx, "Phi_ux": self.Phi_ux,
                "Phi_xy": self.Phi_xy, "Phi_uy": self.Phi_uy}


def _shifted_pencil(A, B):
    """``z^-1 [zI - A, -B]`` as FIR coefficients ``[[I, 0], [-A, -B]]``."""
    n = A.shape[0]
    left = FirTransferMatrix(np.stack([np.eye(n), -A]))
    right = FirTransferMatrix(np.stack([np.zeros_like(B), -B]))
    return left, right


def _delta1(n, length):
    out = np.zeros((length, n, n))
    out[1] = np.eye(n)
    return out


def _max_abs(*arrays):
    return max(float(np.max(np.abs(a), initial=0.0)) for a in arrays)


def sf_residuals(params, A, B2):
    """Largest coefficient of ``z^-1([zI-A, -B2][Phi_x; Phi_u] - I)``.

    Polynomial products are formed by direct convolution, independently of
    how the constraints were assembled; every index ``0 .. T+1`` is checked.
    """
    A, B2 = np.atleast_2d(A), np.atleast_2d(B2)
    left, right = _shifted_pencil(A, B2)
    prod = fir_product(left, params.Phi_x) + fir_product(right, params.Phi_u)
    return _max_abs(prod - _delta1(A.shape[0], prod.shape[0]))


def of_residuals(params, A, B2, C2):
    """Largest coefficient residual of both output-feedback achievability identities."""
    A, B2, C2 = (np.atleast_2d(M) for M in (A, B2, C2))
    n = A.shape[0]
    left, right = _shifted_pencil(A, B2)
    top, bottom = _shifted_pencil(A.T, C2.T)
    top = FirTransferMatrix(np.transpose(top.coeffs, (0, 2, 1)))
    bottom = FirTransferMatrix(np.transpose(bottom.coeffs, (0, 2, 1)))
    p = params
    row_xx = fir_product(left, p.Phi_xx) + fir_product(right, p.Phi_ux)
    row_xy = fir_product(left, p.Phi_xy) + fir_product(right, p.Phi_uy)
    col_xx = fir_product(p.Phi_xx, top) + fir_product(p.Phi_xy, bottom)
    col_ux = fir_product(p.Phi_ux, top) + fir_product(p.Phi_uy, bottom)
    return _max_abs(row_xx - _delta1(n, row_xx.shape[0]), row_xy,
                    col_xx - _delta1(n, col_xx.shape[0]), col_ux)
