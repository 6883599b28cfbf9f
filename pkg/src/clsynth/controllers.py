"""Time-domain controller realizations.

Each controller keeps a fixed-depth history of its internal signals (zero
before the first call), so memory is independent of the simulation length.
"""

import numpy as np

from .errors import ConstructionError, DimensionMismatch
from .fir import FirTransferMatrix
from .framework import ControllerModel, check_vector

__all__ = [
    "History",
    "SfSlsController",
    "OfSlsController",
    "FirFeedbackController",
    "StaticGainController",
    "controller_from_blocks",
]


class History:
    """Most-recent-first window over a vector signal: ``self[j]`` is ``j`` steps back."""

    def __init__(self, depth, dim):
        self._buf = np.zeros((max(depth, 1), dim))
        self._head = 0

    def push(self, v):
        self._head = (self._head - 1) % self._buf.shape[0]
        self._buf[self._head] = v

    def window(self, count):
        """Rows ``0 .. count-1`` (most recent first)."""
        idx = (self._head + np.arange(count)) % self._buf.shape[0]
        return self._buf[idx]

    def clear(self):
        self._buf[:] = 0.0
        self._head = 0


def _apply(coeffs, window):
    # sum_j coeffs[j] @ window[j]
    if coeffs.shape[0] == 0:
        return np.zeros(coeffs.shape[1])
    return np.einsum("tij,tj->i", coeffs, window)


class SfSlsController(ControllerModel):
    """State-feedback SLS controller.

    Reconstructs the state disturbance from the prediction error and filters
    it through the closed-loop maps:

        w_hat[t-1] = x[t] - x_hat[t]
        u[t]       = sum_{tau=1..T} Phi_u[tau] w_hat[t-tau]
        x_hat[t+1] = sum_{tau=2..T} Phi_x[tau] w_hat[t+1-tau]
    """

    def __init__(self, params):
        self.params = params
        self.T = params.T
        self.n_y = params.Phi_x.shape[0]
        self.n_u = params.Phi_u.shape[0]
        self._phi_u = params.Phi_u.coeffs          # tau = 1 .. T
        self._phi_x = params.Phi_x.coeffs[1:]      # tau = 2 .. T
        self._w_hat = History(self.T, self.n_y)
        self._x_hat = np.zeros(self.n_y)

    def reset(self):
        self._w_hat.clear()
        self._x_hat = np.zeros(self.n_y)

    def control(self, y):
        x = check_vector(y, self.n_y, "state measurement")
        self._w_hat.push(x - self._x_hat)
        win = self._w_hat.window(self.T)
        u = _apply(self._phi_u, win)
        self._x_hat = _apply(self._phi_x, win[:self.T - 1])
        return u


class OfSlsController(ControllerModel):
    """Output-feedback SLS controller.

        u[t]      = (I + Phi_uy[0] D22)^-1 (u'[t] + Phi_uy[0] y[t])
        u'[t]     = sum_{tau=1..T} Phi_ux[tau] beta[t+1-tau] + Phi_uy[tau] ybar[t-tau]
        beta[t+1] = -sum_{tau=2..T} Phi_xx[tau] beta[t+2-tau]
                    - sum_{tau=1..T} Phi_xy[tau] ybar[t+1-tau]
        ybar[t]   = y[t] - D22 u[t]

    ``beta`` is the internal state of the realization.  The time offsets
    follow from the block diagram with ``z(I - z Phi_xx)``, ``z Phi_ux`` and
    ``-z Phi_xy`` in the loop; they are validated against the closed-loop maps
    in the test suite.
    """

    def __init__(self, params, D22=None):
        self.params = params
        self.T = params.T
        n_x = params.Phi_xx.shape[0]
        self.n_u, self.n_y = params.Phi_uy.shape
        self.n_x = n_x
        self.D22 = np.zeros((self.n_y, self.n_u)) if D22 is None else np.atleast_2d(D22)
        if self.D22.shape != (self.n_y, self.n_u):
            raise DimensionMismatch(f"D22 has shape {self.D22.shape}, expected {(self.n_y, self.n_u)}")
        T = self.T
        self._uy0 = params.Phi_uy[0]
        gain = np.eye(self.n_u) + self._uy0 @ self.D22
        if not np.all(np.isfinite(gain)) or np.linalg.cond(gain) > 1e12:
            raise ConstructionError("I + Phi_uy[0] D22 is singular")
        self._M = np.linalg.inv(gain)
        self._ux = np.stack([params.Phi_ux[tau] for tau in range(1, T + 1)])
        self._uy = np.stack([params.Phi_uy[tau] for tau in range(1, T + 1)])
        self._xx = np.stack([params.Phi_xx[tau] for tau in range(2, T + 1)]) if T >= 2 \
            else np.zeros((0, n_x, n_x))
        self._xy = np.stack([params.Phi_xy[tau] for tau in range(1, T + 1)])
        self._beta = History(T, n_x)      # beta[t], beta[t-1], ...
        self._ybar = History(T, self.n_y)  # ybar[t-1], ybar[t-2], ...

    def reset(self):
        self._beta.clear()
        self._ybar.clear()

    def control(self, y):
        y = check_vector(y, self.n_y, "measurement")
        T = self.T
        beta = self._beta.window(T)
        u_prime = _apply(self._ux, beta) + _apply(self._uy, self._ybar.window(T))
        u = self._M @ (u_prime + self._uy0 @ y)
        self._ybar.push(y - self.D22 @ u)
        beta_next = -_apply(self._xx, beta[:T - 1]) - _apply(self._xy, self._ybar.window(T))
        self._beta.push(beta_next)
        return u


class FirFeedbackController(ControllerModel):
    """Realizes ``K = Y X^-1`` through an internal signal ``v``:

        v[t] = y[t] - sum_{tau=1..T} X[tau] v[t-tau]
        u[t] = sum_{tau=0..T} Y[tau] v[t-tau]

    so that ``y = X v`` and ``u = Y v``.  Requires ``X[0] = I``.
    """

    def __init__(self, X, Y):
        if X.start != 0 or Y.start != 0:
            raise ConstructionError("X and Y must start at index 0")
        if X.shape[0] != X.shape[1] or not np.allclose(X[0], np.eye(X.shape[0]), rtol=0, atol=1e-9):
            raise ConstructionError("X[0] must be the identity")
        if Y.shape[1] != X.shape[0]:
            raise DimensionMismatch(f"Y has {Y.shape[1]} columns, X has {X.shape[0]} rows")
        self.X, self.Y = X, Y
        self.n_y = X.shape[0]
        self.n_u = Y.shape[0]
        self._x_tail = X.coeffs[1:]
        self._y = Y.coeffs
        self._depth = max(X.T, Y.T + 1)
        self._v = History(self._depth, self.n_y)

    def reset(self):
        self._v.clear()

    def control(self, y):
        y = check_vector(y, self.n_y, "measurement")
        past = self._v.window(self.X.T)
        v = y - _apply(self._x_tail, past)
        self._v.push(v)
        return _apply(self._y, self._v.window(self.Y.T + 1))


class StaticGainController(ControllerModel):
    """``u = K y``; the zero gain gives the open loop."""

    def __init__(self, K):
        self.K = np.atleast_2d(np.asarray(K, dtype=float))
        self.n_u, self.n_y = self.K.shape

    def reset(self):
        pass

    def control(self, y):
        return self.K @ check_vector(y, self.n_y, "measurement")


def controller_from_blocks(blocks, D22=None):
    """Build the controller matching a set of named FIR blocks.

    ``{Phi_x, Phi_u}`` gives state feedback, ``{Phi_xx, Phi_ux, Phi_xy,
    Phi_uy}`` output feedback, ``{X, Y, ...}`` the input-output realization.
    """
    from .iop import IopParams
    from .sls.params import SlsParamsOF, SlsParamsSF

    names = set(blocks)
    if {"Phi_x", "Phi_u"} <= names:
        return SfSlsController(SlsParamsSF(blocks["Phi_x"], blocks["Phi_u"]))
    if {"Phi_xx", "Phi_ux", "Phi_xy", "Phi_uy"} <= names:
        p = SlsParamsOF(blocks["Phi_xx"], blocks["Phi_ux"], blocks["Phi_xy"], blocks["Phi_uy"])
        return OfSlsController(p, D22)
    if {"X", "Y"} <= names:
        return FirFeedbackController(blocks["X"], blocks["Y"])
    raise ConstructionError(f"cannot build a controller from blocks {sorted(names)}")
