"""Discrete-time LTI plants.

    x[t+1] = A x[t] + B1 w[t] + B2 u[t]
    z[t]   = C1 x[t] + D11 w[t] + D12 u[t]
    y[t]   = C2 x[t] + D21 w[t] + D22 u[t]
"""

import math
import os

import numpy as np

from .errors import DimensionMismatch, InvalidArgument, NumericalFailure
from .framework import Dims, SystemModel, check_vector

__all__ = ["LTISystem", "make_chain", "center_node", "spectral_radius",
           "load_matrix", "load_system"]

MATRIX_NAMES = ("A", "B1", "B2", "C1", "D11", "D12", "C2", "D21", "D22")


class LTISystem(SystemModel):
    """State-space plant; unspecified matrices default to zero blocks."""

    def __init__(self, A, B2, B1=None, C1=None, D11=None, D12=None,
                 C2=None, D21=None, D22=None, x0=None):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        B2 = np.atleast_2d(np.asarray(B2, dtype=float))
        if A.shape[0] != A.shape[1]:
            raise DimensionMismatch(f"A must be square, got {A.shape}")
        n_x = A.shape[0]
        n_u = B2.shape[1]
        B1 = np.eye(n_x) if B1 is None else np.atleast_2d(np.asarray(B1, dtype=float))
        C2 = np.eye(n_x) if C2 is None else np.atleast_2d(np.asarray(C2, dtype=float))
        C1 = np.zeros((0, n_x)) if C1 is None else np.atleast_2d(np.asarray(C1, dtype=float))
        n_w, n_y, n_z = B1.shape[1], C2.shape[0], C1.shape[0]

        def fill(M, shape):
            if M is None:
                return np.zeros(shape)
            M = np.asarray(M, dtype=float)
            return M.reshape(shape) if M.size == 0 else np.atleast_2d(M)

        self.A, self.B1, self.B2 = A, B1, B2
        self.C1, self.C2 = C1, C2
        self.D11 = fill(D11, (n_z, n_w))
        self.D12 = fill(D12, (n_z, n_u))
        self.D21 = fill(D21, (n_y, n_w))
        self.D22 = fill(D22, (n_y, n_u))
        self._dims = Dims(n_x, n_u, n_w, n_y, n_z)
        self._check()
        self.x0 = np.zeros(n_x) if x0 is None else check_vector(x0, n_x, "x0")
        self._x = self.x0.copy()

    def _check(self):
        n_x, n_u, n_w, n_y, n_z = self._dims
        expected = {
            "A": (n_x, n_x), "B1": (n_x, n_w), "B2": (n_x, n_u),
            "C1": (n_z, n_x), "D11": (n_z, n_w), "D12": (n_z, n_u),
            "C2": (n_y, n_x), "D21": (n_y, n_w), "D22": (n_y, n_u),
        }
        for name, shape in expected.items():
            got = getattr(self, name).shape
            if got != shape:
                raise DimensionMismatch(f"{name} has shape {got}, expected {shape}")

    @property
    def dims(self):
        return self._dims

    @property
    def state(self):
        return self._x.copy()

    @property
    def has_feedthrough(self):
        return bool(np.any(self.D22 != 0))

    def matrices(self):
        return {name: getattr(self, name) for name in MATRIX_NAMES}

    def copy(self, **overrides):
        x0 = overrides.pop("x0", self.x0)
        mats = self.matrices()
        mats.update(overrides)
        return LTISystem(x0=x0, **mats)

    def reset(self):
        self._x = self.x0.copy()

    def measure(self, w):
        w = check_vector(w, self._dims.n_w, "w")
        return self.C2 @ self._x + self.D21 @ w

    def step(self, u, w):
        u = check_vector(u, self._dims.n_u, "u")
        w = check_vector(w, self._dims.n_w, "w")
        x = self._x
        y = self.C2 @ x + self.D21 @ w + self.D22 @ u
        z = self.C1 @ x + self.D11 @ w + self.D12 @ u
        self._x = self.A @ x + self.B1 @ w + self.B2 @ u
        return self._x.copy(), y, z

    def __repr__(self):
        return "LTISystem(n_x={}, n_u={}, n_w={}, n_y={}, n_z={})".format(*self._dims)


def make_chain(n, sigma=0.0):
    """Fully actuated chain of ``n`` nodes with nearest-neighbour coupling.

    The state matrix is tridiagonal (0.4 on the two end nodes, 0.3 inside,
    0.1 between neighbours) and has spectral radius 0.5.  The regulated output
    penalizes state and control equally, ``C1 = [I; 0]``, ``D12 = [0; I]``,
    and every node is measured, ``C2 = I``.

    With ``sigma == 0`` the noise enters the state only (``B1 = I``,
    ``D21 = 0``).  With ``sigma > 0`` the noise vector gains ``n`` sensor
    channels: ``B1 = [I 0]`` and ``D21 = [0 sigma*I]``.
    """
    if int(n) != n or n < 2:
        raise InvalidArgument(f"chain needs at least 2 nodes, got {n!r}")
    if sigma < 0:
        raise InvalidArgument(f"sigma must be nonnegative, got {sigma}")
    n = int(n)
    A = 0.3 * np.eye(n) + 0.1 * (np.eye(n, k=1) + np.eye(n, k=-1))
    A[0, 0] = A[-1, -1] = 0.4
    eye, zero = np.eye(n), np.zeros((n, n))
    if sigma > 0:
        B1 = np.hstack([eye, zero])
        D21 = np.hstack([zero, sigma * eye])
    else:
        B1, D21 = eye, zero
    return LTISystem(
        A=A, B1=B1, B2=eye,
        C1=np.vstack([eye, zero]), D12=np.vstack([zero, eye]),
        C2=eye, D21=D21,
    )


def center_node(n):
    """0-based index of the middle node of an ``n``-node chain (node ceil(n/2))."""
    return math.ceil(n / 2) - 1


def spectral_radius(A):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"spectral radius needs a square matrix, got {A.shape}")
    if A.size == 0:
        return 0.0
    try:
        eig = np.linalg.eigvals(A)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"eigenvalue iteration did not converge: {exc}") from exc
    return float(np.max(np.abs(eig)))


def load_matrix(path):
    """Read a matrix from text: one row per line, whitespace-separated entries."""
    try:
        M = np.loadtxt(path, ndmin=2)
    except ValueError as exc:
        raise InvalidArgument(f"{path}: {exc}") from exc
    return M


def load_system(directory):
    """Build an :class:`LTISystem` from ``<name>.txt`` files in ``directory``.

    ``A.txt`` and ``B2.txt`` are required; the remaining matrices fall back to
    the defaults of :class:`LTISystem`.
    """
    mats = {}
    for name in MATRIX_NAMES:
        path = os.path.join(directory, name + ".txt")
        if os.path.exists(path):
            mats[name] = load_matrix(path)
    missing = [m for m in ("A", "B2") if m not in mats]
    if missing:
        raise InvalidArgument(f"{directory}: missing required matrices {missing}")
    return LTISystem(**mats)
