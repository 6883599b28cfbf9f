"""Convex programs with affine equality constraints.

Problems have the form

    minimize    1/2 phi' Q phi + q' phi + c + sum_i lam_i |R_i phi|
    subject to  E phi = e

Without the l1 term the KKT system is factored directly (:func:`solve_qp`);
with it, ADMM splits off ``z = R phi`` and soft-thresholds (:func:`solve_admm`).
Both solvers first split the program into independent blocks of variables
(connected components of the coupling graph) and solve each block on its own.
"""

from dataclasses import dataclass, field
import logging
import warnings

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.linalg import lu_factor, lu_solve
from scipy.sparse.linalg import lsqr, splu

from .errors import DimensionMismatch, Infeasible, NumericalFailure

__all__ = [
    "VariableRegistry",
    "ConvexProgram",
    "QPSolution",
    "ADMMSolution",
    "MaxIterationsWarning",
    "solve_qp",
    "solve_admm",
    "kkt_residuals",
    "l1_stationarity",
    "write_triplets",
    "read_triplets",
]

log = logging.getLogger(__name__)

PRIMAL_TOL = 1e-9
STATIONARITY_TOL = 1e-7
INFEASIBLE_TOL = 1e-6
PRIMAL_REG = 1e-10
DUAL_REG = 1e-9
DENSE_MAX = 6000
DENSE_FILL = 0.05


class MaxIterationsWarning(RuntimeWarning):
    pass


class VariableRegistry:
    """Named matrix variables flattened (row-major) into one coordinate vector.

    Entries switched off by a support mask get no coordinate at all, so they
    are exactly zero in every solution.
    """

    def __init__(self):
        self._shapes = {}
        self._masks = {}
        self._layout = None

    def add(self, name, shape, mask=None):
        if name in self._shapes:
            raise ValueError(f"variable {name!r} already registered")
        self._shapes[name] = tuple(shape)
        self._layout = None
        if mask is not None:
            self.set_mask(name, mask)
        return name

    def __contains__(self, name):
        return name in self._shapes

    def __iter__(self):
        return iter(self._shapes)

    def shape(self, name):
        return self._shapes[name]

    def full_size(self, name):
        return int(np.prod(self._shapes[name]))

    def set_mask(self, name, mask):
        """Restrict ``name`` to the entries where ``mask`` is true.

        Repeated calls intersect the masks.
        """
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != self._shapes[name]:
            raise DimensionMismatch(
                f"mask for {name!r} has shape {mask.shape}, variable has {self._shapes[name]}")
        if name in self._masks:
            mask = mask & self._masks[name]
        self._masks[name] = mask
        self._layout = None

    def mask(self, name):
        return self._masks.get(name, np.ones(self._shapes[name], dtype=bool))

    def _build(self):
        offsets, maps = {}, {}
        pos = 0
        for name, shape in self._shapes.items():
            keep = self.mask(name).reshape(-1)
            idx = np.full(keep.size, -1, dtype=np.int64)
            idx[keep] = np.arange(pos, pos + keep.sum())
            maps[name] = idx
            offsets[name] = pos
            pos += int(keep.sum())
        self._layout = (maps, offsets, pos)

    @property
    def size(self):
        if self._layout is None:
            self._build()
        return self._layout[2]

    def index_map(self, name):
        """Coordinate of each (row-major) entry of ``name``, -1 where masked."""
        if self._layout is None:
            self._build()
        return self._layout[0][name]

    def unflatten(self, phi):
        phi = np.asarray(phi, dtype=float)
        out = {}
        for name, shape in self._shapes.items():
            idx = self.index_map(name)
            vals = np.zeros(idx.size)
            keep = idx >= 0
            vals[keep] = phi[idx[keep]]
            out[name] = vals.reshape(shape)
        return out

    def flatten(self, values):
        phi = np.zeros(self.size)
        for name, val in values.items():
            idx = self.index_map(name)
            flat = np.asarray(val, dtype=float).reshape(-1)
            keep = idx >= 0
            phi[idx[keep]] = flat[keep]
        return phi


@dataclass
class ConvexProgram:
    Q: sp.spmatrix
    q: np.ndarray
    E: sp.spmatrix
    e: np.ndarray
    R: sp.spmatrix = None
    lam: np.ndarray = None
    c: float = 0.0

    def __post_init__(self):
        self.Q = sp.csr_matrix(self.Q, dtype=float)
        self.q = np.asarray(self.q, dtype=float).reshape(-1)
        n = self.q.shape[0]
        self.E = sp.csr_matrix(self.E, dtype=float) if self.E is not None else sp.csr_matrix((0, n))
        self.e = np.asarray(self.e, dtype=float).reshape(-1)
        if self.R is None:
            self.R = sp.csr_matrix((0, n))
            self.lam = np.zeros(0)
        else:
            self.R = sp.csr_matrix(self.R, dtype=float)
            self.lam = np.broadcast_to(np.asarray(self.lam, dtype=float),
                                       (self.R.shape[0],)).copy()
        if self.Q.shape != (n, n):
            raise DimensionMismatch(f"Q has shape {self.Q.shape}, expected {(n, n)}")
        if self.E.shape[1] != n or self.E.shape[0] != self.e.shape[0]:
            raise DimensionMismatch(f"E has shape {self.E.shape}, e has {self.e.shape}")
        if self.R.shape[1] != n:
            raise DimensionMismatch(f"R has {self.R.shape[1]} columns, expected {n}")
        if np.any(self.lam < 0):
            raise ValueError("l1 weights must be nonnegative")

    @property
    def n(self):
        return self.q.shape[0]

    @property
    def has_l1(self):
        return self.R.shape[0] > 0 and bool(np.any(self.lam > 0))

    def objective(self, phi):
        phi = np.asarray(phi, dtype=float)
        val = 0.5 * phi @ (self.Q @ phi) + self.q @ phi + self.c
        if self.R.shape[0]:
            val += float(self.lam @ np.abs(self.R @ phi))
        return float(val)

    def subprogram(self, cols, eq_rows, l1_rows):
        return ConvexProgram(
            self.Q[cols][:, cols], self.q[cols],
            self.E[eq_rows][:, cols], self.e[eq_rows],
            self.R[l1_rows][:, cols], self.lam[l1_rows])


@dataclass
class QPSolution:
    x: np.ndarray
    nu: np.ndarray
    objective: float
    primal_residual: float
    stationarity: float
    components: int = 1


@dataclass
class ADMMSolution:
    x: np.ndarray
    nu: np.ndarray
    s: np.ndarray  # l1 subgradient, lam * s enters the stationarity condition
    objective: float
    converged: bool
    iterations: int
    primal_residual: float
    polished: bool = False
    history: list = field(default_factory=list, repr=False)


def kkt_residuals(program, x, nu):
    """Return ``(max|E x - e|, max|Q x + q + E' nu|)``."""
    primal = program.E @ x - program.e
    stat = program.Q @ x + program.q + program.E.T @ nu
    return (float(np.max(np.abs(primal), initial=0.0)),
            float(np.max(np.abs(stat), initial=0.0)))


def stationarity_scale(program, x, nu):
    """Magnitude of the terms summed in the stationarity residual (at least 1).

    Ill-conditioned constraints can force multipliers far above the data
    scale; the rounding error of ``E' nu`` then grows with them.
    """
    terms = (np.abs(program.q), np.abs(program.Q @ x), abs(program.E).T @ np.abs(nu))
    return max(1.0, *(float(np.max(t, initial=0.0)) for t in terms))


def l1_stationarity(program, x, nu, s, sign_tol=1e-7):
    """Stationarity residual of an l1-regularized solution.

    Checks ``Q x + q + E' nu + R' (lam * s) = 0`` with ``s`` a subgradient of
    ``|.|`` at ``R x``: ``|s| <= 1`` everywhere and ``s = sign(R x)`` where
    ``|R x| > sign_tol``.  Returns ``inf`` if ``s`` is not a valid subgradient.
    """
    s = np.asarray(s, dtype=float)
    if s.shape[0] != program.R.shape[0]:
        return float("inf")
    rx = program.R @ x
    active = (np.abs(rx) > sign_tol) & (program.lam > 0)
    if np.any(np.abs(s[program.lam > 0]) > 1 + 1e-9):
        return float("inf")
    if np.any(np.abs(s[active] - np.sign(rx[active])) > 1e-6):
        return float("inf")
    g = program.Q @ x + program.q + program.E.T @ nu + program.R.T @ (program.lam * s)
    return float(np.max(np.abs(g), initial=0.0))


class _KKT:
    """Regularized KKT factorization with iterative refinement.

    ``[[Q + eps I, E'], [E, -delta I]]`` is quasi-definite and therefore
    always factorable; refinement against the unregularized matrix then
    removes the regularization error.  Redundant (but consistent) equality
    rows and variables the objective does not see are handled the same way.
    """

    def __init__(self, Q, E, eps=PRIMAL_REG, delta=DUAL_REG):
        n, m = Q.shape[0], E.shape[0]
        self.n, self.m = n, m
        self.K = sp.bmat([[Q, E.T], [E, sp.csr_matrix((m, m))]], format="csc")
        scale = max(1.0, abs(self.K).max()) if self.K.nnz else 1.0
        reg = np.concatenate([np.full(n, eps * scale), np.full(m, -delta * scale)])
        K_reg = (self.K + sp.diags(reg)).tocsc()
        size = n + m
        # dense LAPACK beats SuperLU once the matrix has little sparsity left
        if size <= DENSE_MAX and K_reg.nnz > DENSE_FILL * size * size:
            factor = lu_factor(K_reg.toarray(), check_finite=False)
            self._solve = lambda r: lu_solve(factor, r, check_finite=False)
        else:
            try:
                lu = splu(K_reg)
            except RuntimeError as exc:
                raise NumericalFailure(f"KKT factorization failed: {exc}") from exc
            self._solve = lu.solve
        self.scale = scale

    def solve(self, rhs, max_refine=60, tol=1e-14):
        rhs = np.asarray(rhs, dtype=float)
        sol = self._solve(rhs)
        best, best_res = sol, np.inf
        target = tol * max(1.0, np.max(np.abs(rhs), initial=0.0))
        stall = 0
        for _ in range(max_refine):
            r = rhs - self.K @ sol
            res = np.max(np.abs(r), initial=0.0)
            if not np.isfinite(res):
                break
            if res < best_res:
                stall = 0 if res < 0.5 * best_res else stall + 1
                best, best_res = sol, res
            else:
                stall += 1
            if res <= target or stall >= 4:
                break
            sol = sol + self._solve(r)
        if not np.all(np.isfinite(best)):
            raise NumericalFailure("KKT solve produced non-finite values")
        return best[:self.n], best[self.n:]


def _components(program):
    """Partition variables and rows into independent blocks.

    Returns a list of ``(cols, eq_rows, l1_rows)`` index arrays, plus the
    equality rows that touch no variable at all.
    """
    n, m, k = program.n, program.E.shape[0], program.R.shape[0]
    Qp = (program.Q != 0).astype(np.int8)
    Ep = (program.E != 0).astype(np.int8)
    Rp = (program.R != 0).astype(np.int8)
    adj = sp.bmat([[Qp, Ep.T, Rp.T],
                   [Ep, sp.csr_matrix((m, m)), sp.csr_matrix((m, k))],
                   [Rp, sp.csr_matrix((k, m)), sp.csr_matrix((k, k))]], format="csr")
    _, labels = connected_components(adj, directed=False)
    var_labels, eq_labels, l1_labels = labels[:n], labels[n:n + m], labels[n + m:]
    blocks = []
    for lab in np.unique(var_labels):
        blocks.append((np.flatnonzero(var_labels == lab),
                       np.flatnonzero(eq_labels == lab),
                       np.flatnonzero(l1_labels == lab)))
    orphan = np.flatnonzero(~np.isin(eq_labels, var_labels))
    return blocks, orphan


def _least_squares_residual(E, e):
    if E.shape[0] == 0:
        return 0.0
    sol = lsqr(E, e, atol=1e-14, btol=1e-14, iter_lim=20 * max(E.shape))[0]
    return float(np.max(np.abs(E @ sol - e)))


def _check_orphans(program, orphan):
    if orphan.size:
        bad = float(np.max(np.abs(program.e[orphan])))
        if bad > INFEASIBLE_TOL:
            raise Infeasible("equality constraint with no free variable is violated", bad)


def _nullspace_solve(sub):
    """Dense solve through an SVD basis of the constraint null space."""
    E = sub.E.toarray()
    Q = sub.Q.toarray()
    U, sv, Vt = np.linalg.svd(E, full_matrices=True)
    tol = max(E.shape) * np.finfo(float).eps * (sv[0] if sv.size else 0.0)
    rank = int(np.sum(sv > tol))
    x0 = Vt[:rank].T @ ((U[:, :rank].T @ sub.e) / sv[:rank])
    N = Vt[rank:].T
    if N.shape[1]:
        H = N.T @ Q @ N
        g = N.T @ (Q @ x0 + sub.q)
        z = np.linalg.lstsq(H, -g, rcond=None)[0]
        x = x0 + N @ z
    else:
        x = x0
    grad = Q @ x + sub.q
    nu = np.linalg.lstsq(E.T, -grad, rcond=None)[0] if E.shape[0] else np.zeros(0)
    return x, nu


def _solve_block(sub):
    rhs = np.concatenate([-sub.q, sub.e])
    x, nu = _KKT(sub.Q, sub.E).solve(rhs)
    primal, stat = kkt_residuals(sub, x, nu)
    if primal > PRIMAL_TOL:
        # Constraints with singular values near the regularization make the
        # refinement stall; an orthogonal null-space solve does not.
        if sub.n + sub.E.shape[0] <= DENSE_MAX:
            x2, nu2 = _nullspace_solve(sub)
            p2, s2 = kkt_residuals(sub, x2, nu2)
            if p2 < primal and np.isfinite(s2):
                x, nu, primal = x2, nu2, p2
    if primal > PRIMAL_TOL:
        ls = _least_squares_residual(sub.E, sub.e)
        if ls > INFEASIBLE_TOL:
            raise Infeasible("equality constraints are inconsistent", ls)
        if primal > INFEASIBLE_TOL:
            raise NumericalFailure(f"primal residual {primal:.3e} after refinement")
    return x, nu


def solve_qp(program, check=True):
    """Solve an equality-constrained QP (the l1 part, if any, is ignored).

    Raises :class:`~clsynth.errors.InfeasibleSynthesis` when the equality
    constraints admit no solution, and :class:`NumericalFailure` when the
    returned point misses the residual bounds.
    """
    blocks, orphan = _components(program)
    _check_orphans(program, orphan)
    x = np.zeros(program.n)
    nu = np.zeros(program.E.shape[0])
    for cols, eq_rows, l1_rows in blocks:
        sub = program.subprogram(cols, eq_rows, l1_rows)
        xb, nub = _solve_block(sub)
        x[cols] = xb
        nu[eq_rows] = nub
    primal, stat = kkt_residuals(program, x, nu)
    scale = stationarity_scale(program, x, nu)
    if check and (primal > PRIMAL_TOL or stat > STATIONARITY_TOL * scale):
        raise NumericalFailure(
            f"KKT certificate failed: primal {primal:.3e}, stationarity {stat:.3e}")
    quad_only = 0.5 * x @ (program.Q @ x) + program.q @ x + program.c
    return QPSolution(x, nu, float(quad_only), primal, stat, len(blocks))


def _soft_threshold(v, kappa):
    return np.sign(v) * np.maximum(np.abs(v) - kappa, 0.0)


def _is_selection(R):
    R = sp.csr_matrix(R)
    if R.nnz != R.shape[0] or np.any(np.diff(R.indptr) != 1):
        return False
    return bool(np.all(R.data == 1.0)) and len(np.unique(R.indices)) == R.shape[0]


def _admm_block(sub, rho, max_iter, eps_abs, eps_rel):
    R, lam = sub.R, sub.lam
    kkt = _KKT((sub.Q + rho * (R.T @ R)).tocsr(), sub.E)
    x = np.zeros(sub.n)
    nu = np.zeros(sub.E.shape[0])
    z = np.zeros(R.shape[0])
    u = np.zeros(R.shape[0])
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        lin = sub.q + rho * (R.T @ (u - z))
        x, nu = kkt.solve(np.concatenate([-lin, sub.e]), max_refine=8)
        rx = R @ x
        z_old = z
        z = _soft_threshold(rx + u, lam / rho)
        u = u + rx - z
        r_prim = np.max(np.abs(rx - z), initial=0.0)
        r_dual = rho * np.max(np.abs(R.T @ (z - z_old)), initial=0.0)
        tol_p = max(eps_abs, eps_rel * max(np.max(np.abs(rx), initial=0.0),
                                           np.max(np.abs(z), initial=0.0)))
        tol_d = max(eps_abs, eps_rel * rho * np.max(np.abs(R.T @ u), initial=0.0))
        if r_prim <= tol_p and r_dual <= tol_d:
            converged = True
            break
    # Scaled dual u relates to the l1 subgradient by lam * s = rho * u.
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(lam > 0, rho * u / lam, 0.0)
    return x, nu, z, s, converged, it


def _polish(sub, z):
    """Re-solve with the zero pattern and signs of ``z`` fixed.

    For a selection ``R`` this is an equality-constrained QP whose solution,
    when the guessed pattern is right, is the exact optimum.  Returns ``None``
    if the pattern fails the optimality check.
    """
    R, lam = sub.R, sub.lam
    zero = (z == 0) & (lam > 0)
    sign = np.sign(z)
    fixed = sp.csr_matrix(R[np.flatnonzero(zero)])
    lin = sub.q + R.T @ (lam * sign * ~zero)
    aug = ConvexProgram(sub.Q, lin, sp.vstack([sub.E, fixed]).tocsr(),
                        np.concatenate([sub.e, np.zeros(fixed.shape[0])]))
    try:
        x, nu_all = _solve_block(aug)
    except (Infeasible, NumericalFailure):
        return None
    nu = nu_all[:sub.E.shape[0]]
    mu = nu_all[sub.E.shape[0]:]
    s = sign.astype(float)
    s[np.flatnonzero(zero)] = mu / lam[zero]
    if l1_stationarity(sub, x, nu, s) > STATIONARITY_TOL * stationarity_scale(sub, x, nu):
        return None
    return x, nu, s


def solve_admm(program, rho=1.0, max_iter=10000, eps_abs=1e-8, eps_rel=1e-6, polish=True):
    """Solve an l1-regularized program by ADMM.

    Stops when primal and dual residuals fall below
    ``max(eps_abs, eps_rel * scale)``.  When ``R`` selects coordinates the
    result is polished by an exact re-solve on the detected support.  If the
    iteration cap is reached, the last iterate is returned with
    ``converged=False`` and a :class:`MaxIterationsWarning` is emitted.
    """
    if rho <= 0:
        raise ValueError(f"rho must be positive, got {rho}")
    blocks, orphan = _components(program)
    _check_orphans(program, orphan)
    x = np.zeros(program.n)
    nu = np.zeros(program.E.shape[0])
    s = np.zeros(program.R.shape[0])
    all_converged, all_polished, iterations = True, True, 0
    for cols, eq_rows, l1_rows in blocks:
        sub = program.subprogram(cols, eq_rows, l1_rows)
        if not sub.has_l1:
            xb, nub = _solve_block(sub)
            sb = np.zeros(l1_rows.size)
            polished = True
        else:
            xb, nub, zb, sb, conv, it = _admm_block(sub, rho, max_iter, eps_abs, eps_rel)
            iterations = max(iterations, it)
            all_converged &= conv
            polished = False
            if polish and _is_selection(sub.R):
                result = _polish(sub, zb)
                if result is not None:
                    xb, nub, sb = result
                    polished = True
        all_polished &= polished
        x[cols], nu[eq_rows], s[l1_rows] = xb, nub, sb
    if not all_converged:
        warnings.warn(f"ADMM hit the iteration cap ({max_iter})", MaxIterationsWarning)
    primal, _ = kkt_residuals(program, x, nu)
    return ADMMSolution(x, nu, s, program.objective(x), all_converged, iterations,
                        primal, polished=all_polished)


# Sparse triplet dump, for cross-checking against external solvers:
#
#   n <vars> m <rows>
#   Q <nnz>      followed by nnz lines "i j value" (0-based)
#   q            followed by n lines "value"
#   E <nnz>      followed by nnz lines "i j value"
#   e            followed by m lines "value"

def write_triplets(program, path):
    with open(path, "w") as fh:
        fh.write(f"n {program.n} m {program.E.shape[0]}\n")
        for name, M, v in (("Q", program.Q, program.q), ("E", program.E, program.e)):
            coo = sp.coo_matrix(M)
            fh.write(f"{name} {coo.nnz}\n")
            for i, j, val in zip(coo.row, coo.col, coo.data):
                fh.write(f"{i} {j} {val:.17g}\n")
            fh.write(name.lower() + "\n")
            for val in v:
                fh.write(f"{val:.17g}\n")


def read_triplets(path):
    with open(path) as fh:
        tokens = fh.read().split("\n")
    it = iter(t for t in tokens if t.strip())
    head = next(it).split()
    n, m = int(head[1]), int(head[3])
    out = {}
    for name, shape, vlen in (("Q", (n, n), n), ("E", (m, n), m)):
        label, nnz = next(it).split()
        rows, cols, vals = [], [], []
        for _ in range(int(nnz)):
            i, j, val = next(it).split()
            rows.append(int(i)), cols.append(int(j)), vals.append(float(val))
        out[name] = sp.csr_matrix((vals, (rows, cols)), shape=shape)
        next(it)
        out[name.lower()] = np.array([float(next(it)) for _ in range(vlen)])
    return ConvexProgram(out["Q"], out["q"], out["E"], out["e"])
