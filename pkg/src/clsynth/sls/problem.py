"""Symbolic assembly of synthesis programs.

Variables are matrices registered by name; every spectral element of an FIR
block is its own variable, named ``"<block>[<tau>]"``.  Affine expressions
map the row-major vectorizations of variables to a vector, and objective
expressions are weighted sums of squared norms and l1 norms of affine
expressions.  :meth:`SynthesisProblem.to_program` flattens everything into a
:class:`~clsynth.qp.ConvexProgram`.
"""

import numpy as np
import scipy.sparse as sp

from ..errors import DimensionMismatch, NonConvexObjective
from ..fir import FirTransferMatrix
from ..qp import ConvexProgram, VariableRegistry

__all__ = ["AffineExpr", "Expression", "FirBlock", "SynthesisProblem", "element_name"]


def element_name(block, tau):
    return f"{block}[{tau}]"


class AffineExpr:
    """``sum_v C_v vec(v) + const`` with sparse coefficients ``C_v``."""

    def __init__(self, size, terms=None, const=None):
        self.size = int(size)
        self.terms = dict(terms or {})
        self.const = np.zeros(self.size) if const is None else \
            np.asarray(const, dtype=float).reshape(-1)
        if self.const.shape[0] != self.size:
            raise DimensionMismatch(f"constant has length {self.const.shape[0]}, expected {self.size}")

    @classmethod
    def constant(cls, M):
        v = np.asarray(M, dtype=float).reshape(-1)
        return cls(v.size, const=v)

    @classmethod
    def product(cls, L, name, shape, R=None):
        """``vec(L V R)`` for a variable ``V`` of the given shape.

        ``L`` and ``R`` default to identities.
        """
        a, b = shape
        L = sp.identity(a, format="csr") if L is None else sp.csr_matrix(np.atleast_2d(L))
        R = sp.identity(b, format="csr") if R is None else sp.csr_matrix(np.atleast_2d(R))
        if L.shape[1] != a or R.shape[0] != b:
            raise DimensionMismatch(
                f"cannot form L V R with L {L.shape}, V {shape}, R {R.shape}")
        coef = sp.kron(L, R.T, format="csr")
        return cls(coef.shape[0], {name: coef})

    def _check(self, other):
        if self.size != other.size:
            raise DimensionMismatch(f"adding expressions of size {self.size} and {other.size}")

    def __add__(self, other):
        if not isinstance(other, AffineExpr):
            other = AffineExpr.constant(other)
        self._check(other)
        terms = dict(self.terms)
        for name, coef in other.terms.items():
            terms[name] = terms[name] + coef if name in terms else coef
        return AffineExpr(self.size, terms, self.const + other.const)

    __radd__ = __add__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        if not isinstance(other, AffineExpr):
            other = AffineExpr.constant(other)
        return self + (-other)

    def __mul__(self, alpha):
        alpha = float(alpha)
        return AffineExpr(self.size, {n: alpha * c for n, c in self.terms.items()},
                          alpha * self.const)

    __rmul__ = __mul__

    @property
    def is_constant(self):
        return all(c.nnz == 0 for c in self.terms.values())

    def evaluate(self, values):
        out = self.const.copy()
        for name, coef in self.terms.items():
            out += coef @ np.asarray(values[name], dtype=float).reshape(-1)
        return out

    def to_global(self, registry):
        """Coefficient matrix over the registry's coordinates, plus constant."""
        rows, cols, data = [], [], []
        for name, coef in self.terms.items():
            coo = sp.coo_matrix(coef)
            idx = registry.index_map(name)[coo.col]
            keep = idx >= 0
            rows.append(coo.row[keep])
            cols.append(idx[keep])
            data.append(coo.data[keep])
        if rows:
            rows, cols, data = map(np.concatenate, (rows, cols, data))
        M = sp.csr_matrix((data, (rows, cols)), shape=(self.size, registry.size))
        M.sum_duplicates()
        return M, self.const


def _zero_const(size):
    return AffineExpr(size)


class Expression:
    """Scalar convex objective ``const + sum w ||a(phi)||^2 + sum w ||b(phi)||_1``.

    Supports addition and scaling by a nonnegative number; those are the
    operations objective modules use to modify the running objective.
    """

    def __init__(self, squares=(), l1=(), const=0.0):
        self.squares = list(squares)
        self.l1 = list(l1)
        self.const = float(const)

    @classmethod
    def zero(cls):
        return cls()

    @classmethod
    def sum_squares(cls, expr, weight=1.0):
        return cls(squares=[(expr, float(weight))])

    @classmethod
    def l1_norm(cls, expr, weight=1.0):
        if np.any(expr.const != 0):
            raise NonConvexObjective("l1 terms must be linear (no constant offset)")
        return cls(l1=[(expr, float(weight))])

    @property
    def is_constant(self):
        return not self.squares and not self.l1

    def __add__(self, other):
        if isinstance(other, (int, float)):
            return Expression(self.squares, self.l1, self.const + other)
        return Expression(self.squares + other.squares, self.l1 + other.l1,
                          self.const + other.const)

    __radd__ = __add__

    def __mul__(self, alpha):
        alpha = float(alpha)
        if alpha < 0 and not self.is_constant:
            raise NonConvexObjective(f"scaling a convex objective by {alpha} < 0")
        return Expression([(e, w * alpha) for e, w in self.squares],
                          [(e, w * alpha) for e, w in self.l1], self.const * alpha)

    __rmul__ = __mul__

    def evaluate(self, values):
        val = self.const
        for expr, w in self.squares:
            v = expr.evaluate(values)
            val += w * float(v @ v)
        for expr, w in self.l1:
            val += w * float(np.sum(np.abs(expr.evaluate(values))))
        return val


class FirBlock:
    """An FIR matrix variable: elements ``start .. T`` of the given shape."""

    def __init__(self, name, shape, start, T):
        self.name, self.shape, self.start, self.T = name, tuple(shape), start, T

    def taus(self):
        return range(self.start, self.T + 1)

    def element(self, tau):
        return element_name(self.name, tau)

    def __contains__(self, tau):
        return self.start <= tau <= self.T


class SynthesisProblem:
    """Variables, affine equalities and bookkeeping for one synthesis program.

    Objective and constraint modules receive this object as their symbolic
    view of the closed-loop maps: :meth:`term` builds ``L Phi[tau] R`` for any
    block and spectral index (zero outside the block's range).
    """

    def __init__(self, system, T, mode):
        self.system = system
        self.T = T
        self.mode = mode
        self.registry = VariableRegistry()
        self.blocks = {}
        self.equalities = []

    def add_block(self, name, shape, start, T=None):
        block = FirBlock(name, shape, start, self.T if T is None else T)
        for tau in block.taus():
            self.registry.add(block.element(tau), block.shape)
        self.blocks[name] = block
        return block

    def __getitem__(self, name):
        return self.blocks[name]

    def term(self, L, block, tau, R=None):
        blk = self.blocks[block]
        a = blk.shape[0] if L is None else np.atleast_2d(L).shape[0]
        b = blk.shape[1] if R is None else np.atleast_2d(R).shape[1]
        if tau not in blk:
            return _zero_const(a * b)
        return AffineExpr.product(L, blk.element(tau), blk.shape, R)

    def add_equality(self, expr, label=None):
        """Require ``expr == 0``."""
        self.equalities.append((expr, label))

    def set_support(self, block, mask):
        """Zero the entries outside ``mask`` in every element of ``block``."""
        blk = self.blocks[block]
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != blk.shape:
            raise DimensionMismatch(
                f"support mask for {block} has shape {mask.shape}, block has {blk.shape}")
        for tau in blk.taus():
            self.registry.set_mask(blk.element(tau), mask)

    def equality_system(self):
        mats, rhs = [], []
        for expr, _ in self.equalities:
            M, const = expr.to_global(self.registry)
            mats.append(M)
            rhs.append(-const)
        if not mats:
            return sp.csr_matrix((0, self.registry.size)), np.zeros(0)
        return sp.vstack(mats, format="csr"), np.concatenate(rhs)

    def to_program(self, objective):
        n = self.registry.size
        Q = sp.csr_matrix((n, n))
        q = np.zeros(n)
        c = objective.const
        for expr, w in objective.squares:
            if w == 0:
                continue
            M, b = expr.to_global(self.registry)
            Q = Q + 2.0 * w * (M.T @ M)
            q += 2.0 * w * (M.T @ b)
            c += w * float(b @ b)
        R_parts, lam = [], []
        for expr, w in objective.l1:
            M, _ = expr.to_global(self.registry)
            R_parts.append(M)
            lam.append(np.full(M.shape[0], w))
        E, e = self.equality_system()
        if R_parts:
            R = sp.vstack(R_parts, format="csr")
            lam = np.concatenate(lam)
            # rows that only touched masked entries carry no cost
            live = np.diff(R.indptr) > 0
            R, lam = R[live], lam[live]
        else:
            R, lam = None, None
        return ConvexProgram(Q, q, E, e, R, lam, c)

    def values(self, phi):
        return self.registry.unflatten(phi)

    def extract(self, phi):
        """Solution as a dict of :class:`FirTransferMatrix` per block."""
        vals = self.values(phi)
        return {name: FirTransferMatrix(np.stack([vals[blk.element(t)] for t in blk.taus()]),
                                        blk.start)
                for name, blk in self.blocks.items()}

    def flatten_blocks(self, firs):
        """Inverse of :meth:`extract` for the ``values`` dict used by expressions."""
        vals = {}
        for name, blk in self.blocks.items():
            for tau in blk.taus():
                vals[blk.element(tau)] = firs[name][tau]
        return vals
