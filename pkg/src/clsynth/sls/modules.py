"""Objective and constraint modules for SLS programs.

An objective module maps the running objective ``h`` to a new one, so a list
of modules composes as ``g = ... g3(Phi, g2(Phi, g1(Phi, 0)))``.  Constraint
modules subclass objective modules and also emit constraints.  A constraint
that adds auxiliary variables may want to penalize them, so constraint
modules are folded into ``h`` ahead of the plain objectives.
"""

import numpy as np

from ..errors import DimensionMismatch
from .problem import AffineExpr, Expression

__all__ = [
    "ObjectiveModule",
    "ConstraintModule",
    "H2Objective",
    "LQGObjective",
    "Mul",
    "ElementL1",
    "SupportConstraint",
    "SFAchievability",
    "OFAchievability",
    "compose_objectives",
]


class ObjectiveModule:
    def compose(self, phi, h):
        """Return the objective after this module, given the running ``h``."""
        raise NotImplementedError


class ConstraintModule(ObjectiveModule):
    def emit(self, phi):
        """Register constraints on ``phi``; return a list of expressions that must vanish."""
        return []

    def compose(self, phi, h):
        return h


def compose_objectives(modules, phi):
    """Fold the modules over ``h = 0``, constraint modules first (order kept within each group)."""
    ordered = [m for m in modules if isinstance(m, ConstraintModule)] + \
              [m for m in modules if not isinstance(m, ConstraintModule)]
    h = Expression.zero()
    for module in ordered:
        h = module.compose(phi, h)
    return h


def _weights(system, C1, D12):
    C1 = system.C1 if C1 is None else np.atleast_2d(np.asarray(C1, dtype=float))
    D12 = system.D12 if D12 is None else np.atleast_2d(np.asarray(D12, dtype=float))
    if C1.shape[0] != D12.shape[0]:
        raise DimensionMismatch(f"C1 has {C1.shape[0]} rows, D12 has {D12.shape[0]}")
    return C1, D12


class H2Objective(ObjectiveModule):
    """Squared H2 norm of the regulated closed loop, added to ``h``.

    State feedback: ``||[C1 D12][Phi_x; Phi_u]||^2``.  Output feedback:
    ``||[C1 D12][[Phi_xx, Phi_xy], [Phi_ux, Phi_uy]][B1; D21]||^2``, the LQG
    cost for unit-intensity white ``w``.  Weights default to the system's.
    """

    def __init__(self, C1=None, D12=None, B1=None, D21=None):
        self.C1, self.D12, self.B1, self.D21 = C1, D12, B1, D21

    def compose(self, phi, h):
        C1, D12 = _weights(phi.system, self.C1, self.D12)
        if phi.mode == "sf":
            terms = [phi.term(C1, "Phi_x", tau) + phi.term(D12, "Phi_u", tau)
                     for tau in range(1, phi.T + 1)]
        else:
            B1 = phi.system.B1 if self.B1 is None else np.atleast_2d(self.B1)
            D21 = phi.system.D21 if self.D21 is None else np.atleast_2d(self.D21)
            terms = [phi.term(C1, "Phi_xx", tau, B1) + phi.term(C1, "Phi_xy", tau, D21)
                     + phi.term(D12, "Phi_ux", tau, B1) + phi.term(D12, "Phi_uy", tau, D21)
                     for tau in range(0, phi.T + 1)]
        out = h
        for expr in terms:
            out = out + Expression.sum_squares(expr)
        return out


class LQGObjective(H2Objective):
    """Output-feedback H2 objective; ``B1``/``D21`` encode the expected noise."""

    def compose(self, phi, h):
        if phi.mode != "of":
            raise DimensionMismatch("the LQG objective needs output-feedback parameters")
        return super().compose(phi, h)


class Mul(ObjectiveModule):
    """``h -> alpha * h``."""

    def __init__(self, alpha):
        self.alpha = float(alpha)

    def compose(self, phi, h):
        return self.alpha * h


class ElementL1(ObjectiveModule):
    """Adds ``weight * sum |entries|`` over every spectral element of ``block``."""

    def __init__(self, block, weight=1.0):
        self.block = block
        self.weight = float(weight)

    def compose(self, phi, h):
        blk = phi[self.block]
        out = h
        for tau in blk.taus():
            out = out + Expression.l1_norm(phi.term(None, self.block, tau), self.weight)
        return out


class SupportConstraint(ConstraintModule):
    """Forces entries outside a boolean pattern to zero in every spectral element.

    ``masks`` maps block names to boolean arrays of the block's shape.  The
    masked entries are removed from the program rather than constrained.
    """

    def __init__(self, masks):
        self.masks = {k: np.asarray(v, dtype=bool) for k, v in masks.items()}

    def emit(self, phi):
        for block, mask in self.masks.items():
            phi.set_support(block, mask)
        return []


class SFAchievability(ConstraintModule):
    """``[zI - A, -B2][Phi_x; Phi_u] = I`` with the FIR tail forced to zero.

    Coefficient ``k`` of the product (after shifting by ``z^-1``) gives
    ``Phi_x[k+1] - A Phi_x[k] - B2 Phi_u[k] = delta_k0 I`` for ``k = 0 .. T``.
    """

    def emit(self, phi):
        s = phi.system
        n = s.A.shape[0]
        out = []
        for k in range(phi.T + 1):
            expr = phi.term(None, "Phi_x", k + 1) - phi.term(s.A, "Phi_x", k) \
                - phi.term(s.B2, "Phi_u", k)
            if k == 0:
                expr = expr - np.eye(n)
            out.append(expr)
        return out


class OFAchievability(ConstraintModule):
    """Both output-feedback identities, coefficient by coefficient.

    Left:  ``Phi_x.[k+1] - A Phi_x.[k] - B2 Phi_u.[k]`` equals ``delta_k0 [I 0]``.
    Right: ``Phi_.x[k+1] - Phi_.x[k] A - Phi_.y[k] C2`` equals ``delta_k0 [I; 0]``.
    """

    def emit(self, phi):
        s = phi.system
        n = s.A.shape[0]
        out = []
        for k in range(phi.T + 1):
            left_x = phi.term(None, "Phi_xx", k + 1) - phi.term(s.A, "Phi_xx", k) \
                - phi.term(s.B2, "Phi_ux", k)
            left_y = phi.term(None, "Phi_xy", k + 1) - phi.term(s.A, "Phi_xy", k) \
                - phi.term(s.B2, "Phi_uy", k)
            right_x = phi.term(None, "Phi_xx", k + 1) - phi.term(None, "Phi_xx", k, s.A) \
                - phi.term(None, "Phi_xy", k, s.C2)
            right_u = phi.term(None, "Phi_ux", k + 1) - phi.term(None, "Phi_ux", k, s.A) \
                - phi.term(None, "Phi_uy", k, s.C2)
            if k == 0:
                left_x = left_x - np.eye(n)
                right_x = right_x - np.eye(n)
            out.extend([left_x, left_y, right_x, right_u])
        return out
