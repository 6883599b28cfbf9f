"""Exception hierarchy shared by every component."""


class SynthesisError(Exception):
    """Base class for all errors raised by clsynth."""


class InvalidArgument(SynthesisError, ValueError):
    pass


class DimensionMismatch(SynthesisError, ValueError):
    pass


class ConstructionError(SynthesisError, ValueError):
    pass


class UnsupportedFeedthrough(SynthesisError):
    """The closed loop contains an algebraic loop through ``D22``."""


class UnstablePlant(SynthesisError):
    pass


class NonConvexObjective(SynthesisError):
    pass


class NumericalFailure(SynthesisError):
    pass


class InfeasibleSynthesis(SynthesisError):
    """The assembled convex program has no feasible point.

    Attributes
    ----------
    residual : float
        Least-squares residual ``min ||E phi - e||_inf`` of the equality
        constraints; a diagnostic of how far from feasible the program is.
    """

    def __init__(self, message, residual=float("nan")):
        super().__init__(f"{message} (equality residual {residual:.3e})")
        self.residual = residual


# The solver reports infeasibility under the same type.
Infeasible = InfeasibleSynthesis
