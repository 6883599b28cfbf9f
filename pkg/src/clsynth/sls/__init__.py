from .modules import (ConstraintModule, ElementL1, H2Objective, LQGObjective, Mul,
                      ObjectiveModule, OFAchievability, SFAchievability, SupportConstraint,
                      compose_objectives)
from .params import SlsParamsOF, SlsParamsSF, of_residuals, sf_residuals
from .problem import AffineExpr, Expression, SynthesisProblem
from .synthesis import SLS, SLSResult, assemble_of, assemble_sf

__all__ = [
    "AffineExpr", "Expression", "SynthesisProblem",
    "ObjectiveModule", "ConstraintModule", "H2Objective", "LQGObjective", "Mul", "ElementL1",
    "SupportConstraint", "SFAchievability", "OFAchievability", "compose_objectives",
    "SlsParamsSF", "SlsParamsOF", "sf_residuals", "of_residuals",
    "SLS", "SLSResult", "assemble_sf", "assemble_of",
]
