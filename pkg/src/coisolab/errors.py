"""Exception hierarchy for the laboratory."""

from __future__ import annotations


class CoisoLabError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(CoisoLabError):
    """Inputs disagree about the ambient dimension."""


class PointNotOnSubmanifold(CoisoLabError):
    """A constraint function is not zero at the given point."""


class RankDeficientJacobian(CoisoLabError):
    """The constraint Jacobian loses rank where full rank is required."""


class NonConvergence(CoisoLabError):
    """An implicit step's fixed-point iteration failed to converge."""


class ClosureFailure(CoisoLabError):
    """A periodic solve did not return to its starting point."""


class ConstraintViolated(CoisoLabError):
    """A discrete pair does not satisfy the compatibility constraint."""


class NotCoisotropic(CoisoLabError):
    """A reduction step was asked of a non-coisotropic subspace."""


class PreconditionFailed(CoisoLabError):
    """A documented operation precondition does not hold."""


class DegenerateEndpointSystem(CoisoLabError):
    """The endpoint elimination lost rank beyond tolerance; reported, not guessed."""


class ParseError(CoisoLabError):
    """A scenario file is malformed."""
