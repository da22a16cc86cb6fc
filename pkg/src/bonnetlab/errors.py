"""Exception hierarchy shared by every module.

Each class carries the CLI exit code it maps to, so the front end never has
to pattern-match on messages.
"""

from __future__ import annotations


class BonnetLabError(Exception):
    exit_code = 1


class ConfigurationError(BonnetLabError):
    """Invalid scheme / grid / parameter configuration."""

    exit_code = 3


class NonFiniteError(BonnetLabError):
    exit_code = 3


class SchemaError(BonnetLabError):
    """Chart file or table does not match the documented schema."""

    exit_code = 3


class DegenerateImmersionError(BonnetLabError):
    """X_x x X_y vanishes (numerically) at some node."""

    exit_code = 3

    def __init__(self, message: str, node: tuple[int, int] | None = None):
        super().__init__(message)
        self.node = node


class ConformalityError(BonnetLabError):
    """The chart is not conformal to within the requested tolerance."""

    exit_code = 2

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


class PreconditionError(BonnetLabError):
    """An operation refused its input (non-CMC associate request, ...)."""

    exit_code = 4


class NotCMCError(PreconditionError):
    pass


class NotACandidatePairError(PreconditionError):
    def __init__(self, message: str, max_u_diff: float, max_H_diff: float):
        super().__init__(message)
        self.max_u_diff = max_u_diff
        self.max_H_diff = max_H_diff


class ContourError(PreconditionError):
    """Winding contour passes too close to a zero or leaves the chart."""


class InsufficientSupportError(PreconditionError):
    pass


class DiagnosticFailure(BonnetLabError):
    """A refinement study produced non-finite output."""

    exit_code = 1
