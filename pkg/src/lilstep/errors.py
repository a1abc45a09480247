"""Exception hierarchy shared across the package.

Every error raised on a documented failure path derives from
:class:`LilstepError`, so callers can catch one type at the boundary.  The
subclasses distinguish the three ways a request can be unserviceable: the
inputs were invalid (`ConfigurationError`), the inputs were valid but the
configured horizon or budget cannot support the request (`HorizonError`,
`BudgetError`), or a numerical procedure failed to converge (`StepSolveError`).
"""

from __future__ import annotations


class LilstepError(Exception):
    """Base class for all package-specific errors."""


class ConfigurationError(LilstepError, ValueError):
    """A parameter is outside its documented range or inconsistent.

    The message names the offending parameter and the accepted range.
    """


class UsageError(LilstepError, TypeError):
    """An API was called in an unsupported way (wrong mode, wrong pairing)."""


class HorizonError(LilstepError):
    """The configured grid or truncation horizon cannot cover the request."""


class DomainError(LilstepError, ValueError):
    """A statistic was requested outside its mathematical domain."""


class StepSolveError(LilstepError, RuntimeError):
    """An implicit step solve did not converge; carries the last residual."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class BudgetError(LilstepError):
    """A diagnostic was refused because it would exceed its compute budget."""
