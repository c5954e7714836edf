"""
cprisk.errors

Exception hierarchy shared by the solvers and the CLI.

The CLI maps these onto exit codes:
  - ModelValidationError        -> 2 (input error)
  - SolverError                 -> 3 (solver failure)
  - InadmissibleStrategyError   -> 3 (simulation hit pi*gamma >= 1)
"""

from __future__ import annotations

from typing import Iterable, List, Optional


class CpriskError(Exception):
    """Base class for every error raised by cprisk."""


class ModelValidationError(CpriskError, ValueError):
    """
    One or more model invariants are violated.

    Each entry of `errors` starts with the offending field name, e.g.
    "gamma: loss given default must be < 1".
    """

    def __init__(self, errors: Iterable[str]) -> None:
        self.errors: List[str] = list(errors)
        super().__init__("; ".join(self.errors) or "invalid model")


class SolverError(CpriskError, RuntimeError):
    """The before-default solver failed (non-convergence or Y <= 0)."""

    def __init__(
        self,
        message: str,
        residual: Optional[float] = None,
        iterations: Optional[int] = None,
    ) -> None:
        self.residual = residual
        self.iterations = iterations
        super().__init__(message)


class InadmissibleStrategyError(CpriskError, ValueError):
    """A strategy produced a nonpositive jump factor 1 - pi*gamma."""


__all__ = [
    "CpriskError",
    "ModelValidationError",
    "SolverError",
    "InadmissibleStrategyError",
]
