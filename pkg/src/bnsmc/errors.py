"""Exception types raised by the library.

Every error carries a short machine-readable ``code`` so the CLI can map it
to an exit status and tests can assert on it without matching prose.
"""

from __future__ import annotations


class BNSError(Exception):
    """Base class for all library errors."""

    code = "BNS_ERROR"

    def __init__(self, message: str, code: str | None = None):
        super().__init__(message)
        if code is not None:
            self.code = code


class ParameterError(BNSError, ValueError):
    """A raw parameter is outside its basic domain (e.g. a negative rate)."""

    code = "INVALID_PARAMETER"


class AssumptionViolation(BNSError, ValueError):
    """One of the two model admissibility conditions fails.

    Attributes:
        code: ``CONDITION1_VIOLATED`` or ``CONDITION2_VIOLATED``.
        lhs, rhs: the two sides of the failed strict inequality ``lhs > rhs``.
        margin: ``lhs - rhs`` (non-positive when raised).
    """

    def __init__(self, code: str, lhs: float, rhs: float, detail: str = ""):
        self.lhs = float(lhs)
        self.rhs = float(rhs)
        self.margin = self.lhs - self.rhs
        msg = f"{code}: {lhs:.6g} > {rhs:.6g} fails (margin {self.margin:.6g})"
        if detail:
            msg = f"{msg}; {detail}"
        super().__init__(msg, code)


class EngineError(BNSError, RuntimeError):
    """A path simulation hit a numerically invalid state.

    ``path`` and ``step`` locate the failure (global path index, step index k
    of the transition t_k -> t_{k+1}).
    """

    def __init__(self, code: str, path: int | None = None, step: int | None = None,
                 detail: str = ""):
        self.path = path
        self.step = step
        where = []
        if path is not None:
            where.append(f"path {path}")
        if step is not None:
            where.append(f"step {step}")
        msg = code
        if where:
            msg += " at " + ", ".join(where)
        if detail:
            msg += f": {detail}"
        super().__init__(msg, code)


class NegativeRateError(EngineError):
    """The changed-measure stepper needs alpha >= 0 (Poisson rates K * mass)."""

    def __init__(self, rate: float, detail: str = ""):
        self.rate = rate
        super().__init__("NEGATIVE_RATE", detail=detail or f"Poisson rate {rate:.6g} < 0")


class OracleFailure(BNSError, RuntimeError):
    """Quadrature did not converge to the requested tolerance."""

    code = "ORACLE_FAILURE"
