"""Custom exceptions for Ledger Freshness."""

from __future__ import annotations


class FreshnessError(Exception):
    """Base exception for Ledger Freshness."""


class DomainError(FreshnessError, ValueError):
    """Raised when an argument lies outside the domain of an operation."""


class ConfigError(FreshnessError, ValueError):
    """Raised when an experiment or runtime configuration is invalid."""


class ConvergenceError(FreshnessError, ArithmeticError):
    """Raised when a series does not converge within its term budget."""

    def __init__(self, message: str, *, last_term: float, terms: int, hint: str | None = None) -> None:
        detail = f"{message} (terms={terms}, last |term|={last_term:.3e})"
        if hint:
            detail = f"{detail}; {hint}"
        super().__init__(detail)
        self.last_term = last_term
        self.terms = terms
        self.hint = hint


class SingularityError(FreshnessError, ArithmeticError):
    """Raised when the integer-shape closed form is evaluated too close to beta == rho."""


class QuadratureError(FreshnessError, ArithmeticError):
    """Raised when numerical integration misses its error target."""

    def __init__(self, message: str, *, error_estimate: float) -> None:
        super().__init__(f"{message} (error estimate {error_estimate:.3e})")
        self.error_estimate = error_estimate


class BracketError(FreshnessError, ArithmeticError):
    """Raised when a root bracket has no sign change."""


class InfiniteLatencyError(FreshnessError, ZeroDivisionError):
    """Raised when a transmission latency would be infinite (zero rate)."""


class DegenerateTraceError(FreshnessError, ValueError):
    """Raised when a latency trace is (nearly) constant and cannot be fitted."""


class TraceFormatError(FreshnessError, ValueError):
    """Raised when a latency trace file cannot be read or parsed."""


class ParamsNotFoundError(FreshnessError, LookupError):
    """Raised when no measured parameter row matches a (knob, value) pair."""


class InsufficientDataError(FreshnessError, ValueError):
    """Raised when a sample path is too short to estimate metrics."""


class RunawaySimulationError(FreshnessError, RuntimeError):
    """Raised when a simulation hits its event cap before its stop condition."""
