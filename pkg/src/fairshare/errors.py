"""Exception hierarchy.

Everything raised on bad input derives from :class:`ValidationError`; the CLI
maps those to exit code 2 and :class:`IoError` to exit code 3.
"""

from __future__ import annotations


class FairShareError(Exception):
    """Base class for all package errors."""


class ValidationError(FairShareError, ValueError):
    pass


class IoError(FairShareError, OSError):
    pass


# game tables
class MissingCoalition(ValidationError):
    pass


class DuplicateCoalition(ValidationError):
    pass


class BadCoalitionKey(ValidationError):
    pass


class NonzeroEmptyValue(ValidationError):
    pass


class NonfiniteValue(ValidationError):
    pass


class NegativeValue(ValidationError):
    pass


class CapExceeded(ValidationError):
    pass


class NotMonotone(ValidationError):
    pass


class MonotonicityBroken(ValidationError):
    pass


# allocation / suboptimal
class NonpositiveAlpha(ValidationError):
    pass


class DegenerateGame(ValidationError):
    pass


class NoAdmissiblePairs(ValidationError):
    pass


class InfeasibleSideConstraints(ValidationError):
    pass


# sensitivity
class BaseNotOptimal(ValidationError):
    pass


class OrderBroken(ValidationError):
    pass


# valuation
class NonpositiveNoise(ValidationError):
    pass


class SingularPrior(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


# io
class BadConfig(ValidationError):
    pass


class ParseError(ValidationError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class RaggedDimensions(ValidationError):
    pass


class MissingColumn(ValidationError):
    pass


class PipelineError(FairShareError):
    """Upstream failure annotated with the pipeline stage it happened in."""

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"{stage}: {cause}")
