from typing import Any, Dict, Optional


class CarpetError(Exception):
    """Base class for every error raised by carpetq."""

    def __init__(self, message: str, context: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.context: Dict[str, Any] = dict(context or {})

    def __str__(self) -> str:
        if not self.context:
            return self.message
        details = ", ".join(f"{k}={v!r}" for k, v in self.context.items())
        return f"{self.message} ({details})"


# Carpet validation
class DegenerateCarpet(CarpetError):
    pass


class BadProbabilities(CarpetError):
    pass


class DuplicateDigit(CarpetError):
    pass


class OutOfRangeDigit(CarpetError):
    pass


class UnknownDigit(CarpetError):
    pass


class ConfigError(CarpetError):
    """Raised when a config file cannot be parsed; context holds line/field."""


# Sampling and words
class InvalidCount(CarpetError):
    pass


class RootHasNoParent(CarpetError):
    pass


# Enumeration
class BudgetExceeded(CarpetError):
    pass


class InvalidParam(CarpetError):
    pass


class SeparationRequired(CarpetError):
    pass


# Solvers
class NoBracket(CarpetError):
    pass


class SolverDidNotConverge(CarpetError):
    pass


class InvalidR(CarpetError):
    pass


class NoSignChange(CarpetError):
    pass


# Quantizer
class GridTooCoarse(CarpetError):
    pass


class NonDecreaseDetected(CarpetError):
    pass


class InvalidK(CarpetError):
    pass
