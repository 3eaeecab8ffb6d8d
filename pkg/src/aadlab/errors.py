"""Exception types raised across the package."""

from __future__ import annotations


class AadError(Exception):
    """Base class for all package errors."""


# signal
class InvalidSpecError(AadError, ValueError):
    pass


class InsufficientLengthError(AadError, ValueError):
    pass


class UnsupportedDirectionError(AadError, ValueError):
    pass


class RateMismatchError(AadError, ValueError):
    pass


class ShapeError(AadError, ValueError):
    pass


class EmptyInputError(AadError, ValueError):
    pass


class InvalidCountError(AadError, ValueError):
    pass


# correlation
class DegenerateVarianceError(AadError, ArithmeticError):
    """A correlation operand has zero variance.

    ``argument`` names the offending operand (``"x"``/``"z"``, or a column
    label such as ``"attended"`` / ``"unattended[0]"``).
    """

    def __init__(self, argument: str, message: str | None = None):
        self.argument = argument
        super().__init__(message or f"zero variance in {argument}")


class DegeneratePredictionError(DegenerateVarianceError):
    """The decoder output is constant (collapsed)."""

    def __init__(self, message: str | None = None):
        super().__init__("prediction", message or "decoder output is constant")


# decoder / train
class ConfigError(AadError, ValueError):
    pass


class NonFiniteGradientError(AadError, FloatingPointError):
    pass


class DataQualityError(AadError, RuntimeError):
    pass


class InsufficientTrialsError(AadError, ValueError):
    pass


# dataset
class CorruptBundleError(AadError, OSError):
    def __init__(self, filename: str, reason: str):
        self.filename = filename
        super().__init__(f"{filename}: {reason}")

    def __str__(self) -> str:
        return self.args[0]


class BundleVersionError(AadError, ValueError):
    pass


# eval
class EvaluationError(AadError, RuntimeError):
    pass


class InsufficientPairsError(AadError, ValueError):
    pass


class DegenerateRegressorError(AadError, ValueError):
    pass
