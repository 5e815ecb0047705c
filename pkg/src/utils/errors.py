"""
Exception hierarchy shared by every module.

Validation problems (bad input, bad files, bad parameters) derive from
ValidationError; failures of a numerical procedure on valid input derive from
NumericError. The CLI maps the first family to exit code 1 and the second to 2.
"""
from typing import Optional


class FShapeError(Exception):
    """Base class of all errors raised by the package."""


class ValidationError(FShapeError, ValueError):
    """Input does not satisfy a documented precondition."""


class NumericError(FShapeError, ArithmeticError):
    """A numerical procedure failed on otherwise valid input."""


# ===================================================================
# Validation errors
# ===================================================================

class DegenerateTriangle(ValidationError):
    def __init__(self, index: int, area: float = 0.0) -> None:
        super().__init__(f"triangle {index} is degenerate (area {area:.3e})")
        self.index = index
        self.area = area


class EmptyMesh(ValidationError):
    pass


class InvalidMesh(ValidationError):
    pass


class LengthMismatch(ValidationError):
    pass


class MeshMismatch(ValidationError):
    pass


class BadExponent(ValidationError):
    pass


class NonpositiveEpsilon(ValidationError):
    pass


class NonUnitNormal(ValidationError):
    pass


class BadParams(ValidationError):
    pass


class BadStep(ValidationError):
    pass


class WrongModel(ValidationError):
    pass


class CountMismatch(ValidationError):
    pass


class IoError(ValidationError):
    pass


class ParseError(ValidationError):
    """Malformed file content; `line` is 1-based when known."""

    def __init__(self, message: str, line: Optional[int] = None, path: Optional[str] = None) -> None:
        where = ""
        if path:
            where += f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}".strip())
        self.line = line
        self.path = path


class ConfigError(ValidationError):
    """Invalid configuration value; `field` is the dotted key."""

    def __init__(self, field: str, message: str) -> None:
        super().__init__(f"config field '{field}': {message}")
        self.field = field


class ExpressionError(ValidationError):
    """Malformed signal expression; `position` is the 0-based character offset."""

    def __init__(self, message: str, position: int, text: str = "") -> None:
        super().__init__(f"{message} at position {position} in '{text}'")
        self.position = position
        self.text = text


# ===================================================================
# Numeric errors
# ===================================================================

class OutsideReach(NumericError):
    pass


class LiftMiss(NumericError):
    pass


class NoConvergence(NumericError):
    pass


class NonsmoothEnergy(NumericError):
    pass
