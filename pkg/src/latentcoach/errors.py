"""Exception hierarchy shared by every module."""


class LatentCoachError(Exception):
    """Base class; ``kind`` is the machine-readable tag printed by the CLI."""

    kind = "error"


class InvalidInputError(LatentCoachError, ValueError):
    kind = "invalid-input"


class NumericalError(LatentCoachError, ArithmeticError):
    kind = "numerical"


class StateError(LatentCoachError, RuntimeError):
    kind = "state"


class ConvergenceError(NumericalError):
    kind = "convergence"


class ParseError(InvalidInputError):
    kind = "parse"


class CompatibilityError(LatentCoachError):
    kind = "compatibility"
