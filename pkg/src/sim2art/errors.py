"""Exception hierarchy shared across the package."""


class Sim2ArtError(Exception):
    """Base class for all package errors."""


class DomainError(Sim2ArtError, ValueError):
    """An argument violates an operation's preconditions."""


class GenerationError(Sim2ArtError, RuntimeError):
    """A synthetic scene could not be produced (e.g. nothing visible)."""


class FormatError(Sim2ArtError, ValueError):
    """An on-disk artifact is malformed; the message names the offending field."""


class NumericError(Sim2ArtError, ArithmeticError):
    """Non-finite values reached a numeric stage."""
