"""Exception hierarchy shared across the package."""


class HyperFSCILError(Exception):
    """Base class for every error raised by this package."""


class InvalidInputError(HyperFSCILError, ValueError):
    """Non-finite or otherwise malformed numeric input."""


class ShapeError(HyperFSCILError, ValueError):
    """Array dimensions do not agree."""


class DomainError(HyperFSCILError, ValueError):
    """A point lies outside the Poincare ball."""


class NumericalError(HyperFSCILError, ArithmeticError):
    """A computation produced a non-finite value."""


class ContractError(HyperFSCILError, ValueError):
    """A documented precondition was violated by the caller."""


class LabelError(ContractError):
    """A class label is outside the expected label set."""


class DeterminismError(HyperFSCILError, RuntimeError):
    """Repeated evaluations of a supposedly deterministic function disagree."""


class ConfigError(HyperFSCILError, ValueError):
    """Invalid experiment configuration."""


class DatasetError(HyperFSCILError, ValueError):
    """Malformed or insufficient dataset."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ProtocolError(HyperFSCILError, RuntimeError):
    """Session protocol violation (overlapping classes, broken invariants)."""
