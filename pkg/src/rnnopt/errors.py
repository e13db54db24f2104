"""Exception types shared across the package."""


class RNNOptError(Exception):
    """Base class for every error raised by rnnopt."""


class ConfigError(RNNOptError, ValueError):
    """Invalid configuration: dimensions, intervals, flags or unknown keys."""


class InputError(RNNOptError, ValueError):
    """A call received arguments outside its domain (shapes, indices, sizes)."""


class DataError(RNNOptError):
    """A dataset could not be read or failed validation."""


class ParseError(DataError):
    """Malformed record in an input file."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class NumericalError(RNNOptError, ArithmeticError):
    """Non-finite value produced during a forward or backward pass."""

    def __init__(self, message, timestep=None, report=None):
        if timestep is not None:
            message = f"{message} (timestep {timestep})"
        super().__init__(message)
        self.timestep = timestep
        self.report = report or {}


class CheckpointError(RNNOptError):
    """Checkpoint is corrupt or does not match the expected shapes."""
