"""Exception types raised across the package."""


class DecompcastError(Exception):
    """Base class for all package errors."""


class ShapeError(DecompcastError, ValueError):
    pass


class ParameterError(DecompcastError, ValueError):
    pass


class InputTooShortError(ParameterError):
    pass


class DegenerateAffineError(DecompcastError, ValueError):
    pass


class TrainingDivergenceError(DecompcastError, FloatingPointError):
    def __init__(self, batch_index, loss):
        super().__init__(f"non-finite loss {loss!r} at batch {batch_index}")
        self.batch_index = batch_index
        self.loss = loss


class ConfigurationError(DecompcastError, ValueError):
    pass


class DataFormatError(DecompcastError, ValueError):
    pass
