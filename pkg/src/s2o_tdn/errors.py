"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Tensor shapes are incompatible with an operation."""


class EmptyTapeError(RuntimeError):
    """backward() was called on a value that no recorded operation produced."""


class NumericError(ArithmeticError):
    """A non-finite value showed up where a finite one is required."""


class OptimizerError(RuntimeError):
    pass


class IngestionError(IOError):
    pass


class CheckpointError(RuntimeError):
    pass


class ConfigError(ValueError):
    pass


class DivergenceError(NumericError):
    """Training produced a non-finite loss.

    ``terms`` maps each loss term name to its last value, ``checkpoint`` is the
    path of the last good checkpoint (or None).
    """

    def __init__(self, message, terms=None, checkpoint=None):
        super().__init__(message)
        self.terms = dict(terms or {})
        self.checkpoint = checkpoint
