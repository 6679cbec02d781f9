"""Exception types shared across the package.

All of them subclass ValueError so callers that do not care about the
distinction can catch a single type.
"""


class ParameterError(ValueError):
    """A parameter is outside its physical or numerical domain."""


class TruncationError(ParameterError):
    """The requested photon-number cutoff leaves too much tail mass.

    Attributes:
        required_n_max: smallest cutoff that satisfies the tail tolerance.
    """

    def __init__(self, message: str, required_n_max: int):
        super().__init__(message)
        self.required_n_max = required_n_max


class UndefinedStatisticError(ValueError):
    """A statistic is mathematically undefined for the given input."""


class EmptyEnsembleError(ValueError):
    """Conditioning or normalization was attempted on zero probability mass."""


class InconsistentRatesError(ValueError):
    """Observed count rates contradict the assumed detector model."""


class FormatError(ValueError):
    """A time-tag file does not match the documented wire format."""
