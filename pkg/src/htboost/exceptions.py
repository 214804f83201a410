"""Exception hierarchy shared by all htboost modules."""


class HTBoostError(Exception):
    """Base class for every error raised by htboost."""


class InvalidParameterError(HTBoostError, ValueError):
    """A hyperparameter or argument is outside its allowed range."""


class InvalidInputError(HTBoostError, ValueError):
    """Input data has the wrong shape, is empty, or is not finite."""


class DegenerateMatrixError(HTBoostError, ArithmeticError):
    """A QR factorisation met a (numerically) zero pivot column."""


class RngDegeneracyError(HTBoostError, RuntimeError):
    """Repeated resampling kept producing degenerate matrices."""


class InvalidRefinementError(HTBoostError, ValueError):
    """A region refinement asked for a coarser cell width."""


class OutOfDomainError(HTBoostError, ValueError):
    """A query point lies outside the unit hypercube."""


class DataError(HTBoostError):
    """A dataset file could not be read or parsed."""


class ModelFormatError(HTBoostError):
    """A serialised model is corrupt or has an unsupported version."""


class ConfigError(HTBoostError):
    """An experiment configuration is malformed."""
