"""Exception hierarchy."""


class NNSparseError(Exception):
    """Base class for errors raised by nnsparse."""


class InvalidSupportError(NNSparseError, ValueError):
    """A support has duplicates or indices outside the dictionary."""


class RankDeficientError(NNSparseError):
    """A quantity needs linearly independent atoms but the subdictionary is singular."""


class NumericFailure(NNSparseError, FloatingPointError):
    """An iterative method produced non-finite values."""


class PreconditionError(NNSparseError, ValueError):
    """An input violates a documented precondition (e.g. uncertified optimum)."""


class CombinatorialGuardError(NNSparseError, ValueError):
    """Exhaustive enumeration was requested on a problem that is too large."""


class GenerationError(NNSparseError):
    """A synthetic instance specification could not be realised."""
