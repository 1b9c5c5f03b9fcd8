"""Exception hierarchy.

``DataError`` covers anything the caller can fix by changing inputs or
configuration; ``NumericError`` covers failures of the optimization itself.
The CLI maps the two families to distinct exit codes.
"""


class JupadError(Exception):
    """Base class for every error raised by this package."""


class DataError(JupadError, ValueError):
    pass


class NumericError(JupadError, ArithmeticError):
    pass


class InvalidAtomError(DataError):
    pass


class InvalidIntervalError(DataError):
    pass


class CoverageError(DataError):
    def __init__(self, message, atom=None, coverage=None):
        super().__init__(message)
        self.atom = atom
        self.coverage = coverage


class ConfigError(DataError):
    pass


class ShapeError(DataError):
    pass


class InvalidPairError(DataError):
    pass


class OutOfRangeError(DataError):
    pass


class DegenerateColumnError(DataError):
    pass


class ParseError(DataError):
    pass


class DomainError(DataError):
    pass


class StratificationError(DataError):
    pass


class CorruptModelError(DataError):
    pass


class InfeasibleSplitError(DataError):
    pass


class ZeroDensityError(NumericError):
    pass


class DivergenceError(NumericError):
    def __init__(self, message, rate_name=None):
        super().__init__(message)
        self.rate_name = rate_name


class RankDeficiencyError(NumericError):
    pass
