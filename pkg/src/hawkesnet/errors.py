"""Exception hierarchy shared by all hawkesnet modules."""


class HawkesError(Exception):
    """Base class for every error raised by hawkesnet."""


class NotSubcritical(HawkesError, ValueError):
    """The branching matrix has spectral radius at or above one."""


class InvalidConfig(HawkesError, ValueError):
    pass


class InvalidDelta(HawkesError, ValueError):
    pass


class InsufficientData(HawkesError, ValueError):
    pass


class RankDeficientDesign(HawkesError, ValueError):
    """The regression design matrix is numerically singular.

    ``component`` is set (1-based) when the failure belongs to a single
    per-vertex regression of the graph estimator.
    """

    def __init__(self, message, component=None):
        super().__init__(message)
        self.component = component


class DimensionGuardExceeded(HawkesError, ValueError):
    pass


class EnumerationBudgetExceeded(HawkesError, RuntimeError):
    pass


class AllImmigrationZero(HawkesError, ValueError):
    pass


class NonFiniteEntries(HawkesError, ValueError):
    pass


class OutOfRange(HawkesError, ValueError):
    pass


class TooFewPoints(HawkesError, ValueError):
    pass


class MissingFit(HawkesError, KeyError):
    pass


class StreamFormatError(HawkesError, ValueError):
    """Malformed event-stream file; ``line`` is the 1-based physical line."""

    def __init__(self, message, line):
        super().__init__(f"line {line}: {message}")
        self.line = line


class ParseError(StreamFormatError):
    pass


class UnsortedEvents(StreamFormatError):
    pass


class BadComponent(StreamFormatError):
    pass


class SchemaError(HawkesError, ValueError):
    """Invalid JSON document; ``path`` is a JSONPath-like location."""

    def __init__(self, message, path="$"):
        super().__init__(f"{path}: {message}")
        self.path = path
