"""Exception hierarchy.

Every error raised by the package derives from :class:`PpsvmError`. The CLI
maps the three families below onto exit codes (2 for data errors, 3 for
numerical failures).
"""


class PpsvmError(Exception):
    """Base class for all package errors."""


class DataError(PpsvmError):
    """Malformed or inconsistent input data."""


class NumericalError(PpsvmError):
    """A numerical procedure could not produce a valid result."""


class DimensionMismatch(DataError, ValueError):
    pass


class SingleClassData(DataError, ValueError):
    pass


class EmptyImage(DataError, ValueError):
    pass


class EmptyQuerySet(DataError, ValueError):
    pass


class UnknownIdentity(DataError, KeyError):
    def __str__(self):
        # KeyError repr-quotes its argument; keep messages readable.
        return str(self.args[0]) if self.args else "unknown identity"


class Corrupt(DataError):
    """File could not be parsed or is truncated."""


class VersionMismatch(DataError):
    pass


class KindMismatch(DataError):
    pass


class DegenerateMatrix(NumericalError):
    """Sampled matrix was numerically rank-deficient on every draw."""


class NonConvergence(NumericalError):
    """SMO exhausted its iteration budget with KKT violations remaining."""
