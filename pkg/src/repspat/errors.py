"""Exception hierarchy.

Every error carries an ``exit_code`` used by the command-line front end:
1 for usage errors, 2 for data errors, 3 for internal inconsistencies.
"""


class RepSpatError(Exception):
    exit_code = 2


class UsageError(RepSpatError):
    exit_code = 1


class DataError(RepSpatError):
    """Invalid or unreadable input data."""


class MissingFile(DataError):
    pass


class UnresolvableColumns(DataError):
    pass


class NonNumericCell(DataError):
    pass


class BinaryViolation(DataError):
    pass


class EmptyDataset(DataError):
    pass


class NonFiniteValue(DataError):
    pass


class ShapeMismatch(DataError):
    pass


class IoFailure(DataError):
    pass


class InvalidParameter(RepSpatError):
    """A parameter outside its admissible range (for example ``m >= n``)."""

    exit_code = 1


class IsolatedNode(DataError):
    pass


class UnknownCluster(InvalidParameter):
    pass


class MissingPair(DataError):
    pass


class GeometryOverflow(InvalidParameter):
    pass


class SingularSystem(DataError):
    pass


class InternalInconsistency(RepSpatError):
    exit_code = 3
