"""Exception hierarchy.

The three families map onto CLI exit codes so scripted callers can tell a
bad flag from a bad file from a numerically unsolvable problem.
"""


class CrowdLafError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class ConfigError(CrowdLafError):
    """The request itself is invalid (flags, grids, parameter ranges)."""

    exit_code = 2


class DataError(CrowdLafError):
    """An input file or array violates its contract."""

    exit_code = 3


class NumericError(CrowdLafError):
    """A numerically unsolvable problem (singular systems and the like)."""

    exit_code = 4


# attribute maps
class MalformedHeader(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class SimplexViolation(DataError):
    pass


class InvalidSpec(ConfigError):
    pass


class PaletteTooSmall(ConfigError):
    pass


class EmptyRoi(DataError):
    pass


# descriptor extraction
class GridTooFine(ConfigError):
    pass


class EmptyMap(DataError):
    pass


# codebook learning
class DegenerateData(DataError):
    pass


class InvalidTarget(ConfigError):
    pass


class TooFewPoints(DataError):
    pass


# encoding
class InvalidKappa(ConfigError):
    pass


class InvalidBeta(ConfigError):
    pass


class ShapeMismatch(DataError):
    pass


class NotNormalized(DataError):
    pass


# regression and metrics
class SingularSystem(NumericError):
    pass


class LengthMismatch(DataError):
    pass


class EmptyInput(DataError):
    pass


# pipeline
class InvalidConfig(ConfigError):
    pass


class InvalidManifest(ConfigError):
    pass


class EmptyTestSplit(DataError):
    pass


class InconsistentDims(DataError):
    pass


class IoFailure(DataError):
    pass
