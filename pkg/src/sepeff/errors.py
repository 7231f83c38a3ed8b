"""Exception hierarchy.

Errors split into two families so the command line can map them to exit
codes: :class:`ValidationError` for bad inputs (exit 2) and
:class:`EstimationError` for numerical or positivity failures (exit 3).
"""


class SepEffError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(SepEffError, ValueError):
    pass


class EstimationError(SepEffError, RuntimeError):
    pass


# event histories
class SchemaMismatch(ValidationError):
    pass


class InvalidInterval(ValidationError):
    pass


class DuplicateId(ValidationError):
    pass


class InvalidArm(ValidationError):
    pass


# formulas and regression
class ParseError(ValidationError):
    def __init__(self, message, offset=None, line=None, column=None):
        self.offset = offset
        self.line = line
        self.column = column
        where = []
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column}")
        if offset is not None and line is None:
            where.append(f"offset {offset}")
        suffix = f" ({', '.join(where)})" if where else ""
        super().__init__(message + suffix)


class UnknownExponent(ParseError):
    pass


class MissingCovariate(ValidationError):
    pass


class CovariateSchemaMismatch(ValidationError):
    pass


class RankDeficient(EstimationError):
    pass


class Separation(EstimationError):
    pass


class EmptyRiskSet(EstimationError):
    pass


class UnconvergedModel(EstimationError):
    pass


# weighting and estimation
class ZeroDenominator(EstimationError):
    pass


class ArmEmpty(EstimationError):
    pass


class EmptyArm(EstimationError):
    pass


# contrasts
class GridMismatch(ValidationError):
    pass


class MixedEstimators(ValidationError):
    pass


class InvalidPair(ValidationError):
    pass


# bootstrap
class InvalidLevel(ValidationError):
    pass


class TooManyFailures(EstimationError):
    pass


# simulation
class InvalidDgp(ValidationError):
    pass


class PresetUnknown(ValidationError):
    pass


# graphs
class CycleDetected(ValidationError):
    pass


class UnknownNode(ValidationError):
    pass


class NodeOverlap(ValidationError):
    pass


class MissingComponentNodes(ValidationError):
    pass


# prostate ingestion
class MissingColumn(ValidationError):
    pass


class UnmappedStatus(ValidationError):
    pass


# Failures that make a single bootstrap or simulation replicate unusable.
REPLICATE_FAILURES = (
    Separation,
    ZeroDenominator,
    RankDeficient,
    EmptyRiskSet,
    UnconvergedModel,
    ArmEmpty,
    EmptyArm,
)
