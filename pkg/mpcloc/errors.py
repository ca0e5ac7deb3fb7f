########################################################################################################################
# exception hierarchy

from typing import Optional


class MpclocError(Exception):
    """Root of every error raised by mpcloc."""


########################################################################################################################
# geometry

class GeometryError(MpclocError, ValueError):
    pass


class DegenerateGeometry(GeometryError):
    pass


class NonUnitDirection(GeometryError):
    pass


class AntipodalDirections(GeometryError):
    pass


########################################################################################################################
# configuration and input data

class ConfigInvalid(MpclocError, ValueError):
    pass


class ValidationError(ConfigInvalid):
    """
    A configuration value failed validation.

    Attributes:
        field (str): Name of the offending field.
    """

    def __init__(self, field: str, message: str) -> None:
        self.field = field
        super().__init__(f"{field}: {message}")


class ParseError(ConfigInvalid):
    """
    A configuration file could not be parsed.

    Attributes:
        line (int): 1-based line of the failure, when known.
        column (int): 1-based column of the failure, when known.
    """

    def __init__(self, path: str, message: str, line: Optional[int] = None, column: Optional[int] = None) -> None:
        self.path = path
        self.line = line
        self.column = column
        where = f"{path}:{line}:{column}" if line is not None else path
        super().__init__(f"{where}: {message}")


class DataError(MpclocError, ValueError):
    pass


class SchemaError(DataError):
    pass


class CountMismatch(DataError):
    pass


class NonpositiveDistanceHypothesis(MpclocError, ValueError):
    pass


########################################################################################################################
# estimator failures

class EstimatorError(MpclocError, RuntimeError):
    pass


class InsufficientMpcs(EstimatorError):
    pass


class SolverNoConverge(EstimatorError):
    pass


class PermutationBudgetExceeded(EstimatorError):
    pass


class RankDeficient(EstimatorError):
    pass


class ReportWriteError(MpclocError, OSError):
    pass
