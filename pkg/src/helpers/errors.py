"""Exception hierarchy shared by the library and the command line."""

from typing import Optional

import numpy as np


class AnomTourError(Exception):
    """Base class for every error raised by anomtour."""


# Numerics

class NotSymmetric(AnomTourError, ValueError):
    pass


class NotPositiveDefinite(AnomTourError, ValueError):
    pass


class RankDeficient(AnomTourError, ValueError):
    pass


class DimensionMismatch(AnomTourError, ValueError):
    pass


class InvalidProbability(AnomTourError, ValueError):
    pass


# Outlier selection and index evaluation

class InvalidRule(AnomTourError, ValueError):
    pass


class IndexEvaluationError(AnomTourError):
    """The index returned a non-finite value; `basis` is the offending frame."""

    def __init__(self, message: str, basis: np.ndarray):
        super().__init__(message)
        self.basis = basis


# Robust estimation and clustering

class ZeroSpread(AnomTourError, ValueError):
    def __init__(self, column: str):
        super().__init__(f"Column '{column}' has zero median absolute deviation")
        self.column = column


class DegenerateData(AnomTourError, ValueError):
    pass


class MonotonicityViolation(AnomTourError):
    pass


class ZeroVector(AnomTourError, ValueError):
    def __init__(self, row: int):
        super().__init__(f"Row {row} has zero length and no direction")
        self.row = row


class InvalidK(AnomTourError, ValueError):
    pass


class EmptyCluster(AnomTourError, ValueError):
    pass


# File formats

class FileFormatError(AnomTourError, ValueError):
    """Parse failure that names the file and (1-based) line."""

    def __init__(self, path: str, line: Optional[int], reason: str):
        where = f"{path}:{line}" if line is not None else path
        super().__init__(f"{where}: {reason}")
        self.path = path
        self.line = line
        self.reason = reason


class CsvParseError(FileFormatError):
    pass


class ModelFileError(FileFormatError):
    pass
