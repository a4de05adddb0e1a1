"""
Exception hierarchy for the exposure risk toolkit.

The CLI maps these classes onto exit codes, so every failure raised by the
library should derive from ExposureRiskError.
"""

from typing import List, Optional


class ExposureRiskError(Exception):
    """Base class for all toolkit errors."""


class ParameterError(ExposureRiskError, ValueError):
    """Invalid numeric input to a model operation."""


class DataError(ExposureRiskError):
    """
    Malformed or inconsistent input data.

    Args:
        message: Human readable description
        line: 1-based line number in the offending file, if known
        field: Dotted field path, if known
    """

    def __init__(self, message: str, line: Optional[int] = None, field: Optional[str] = None):
        self.line = line
        self.field = field
        prefix = f"line {line}: " if line is not None else ""
        suffix = f" (field: {field})" if field else ""
        super().__init__(f"{prefix}{message}{suffix}")


class ImpossibleObservationError(DataError):
    """An outcome record marked infected with zero exposure."""


class JournalError(DataError):
    """A journal line could not be decoded or replayed."""


class ConfigError(ExposureRiskError):
    """
    Engine configuration failed validation.

    Args:
        problems: Every problem found, reported together
    """

    def __init__(self, problems: List[str]):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  - " + "\n  - ".join(self.problems))


class ModelValidityError(ExposureRiskError):
    """A model assumption broke down for the given inputs."""


class HorizonError(ModelValidityError):
    """The requested event lies beyond the span of the symptom-time CDF grid."""
