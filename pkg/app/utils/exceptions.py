"""
Exception hierarchy for the measurement chain.

The library raises these; only the CLI and the HTTP routes turn them into
exit codes or JSON error bodies.
"""

from typing import Any, Dict, Optional


class PsmError(Exception):
    """Base class for every domain error."""

    exit_code = 1
    http_status = 422


class InvalidParameterError(PsmError, ValueError):
    """A parameter falls outside the operation's precondition."""

    exit_code = 2
    http_status = 400


class RoiBoundsError(InvalidParameterError):
    """ROI is empty or does not fit the sensel grid."""


class EmptyInputError(PsmError, ValueError):
    """Nothing to work on: empty sequence, file or manifest."""

    exit_code = 3


class EmptyResultError(PsmError, ValueError):
    """The operation would produce an empty result (e.g. trims exceed the record)."""

    exit_code = 3


class InsufficientDataError(PsmError, ValueError):
    """Too few samples for the requested operation."""

    exit_code = 4


class DegenerateInputError(PsmError, ValueError):
    """Input is numerically degenerate (zero mean pressure, all-zero spectrum)."""

    exit_code = 4


class NoPeakError(PsmError):
    """Every candidate periodogram bin carries zero power."""

    exit_code = 4


class UndefinedCorrelationError(PsmError, ValueError):
    """Correlation with a constant vector."""

    exit_code = 4


class FrameParseError(PsmError):
    """Malformed frame file. `line` is 1-based; `frame` is the 1-based frame number when known."""

    exit_code = 5
    http_status = 400

    def __init__(self, message: str, line: Optional[int] = None, frame: Optional[int] = None):
        self.line = line
        self.frame = frame
        location = []
        if line is not None:
            location.append(f"line {line}")
        if frame is not None:
            location.append(f"frame {frame}")
        prefix = f"{', '.join(location)}: " if location else ""
        super().__init__(f"{prefix}{message}")


class ManifestError(PsmError):
    """Manifest or results file could not be parsed or validated."""

    exit_code = 5
    http_status = 400

    def __init__(self, message: str, location: Optional[str] = None):
        self.location = location
        super().__init__(f"{location}: {message}" if location else message)


class DesignError(PsmError, ValueError):
    """Fixed-effect design is inconsistent or rank deficient."""

    exit_code = 6


class IdentifiabilityError(PsmError, ValueError):
    """Variance components cannot be separated (fewer than two groups)."""

    exit_code = 6


class NestingError(PsmError, ValueError):
    """Likelihood ratio test requested on models that are not nested."""

    exit_code = 6


class ConvergenceError(PsmError):
    """Optimizer did not converge within its iteration budget."""

    exit_code = 7
    http_status = 500

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        self.diagnostics = diagnostics or {}
        super().__init__(f"{message} ({self.diagnostics})" if self.diagnostics else message)
