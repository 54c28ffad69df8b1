"""Exception hierarchy shared by the library and the CLI."""

from __future__ import annotations


class PfidError(Exception):
    """Base class for every error raised by this package."""


class DomainError(PfidError, ValueError):
    """A numeric argument is outside the domain of a function (e.g. non-finite)."""


class SequenceExhaustedError(PfidError, IndexError):
    """An explicit input sequence was asked for more regressors than it holds."""


class AssumptionError(PfidError, ValueError):
    """A standing modelling assumption is violated.

    ``assumption`` is a short machine-readable label such as
    ``"parameter-bound"`` or ``"persistent-excitation"``.
    """

    def __init__(self, assumption: str, message: str):
        super().__init__(f"{assumption}: {message}")
        self.assumption = assumption


class InfeasibleRateError(PfidError, ValueError):
    """The sufficient step-size condition for the O(1/k) rate cannot be met."""


class StateCorruptionError(PfidError, RuntimeError):
    """An estimator state lost a structural invariant (e.g. P not positive definite)."""


class DegenerateInformationError(PfidError, ValueError):
    """The observation probability is numerically 0 or 1, so it carries no information."""


class ExcitationError(PfidError, ValueError):
    """Accumulated information never became invertible (rank-deficient inputs)."""


class RateFitError(PfidError, ValueError):
    """Not enough usable points to fit a convergence rate."""


class ConfigError(PfidError, ValueError):
    """Invalid configuration file; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + message)
        self.line = line
        self.path = path
