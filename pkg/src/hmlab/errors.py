"""Exception hierarchy shared by every module of the lab."""


class LabError(Exception):
    """Base class for all errors raised by hmlab."""

    exit_code = 1


class ConfigError(LabError, ValueError):
    """A configuration or parameter is malformed or inconsistent."""

    exit_code = 3


class ChartDomainError(LabError, ValueError):
    """A point lies outside the validity region of a chart.

    ``index`` carries the offending node (or sample) index when known.
    """

    exit_code = 4

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class OutOfCapError(ChartDomainError):
    """A point violates ``sqrt(d) * rho < pi / 2``."""


class GridRangeError(LabError, IndexError):
    """A ball, sphere or node lies outside the discretized region."""

    exit_code = 3


class StabilityError(LabError, RuntimeError):
    """The explicit flow diverged or the energy increased beyond tolerance."""

    exit_code = 5
