"""Exception hierarchy shared by every module."""


class RLSAError(Exception):
    """Base class for all errors raised by this package."""


class InvalidArgumentError(RLSAError, ValueError):
    pass


class OracleError(RLSAError):
    """An oracle returned a non-finite value.

    ``coordinate`` names the first offending output coordinate and
    ``iteration`` is filled in by the solver when the failure happens inside
    a run.
    """

    def __init__(self, message, coordinate=None, iteration=None):
        super().__init__(message)
        self.coordinate = coordinate
        self.iteration = iteration


class ConfigurationError(RLSAError, ValueError):
    pass


class CouplingError(ConfigurationError):
    """The step-size coupling inequality does not hold for the given bounds."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class InstanceGenerationError(RLSAError):
    pass


class InsufficientDataError(RLSAError, ValueError):
    pass


class SamplingError(RLSAError):
    """Rejection sampling produced no feasible candidate."""
