"""Exception hierarchy shared by all modules."""


class PumpkitError(Exception):
    """Base class for every error raised by this package."""


class NumericError(PumpkitError):
    """A numerical routine failed (eigensolver, fit, root finding)."""


class ConvergenceError(NumericError):
    pass


class ModelMismatchError(NumericError):
    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


class TopologyUndefinedError(NumericError):
    pass


class DegenerateSpectrumError(NumericError):
    pass


class RegimeError(NumericError, ValueError):
    """Parameters outside the validity range of a formula."""


class RangeError(PumpkitError, ValueError):
    pass


class CalibrationRangeError(NumericError):
    def __init__(self, message, span):
        super().__init__(message)
        self.span = span


class FitError(NumericError):
    def __init__(self, message, best=None, diagnostics=None):
        super().__init__(message)
        self.best = best
        self.diagnostics = diagnostics or {}


class InsufficientDataError(PumpkitError, ValueError):
    pass


class MultiModalSpectrumError(PumpkitError, ValueError):
    pass


class RankError(PumpkitError, ValueError):
    pass


class DomainError(PumpkitError, ValueError):
    pass


class UnsupportedCircuitError(PumpkitError, ValueError):
    """The requested engine cannot represent the circuit."""


class ProtocolOrderError(PumpkitError, RuntimeError):
    pass


class InvariantViolation(PumpkitError, AssertionError):
    """Internal bug trap: a physical invariant of the simulation broke."""


class EngineDisagreement(PumpkitError):
    def __init__(self, message, report):
        super().__init__(message)
        self.report = report


class ConfigError(PumpkitError, ValueError):
    pass


class MissingArtifactError(PumpkitError, FileNotFoundError):
    def __init__(self, message, missing):
        super().__init__(message)
        self.missing = list(missing)
