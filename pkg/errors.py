"""
Error hierarchy for the risk estimation toolkit.
The CLI maps these onto exit codes (see cli.py).
"""


class RiskToolkitError(Exception):
    """Base class for every error raised by the toolkit"""


class InvalidInputError(RiskToolkitError, ValueError):
    """Dimension mismatch, non-finite data or an out-of-range parameter"""


class NumericalError(RiskToolkitError):
    """A numerical routine failed to produce a trustworthy answer"""


class ProxNonConvergence(NumericalError):
    pass


class SingularHessian(NumericalError):
    pass


class MaxIterExceeded(NumericalError):
    """Newton iterations ran out; `best` holds the best iterate seen"""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class LeverageOutOfRange(NumericalError):
    def __init__(self, message, index=None, value=None):
        super().__init__(message)
        self.index = index
        self.value = value


class ZeroCurvature(NumericalError):
    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class BracketFailure(NumericalError):
    pass


class ThetaBracketFailure(BracketFailure):
    pass


class CalibrationMismatch(NumericalError):
    pass


class DegenerateOnsager(NumericalError):
    pass


class NonConvergence(NumericalError):
    """AMP did not settle; `trace` holds the per-iteration records"""

    def __init__(self, message, trace=None, state=None):
        super().__init__(message)
        self.trace = trace or []
        self.state = state


class LooFitError(NumericalError):
    """A leave-one-out or held-out-fold refit failed"""

    def __init__(self, message, index=None, cause=None):
        super().__init__(message)
        self.index = index
        self.cause = cause


class ExperimentAborted(NumericalError):
    def __init__(self, message, failures=None):
        super().__init__(message)
        self.failures = failures or []
