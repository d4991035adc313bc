"""Exception types shared across the package."""


class KronSBLError(Exception):
    """Base class for package errors."""


class ConfigError(KronSBLError):
    """Invalid configuration (bad dimensions, non-positive noise, ...)."""


class SolverDiverged(KronSBLError):
    """A solver produced a non-finite objective or posterior."""

    def __init__(self, message, iteration=None, nll_trace=None):
        super().__init__(message)
        self.iteration = iteration
        self.nll_trace = nll_trace
