"""Exception hierarchy shared by the pipeline stages.

The CLI maps each family to an exit code, so library code raises the most
specific class available.
"""


class TransitBenchError(Exception):
    """Base class for all package errors."""


class ConfigError(TransitBenchError, ValueError):
    """Invalid experiment/grid configuration (CLI exit code 2)."""


class DataError(TransitBenchError, ValueError):
    """Malformed or inconsistent input data (CLI exit code 3)."""


class ModelError(TransitBenchError, RuntimeError):
    """A model failed to fit, converge or forecast (CLI exit code 4)."""


class ConvergenceError(ModelError):
    """Optimizer hit its iteration cap.

    ``best`` carries the best parameters seen so far so callers may still use
    them; ``best_so_far`` is always True when that payload is present.
    """

    def __init__(self, message, best=None, best_value=None):
        super().__init__(message)
        self.best = best
        self.best_value = best_value
        self.best_so_far = best is not None
