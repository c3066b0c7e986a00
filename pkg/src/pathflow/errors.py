"""Exception types shared across the package."""


class PathflowError(Exception):
    """Base class for all pathflow errors."""


class InvalidArgumentError(PathflowError, ValueError):
    """An argument violates a documented precondition."""


class SimulationDivergedError(PathflowError):
    """A simulation produced a non-finite value; carries the failing step index."""

    def __init__(self, index, message=None):
        self.index = index
        super().__init__(message or f"simulation diverged at step {index}")


class UnsupportedCapabilityError(PathflowError):
    """A functional does not supply the derivative capability an operation needs."""


class TooLargeError(PathflowError):
    """Input exceeds the size limit of an exact algorithm; caller must subsample."""


class EstimationFailedError(PathflowError):
    """A statistical fit could not be carried out on the given data."""


class EnsembleFailedError(PathflowError):
    """Too many per-path failures inside an ensemble run."""

    def __init__(self, failures, n_paths):
        self.failures = failures
        self.n_paths = n_paths
        super().__init__(
            f"{len(failures)} of {n_paths} paths failed (threshold 10%): "
            f"first failure: {failures[0][1]!r}"
        )
