"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid user-facing configuration (grid extents, orders, config files)."""


class ColdHistoryError(RuntimeError):
    """A multistep operator was applied before its history was warm."""


class SolverError(RuntimeError):
    """A Krylov solve failed to meet its residual tolerance.

    Carries the final SolveReport in ``report``.
    """

    def __init__(self, message, report):
        super().__init__(message)
        self.report = report


class NumericalError(RuntimeError):
    """Non-finite fields, non-positive densities, or a failed energy correction."""
