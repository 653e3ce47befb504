"""Exception types raised across the package."""


class NotJInvariant(ValueError):
    """Matrix is not invariant under conjugation by the complex structure."""


class MetricNotPositive(ValueError):
    """A Hermitian metric failed the positive-definiteness check."""


class IndexOutOfRange(IndexError):
    pass


class OutsideDomain(ValueError):
    """An operator was evaluated where its formula is not defined."""


class OptimizerDiverged(RuntimeError):
    pass


class NotAdmissible(ValueError):
    """Reduced equation leaves the admissible set at some grid point."""

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class LineSearchFailed(RuntimeError):
    pass


class MaxIterations(RuntimeError):
    pass


class TooFewPoints(ValueError):
    pass


class ConfigError(ValueError):
    """Invalid user-facing configuration (bad family parameters, grid sizes, ...)."""
