"""Exception and warning types raised across the package."""


class HyperredError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(HyperredError, ValueError):
    pass


class NonPositiveTruthWeight(HyperredError, ValueError):
    pass


class ZeroCellMeasure(HyperredError, ValueError):
    pass


class RankDeficient(HyperredError, ValueError):
    pass


class RankDeficientGroup(RankDeficient):
    """A per-summand slice of the structured factor has dependent columns."""

    def __init__(self, group, message=None):
        self.group = group
        super().__init__(message or f"summand group {group} is rank deficient")


class WrongCaseKind(HyperredError, ValueError):
    pass


class MemoryBudgetExceeded(HyperredError, MemoryError):
    """Dense assembly would need more bytes than the configured budget."""

    def __init__(self, required, budget):
        self.required = int(required)
        self.budget = int(budget)
        super().__init__(
            f"dense matrix needs {self.required} bytes, budget is {self.budget}"
        )


class NonPositiveDMin(HyperredError, ValueError):
    pass


class NewtonDiverged(HyperredError, RuntimeError):
    def __init__(self, step, residual, message=None):
        self.step = step
        self.residual = residual
        super().__init__(
            message
            or f"Newton did not converge at time step {step} (residual {residual:.3e})"
        )


class PoleInput(HyperredError, ValueError):
    pass


class GridMismatch(HyperredError, ValueError):
    pass


class InfiniteRelError(HyperredError, ZeroDivisionError):
    pass


class SchemaMismatch(HyperredError, ValueError):
    pass


class ConfigError(HyperredError, ValueError):
    """Invalid configuration; ``field`` holds the dotted path of the culprit."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class DegenerateTruncation(UserWarning):
    """sigma_k == sigma_{k+1}: the best rank-k approximation is not unique."""
