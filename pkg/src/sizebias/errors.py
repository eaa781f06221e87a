"""Exception types shared across the package."""


class SizebiasError(Exception):
    """Base class for all package-specific errors."""


class ConstraintViolationError(SizebiasError, ValueError):
    """An input violates a hard structural constraint (totals, bounds)."""


class InfeasibleDesignError(SizebiasError, ValueError):
    """A sampling design is impossible (e.g. a unit with inclusion
    probability at or above one)."""


class DecompositionError(SizebiasError, ValueError):
    """A covariance matrix could not be factorised."""


class DegenerateStateError(SizebiasError, RuntimeError):
    """A sampler reached a state from which no valid draw exists."""
