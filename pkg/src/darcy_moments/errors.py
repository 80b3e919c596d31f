"""Exception types shared across the package."""


class CapacityError(RuntimeError):
    """A cost guard was exceeded (pairing count, grid size, solve budget)."""


class FactorizationError(RuntimeError):
    """A covariance factorization failed even after jitter escalation."""
