"""Exception types shared across the package."""


class PreconditionError(ValueError):
    """An input violates a documented precondition or applicability gate."""


class CoverResourceError(RuntimeError):
    """A cover computation was aborted because it exceeded its point budget."""


class EstimationError(RuntimeError):
    """A statistical step failed (e.g. too few samples in a cluster)."""
