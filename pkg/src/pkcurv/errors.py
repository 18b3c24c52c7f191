"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument is outside the mathematical domain of an operation."""


class ConeViolationError(RuntimeError):
    """A point left the admissible Garding cone.

    ``failed_level`` is the smallest j with sigma_j <= 0; ``node`` is the
    grid node index for field-level checks (None for pointwise algebra).
    """

    def __init__(self, failed_level, node=None, value=None, count=None):
        self.failed_level = failed_level
        self.node = node
        self.value = value
        self.count = count
        where = "" if node is None else f" at node {node}"
        extra = "" if count is None else f" ({count} nodes violating)"
        super().__init__(
            f"cone violation{where}: sigma_{failed_level} = {value}{extra}"
        )


class AdmissibilityError(RuntimeError):
    """An iterate cannot be kept inside the cone even at zero step."""


class NonconvergenceError(RuntimeError):
    """Newton or continuation failed; carries the iteration trace."""

    def __init__(self, message, trace=None):
        self.trace = trace
        super().__init__(message)
