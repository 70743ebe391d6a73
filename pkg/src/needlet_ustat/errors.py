"""Exception types shared across the package."""


class InvalidParameterError(ValueError):
    """A numeric parameter violates an operation's precondition."""


class NonConvergenceError(ArithmeticError):
    """Adaptive quadrature did not settle before the node budget ran out."""


class ResourceError(MemoryError):
    """A requested construction would exceed the configured memory budget."""


class TruncationError(ArithmeticError):
    """A sparse tensor truncation dropped more mass than the tolerance allows."""


class RegimeError(ValueError):
    """An intensity schedule does not select a well-defined asymptotic regime."""


class ToleranceFailure(AssertionError):
    """A numerical acceptance check failed; carries the criterion name."""

    def __init__(self, criterion, message):
        super().__init__(f"{criterion}: {message}")
        self.criterion = criterion
