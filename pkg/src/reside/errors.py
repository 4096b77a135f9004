"""Exception types raised across the package."""


class FormatError(ValueError):
    """A grid, mask, or checkpoint file is malformed.

    ``offset`` is the byte position at which the problem was detected.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte {offset})"
        super().__init__(message)
        self.offset = offset


class ContractViolation(RuntimeError):
    """A plugged-in callable returned something the caller cannot use."""


class DivergenceError(ArithmeticError):
    """The reconstruction produced non-finite values."""

    def __init__(self, iteration, message="non-finite iterate"):
        super().__init__(f"{message} at iteration {iteration}")
        self.iteration = iteration
