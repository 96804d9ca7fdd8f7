"""Exception types raised by the numerical core."""


class DomainError(ValueError):
    """Input outside the domain where a quantity is defined."""


class ConvergenceError(RuntimeError):
    """Iterative solver stopped before reaching its tolerance."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class SoftModeError(ArithmeticError):
    """The Hessian has a non-positive or near-zero eigenvalue."""

    def __init__(self, message, mode_index=None, eigenvalue=None):
        super().__init__(message)
        self.mode_index = mode_index
        self.eigenvalue = eigenvalue
