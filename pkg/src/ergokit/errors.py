"""Shared exception types."""


class DomainError(ValueError):
    """Evaluation outside a map's domain, or invalid construction parameters."""


class GridMismatchError(ValueError):
    """Operands live on incompatible grids."""


class RootFindingError(RuntimeError):
    """Bracketed Newton failed to converge on a branch inverse."""

    def __init__(self, message, branch=None, residual=None):
        super().__init__(message)
        self.branch = branch
        self.residual = residual


class ConvergenceError(RuntimeError):
    """An iterative solver ran out of iterations; carries the last residual."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class NoUniformLyError(RuntimeError):
    """No uniform Lasota-Yorke inequality found within the allowed iterates."""
