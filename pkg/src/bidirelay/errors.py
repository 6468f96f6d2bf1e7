"""Exceptions shared by the numerical kernels and the solver."""


class NonPositivePrice(ValueError):
    """A power price (alpha) that is not strictly positive."""


class NoConvergence(RuntimeError):
    """An inner iterative solve hit its iteration cap."""


class IterationCapExceeded(RuntimeError):
    """The outer dual iteration stopped at its cap before meeting the tolerance.

    The solver does not raise this by default; it returns the best point found
    and marks the outcome's ``status``.  ``SolverOptions(strict=True)`` turns the
    flag into this exception.
    """
