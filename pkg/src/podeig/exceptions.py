"""Exception types raised across the package."""

import numpy as np


class InvalidArgumentError(ValueError):
    """Argument has the wrong shape, size or value."""


class DomainError(ValueError):
    """Parameter lies outside the admissible set of a problem."""


class InsufficientDataError(ValueError):
    """Not enough eigenpairs or samples to carry out the request."""


class DefinitenessError(np.linalg.LinAlgError):
    """Matrix expected to be symmetric positive definite is not."""


class SolverFailure(RuntimeError):
    """Iterative eigensolver did not converge.

    Parameters
    ----------
    message : str
        Human readable reason.
    diagnostics : dict, optional
        Whatever the solver could report (iterations, residuals, ...).
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})

