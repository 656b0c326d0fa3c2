"""The residual-map contract consumed by every solver."""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np


@dataclass
class ResidualProblem:
    """A residual map ``F: R^n -> R^m`` whose zero (or least-squares
    minimiser) is sought, together with the metadata solvers and the
    benchmark harness need.

    Parameters
    ----------
    dim_params : int
        Number of parameters ``n``.
    dim_residual : int
        Number of residual entries ``m``.  ``evaluate`` must return exactly
        this many finite entries for finite input.
    evaluate : callable
        Maps a length-``n`` parameter vector to a length-``m`` residual
        vector.  May be stochastic; stochastic implementations must key
        their randomness by an internal call counter so repeated runs are
        reproducible.
    true_solution : ndarray, optional
        Known target parameters, used for error reporting only.
    gradient : callable, optional
        Gradient of the half squared residual norm ``0.5 * ||F(x)||^2``,
        present only for differentiable problems.
    value_and_gradient : callable, optional
        Returns ``(0.5 * ||F(x)||^2, gradient)`` in one pass so
        gradient-based solvers can log progress without spending residual
        evaluations.
    evaluate_batch : callable, optional
        Vectorised evaluation of several points (rows of a ``(b, n)``
        array), returning a ``(b, m)`` array.  Results must be identical to
        ``b`` sequential ``evaluate`` calls.
    initial_guess : ndarray, optional
        Conventional starting iterate for this problem.
    stochastic : bool
        True when repeated evaluations at the same point may differ.
        Solvers use this to pick their default stopping tolerance.
    prescription_dim : int, optional
        Residual dimension to feed the probe-count rule when it differs
        from ``dim_residual`` (e.g. regularisation rows that add no
        information are excluded).
    name : str
        Label used in CSV output.
    details : dict
        Problem-specific artifacts (matrices, observations, ...) exposed
        for tests and inspection.
    """

    dim_params: int
    dim_residual: int
    evaluate: Callable[[np.ndarray], np.ndarray]
    true_solution: Optional[np.ndarray] = None
    gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None
    value_and_gradient: Optional[Callable[[np.ndarray], tuple]] = None
    evaluate_batch: Optional[Callable[[np.ndarray], np.ndarray]] = None
    initial_guess: Optional[np.ndarray] = None
    stochastic: bool = False
    prescription_dim: Optional[int] = None
    name: str = ""
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dim_params < 1:
            raise ValueError("dim_params must be a positive integer")
        if self.dim_residual < 1:
            raise ValueError("dim_residual must be a positive integer")
        if self.true_solution is not None:
            self.true_solution = np.asarray(self.true_solution, dtype=float)
            if self.true_solution.shape != (self.dim_params,):
                raise ValueError("true_solution must have length dim_params")
        if self.initial_guess is not None:
            self.initial_guess = np.asarray(self.initial_guess, dtype=float)
            if self.initial_guess.shape != (self.dim_params,):
                raise ValueError("initial_guess must have length dim_params")

    @property
    def probe_count_dim(self):
        """Residual dimension used by the probe-count prescription."""
        return self.prescription_dim or self.dim_residual

    def default_start(self):
        if self.initial_guess is None:
            return np.zeros(self.dim_params)
        return self.initial_guess.copy()
