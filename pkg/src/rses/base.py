"""Shared solver base class.

Solvers follow scikit-learn estimator conventions for their hyperparameters:
everything is stored verbatim in ``__init__`` and validated only when
``solve`` runs, so ``get_params`` / ``set_params`` / ``clone`` work and the
harness can sweep configurations generically.  The action method is
``solve(problem, ...)`` rather than ``fit``: these solvers consume a residual
callback, not a data matrix.
"""

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import as_vector
from .metering import EvaluationMeter


class BaseSolver(BaseEstimator):
    """Common machinery for metered solvers.

    Subclasses implement ``_solve(problem, x0, meter) -> SolveTrace`` and
    set a class-level ``name`` used in CSV output and the CLI.
    """

    name = "base"

    def solve(self, problem, x0=None, budget=None, meter=None, time_cap_s=30.0):
        """Run the solver on ``problem`` and return its :class:`SolveTrace`.

        Exactly one of ``budget`` (evaluations) or a preconstructed
        ``meter`` must be supplied.  ``x0`` defaults to the problem's
        initial guess.
        """
        if meter is None:
            if budget is None:
                raise ValueError("either budget or meter must be given")
            meter = EvaluationMeter(budget=int(budget), time_cap_s=time_cap_s)
        elif budget is not None:
            raise ValueError("pass budget or meter, not both")
        if x0 is None:
            x0 = problem.default_start()
        x0 = as_vector(x0, problem.dim_params, "x0")
        if not np.all(np.isfinite(x0)):
            raise ValueError("x0 must be finite")
        return self._solve(problem, x0, meter)

    def _solve(self, problem, x0, meter):
        raise NotImplementedError

    def _default_tolerance(self, problem):
        # Stochastic residuals never settle below their noise floor, so the
        # residual-norm stop is disabled for them.
        return 0.0 if problem.stochastic else 1e-12
