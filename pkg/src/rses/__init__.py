"""Residual subspace evolution strategies for nonlinear inverse problems.

A derivative-free solver (RSES) that recombines Gaussian probes through a
small ridge-stabilised least-squares solve, reference baselines metered
under the same evaluation accounting, four synthetic benchmark problems,
and a budget-metered multi-trial comparison harness with a CLI.
"""

from .baselines import (
    Adam,
    EnsembleKalmanInversion,
    ExternalSolver,
    GaussNewton,
    XNES,
    finite_difference_jacobian,
)
from .benchmarks import (
    BrownianSpec,
    DeconvSpec,
    LinearSystemSpec,
    MlpSpec,
    PROBLEM_NAMES,
    make_brownian_problem,
    make_deconv_problem,
    make_linear_problem,
    make_mlp_problem,
    make_problem,
    mlp_forward,
    mlp_gradient,
    mlp_parameter_count,
)
from .core import (
    ProbeBatch,
    RSES,
    RidgeSolution,
    apply_update,
    collect_differences,
    draw_probes,
    prescribe_iterations,
    prescribe_probe_count,
    ridge_schedule,
    ridge_weights,
    run_rses,
    surrogate_predict,
)
from .harness import (
    TrialAggregate,
    TrialResult,
    ablation_sweep,
    aggregate_trials,
    report_at_index,
    run_trials,
    stopping_index,
)
from .metering import (
    BudgetExhausted,
    EvaluationMeter,
    NumericalFailure,
    SolveTrace,
    TraceRecorder,
)
from .problem import ResidualProblem

__version__ = "0.1.0"

__all__ = [
    "Adam", "BrownianSpec", "BudgetExhausted", "DeconvSpec",
    "EnsembleKalmanInversion", "EvaluationMeter", "ExternalSolver",
    "GaussNewton", "LinearSystemSpec", "MlpSpec", "NumericalFailure",
    "PROBLEM_NAMES", "ProbeBatch", "RSES", "ResidualProblem",
    "RidgeSolution", "SolveTrace", "TraceRecorder", "TrialAggregate",
    "TrialResult", "XNES", "ablation_sweep", "aggregate_trials",
    "apply_update", "collect_differences", "draw_probes",
    "finite_difference_jacobian", "make_brownian_problem",
    "make_deconv_problem", "make_linear_problem", "make_mlp_problem",
    "make_problem", "mlp_forward", "mlp_gradient", "mlp_parameter_count",
    "prescribe_iterations", "prescribe_probe_count", "report_at_index",
    "ridge_schedule", "ridge_weights", "run_rses", "run_trials",
    "stopping_index", "surrogate_predict",
]
