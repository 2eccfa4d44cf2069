"""Bregman-geometry stochastic optimization with relaxation schedules.

A small numpy library implementing mirror descent and its over-relaxed,
super-relaxed, adaptive, natural-gradient, mirror-prox, and proximal
variants on R^d, plus synthetic benchmark problems, descent diagnostics,
and a reproducible CLI harness.
"""

__version__ = "0.1.0"

from .geometry import (
    DomainError, LegendrePotential, NegativeEntropy, SquaredEuclidean,
    make_potential,
)
from .relaxation import (
    ConstantSchedule, ModeViolation, ScheduleMode, TwoPointSchedule,
    WarmupSchedule, expected_descent_factor, sample_lambda, validate_schedule,
)
from .algorithms import (
    AdaptiveStep, ConstantStep, GradientOracle, OperatorOracle,
    OptimizerState, PolynomialStep, adagrad_step, half_space_step,
    make_state, mirror_prox_or_step, mirror_prox_step, natgrad_step,
    or_adaptive_step, or_smd_step_a, or_smd_step_b, prox_sgd_step,
    rmsprop_step, run_iteration, smd_step,
)
from .problems import (
    BilinearSaddleProblem, HalfSpaceFeasibilityProblem,
    LogisticRegressionProblem, SimplexEstimationProblem,
    SparseRegressionProblem, generate_bilinear, generate_logistic,
    generate_simplex_target, generate_sparse_regression, sparsity_metrics,
)
from .diagnostics import (
    FejerReport, InequalityViolated, MissingReference, NoConvergence,
    NonPositiveLoss, RateFit, RunTrace, SummaryStats, early_slope,
    fejer_check, geometric_rate_fit, loss_variance, reference_solution,
    robbins_siegmund_verify, steps_to_target, summarize_traces,
)
