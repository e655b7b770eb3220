"""Last-iterate optimal step sizes for projected stochastic subgradient descent."""

__version__ = "0.1.0"

from .schedules import (  # noqa: E402
    Breakpoints,
    DecayProfile,
    StepSchedule,
    compute_breakpoints,
    estimate_decay_constant,
    make_schedule,
    modify_schedule,
    standard_schedule,
    strong_schedule,
    weak_schedule,
)
from .problems import (  # noqa: E402
    ProblemInstance,
    abs_quadratic_problem,
    gen_lasso,
    gen_svm,
    make_problem,
    project_l2_ball,
    pure_quadratic_problem,
    reference_optimum,
)
from .sgd import (  # noqa: E402
    EnsembleSummary,
    RunConfig,
    Trace,
    run_ensemble,
    run_sgd,
    running_average,
    suffix_average,
)

__all__ = [
    "Breakpoints", "DecayProfile", "StepSchedule", "compute_breakpoints",
    "estimate_decay_constant", "make_schedule", "modify_schedule",
    "standard_schedule", "strong_schedule", "weak_schedule",
    "ProblemInstance", "abs_quadratic_problem", "gen_lasso", "gen_svm",
    "make_problem", "project_l2_ball", "pure_quadratic_problem", "reference_optimum",
    "EnsembleSummary", "RunConfig", "Trace", "run_ensemble", "run_sgd",
    "running_average", "suffix_average",
]
