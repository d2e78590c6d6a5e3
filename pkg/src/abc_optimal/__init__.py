"""Optimal proposal densities for sequential ABC.

Quadrature-based sampling-efficiency functionals, the optimal proposal
family and its approximations, and an SMC-ABC engine to measure them.
"""

from .densities import (
    ChiSquared,
    DiagonalGaussian,
    Gaussian,
    GaussianMixture,
    Numeric,
    Uniform,
    convolve_gaussian,
    normalize,
    sup_ratio,
)
from .efficiency import (
    EfficiencyReport,
    GaussianToyParams,
    analytic_gaussian_efficiency,
    functional_A,
    functional_B,
    improvement_surface,
    kish_ess,
    mc_functionals,
    sampling_efficiency,
)
from .errors import (
    ABCOptimalError,
    UsageError,
    UnsupportedOperationError,
    NormalizationError,
    QuadratureError,
    DivergenceError,
    InadmissibleParameterError,
    InadmissibleProposalError,
    DegeneratePopulationError,
    StallError,
    ConvergenceError,
)
from .proposals import (
    Proposal,
    beaumont_kde_proposal,
    bounded_proposal,
    build_proposal,
    geometric_mean_proposal,
    optimal_proposal,
    series_proposal,
)
from .scenarios import SCENARIOS, ScenarioSpec, compute_table, get_scenario
from .smc import (
    EpsilonSchedule,
    ForwardProblem,
    Population,
    RunDiagnostics,
    abc_iteration,
    fit_density,
    importance_weights,
    mh_sample,
    smc_run,
)

__version__ = "0.1.0"
