"""Trajectory simulator and importance-sampling estimator for Ising partition functions.

The package evolves computational-basis states of a driver Hamiltonian
through a reverse-annealing schedule into a diagonal target Hamiltonian,
measures in the target basis, and turns the measured trajectories into an
unbiased estimate of the target partition function.  Four initial-state
distributions are provided (plain Gibbs, variational Gibbs, exact optimal
and a presampling-based practical construction), together with exact
brute-force references, variance/scaling analysis and a CLI.
"""

from .errors import NoRootError, ResourceLimitError
from .model import (
    DiagonalSpectrum,
    IsingInstance,
    SatClause,
    h0_energy,
    h0_spectrum,
    instance_digest,
    read_instance,
    sat3_instance,
    sk_instance,
    target_spectrum,
    write_instance,
)
from .evolution import (
    Schedule,
    StateVector,
    TransitionRow,
    convergence_check,
    evolve,
    read_statevector,
    sample_measurement,
    transition_matrix,
    transition_row,
    write_statevector,
)
from .sampling import (
    GibbsDistribution,
    HighShellDistribution,
    OptimalDistribution,
    PracticalDistribution,
    PresampleData,
    exact_optimal,
    extrapolate_shells,
    high_shell_distribution,
    je_gibbs,
    practical_distribution,
    presample,
    read_presample,
    recursive_nu,
    shell_moment,
    solve_alpha_exact,
    solve_alpha_practical,
    uniform_in_shell,
    variational_gibbs,
    write_presample,
)
from .estimator import (
    EstimateResult,
    ScalingFit,
    estimate_z,
    exact_variance,
    fit_gamma,
    gamma_prime,
    gamma_theory,
    je_work_estimate,
    min_variance,
    required_samples,
    reuse_estimate,
    total_cost,
)
from .oracle import (
    ExactAnalysis,
    analysis_from_json,
    dense_reference_evolve,
    exact_analysis,
    exact_mu,
    exact_mu_multi,
    exact_partition,
    kl_fit_alpha,
    locality_diagnostic,
    q_distribution,
    write_locality_csv,
)

__version__ = "0.1.0"

__all__ = [
    "DiagonalSpectrum",
    "EstimateResult",
    "ExactAnalysis",
    "GibbsDistribution",
    "HighShellDistribution",
    "IsingInstance",
    "NoRootError",
    "OptimalDistribution",
    "PracticalDistribution",
    "PresampleData",
    "ResourceLimitError",
    "SatClause",
    "ScalingFit",
    "Schedule",
    "StateVector",
    "TransitionRow",
    "analysis_from_json",
    "convergence_check",
    "dense_reference_evolve",
    "estimate_z",
    "evolve",
    "exact_analysis",
    "exact_mu",
    "exact_mu_multi",
    "exact_optimal",
    "exact_partition",
    "exact_variance",
    "extrapolate_shells",
    "fit_gamma",
    "gamma_prime",
    "gamma_theory",
    "h0_energy",
    "h0_spectrum",
    "high_shell_distribution",
    "instance_digest",
    "je_gibbs",
    "je_work_estimate",
    "kl_fit_alpha",
    "locality_diagnostic",
    "min_variance",
    "practical_distribution",
    "presample",
    "q_distribution",
    "read_instance",
    "read_presample",
    "read_statevector",
    "recursive_nu",
    "required_samples",
    "reuse_estimate",
    "sample_measurement",
    "sat3_instance",
    "shell_moment",
    "sk_instance",
    "solve_alpha_exact",
    "solve_alpha_practical",
    "target_spectrum",
    "total_cost",
    "transition_matrix",
    "transition_row",
    "uniform_in_shell",
    "variational_gibbs",
    "write_instance",
    "write_locality_csv",
    "write_presample",
    "write_statevector",
]
