"""Desk-scale laboratory for mean-field SDEs.

Particle simulation of granular-media and kinetic (position-velocity)
McKean-Vlasov dynamics, closed-form Gaussian oracles for the linear families,
exact empirical W2 and k-NN entropy estimation, the explicit convergence-rate
formulas of both families, and a steering-coupling check of the
entropy-vs-W2 (log-Harnack-type) bound.
"""

from .models import (
    AssumptionReport,
    DoubleWellPotential,
    GranularModel,
    KineticModel,
    MeanAttraction,
    PairwiseInteraction,
    QuadraticPair,
    QuadraticPotential,
    compute_r0,
    drift_granular,
    drift_kinetic,
    granular_rate_condition,
    kinetic_interaction_bound,
    kinetic_rate_condition,
)
from .particles import (
    EmpiricalMeasure,
    ParticleBlowUp,
    SimConfig,
    Trajectory,
    em_step,
    moment_summary,
    simulate,
    simulate_pair,
    snapshot_to_csv,
)
from .gaussian import (
    GaussianMeasure,
    gaussian_entropy,
    gaussian_w2,
    kinetic_moment_curve,
    kinetic_moments,
    ou_granular_moments,
    sample_gaussian,
    stationary_measure,
)
from .metrics import Euclidean, PsiB, PsiBar, entropy_knn, psi_bar, w2_brute, w2_empirical
from .rates import (
    DecayBound,
    RateConstants,
    RateFit,
    combine_rates,
    fit_exp_rate,
    kappa,
    theta_pair,
    twist_constants,
    uniform_lsi_rate,
)
from .energy import EnergyReport, free_energy, mean_field_entropy, particle_hamiltonian
from .coupling import (
    CouplingRun,
    LinearSystem,
    LogHarnackReport,
    NotControllable,
    control_v,
    gramian,
    kalman_rank,
    kinetic_linear_system,
    log_harnack_check,
    simulate_coupled,
)

__version__ = "0.1.0"
