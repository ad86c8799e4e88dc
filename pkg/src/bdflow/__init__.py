"""Particle optimization with gradient-flow transport and birth-death
dynamics, together with 1D mean-field oracles used to verify convergence
rates and fluctuation scaling."""

from .diagnostics import (
    FitResult,
    FluctuationReport,
    TrajectoryRecord,
    energy_decay_terms,
    ensemble_energy,
    euler_lagrange_residual,
    fluctuation_scaling,
    rate_fit,
)
from .dynamics import (
    VARIANTS,
    DynamicsConfig,
    FVariant,
    KMCLog,
    StepReport,
    bernoulli_phase,
    birth_death_step,
    centered_rate,
    fvariant_rate,
    gd_step,
    kmc_run,
    proximal_weight_update,
    reinjection_step,
    resample_weights,
    run_step,
)
from .ensemble import (
    Ensemble,
    ParticleState,
    clone_particle,
    empirical_expectation,
    init_from_sampler,
    kill_particle,
    write_snapshot_csv,
)
from .errors import (
    ConfigurationError,
    ExtinctionError,
    FitError,
    NumericError,
    StepSizeError,
    UnsupportedOperationError,
)
from .meanfield import (
    Grid1D,
    GridStepper,
    RateFormulas,
    characteristics_density_quadratic,
    grid_energy,
    grid_from_sampler,
    grid_solver_1d,
    pure_bd_density,
    pure_bd_mean_energy,
    transport_bd_asymptote,
)
from .potentials import (
    DoubleWellModel,
    GaussianMixtureModel,
    PotentialModel,
    QuadraticWellModel,
    ReLUStudentTeacherModel,
    all_potentials,
    batch_potential_hat,
    build_model,
    eval_F,
    eval_K,
    exact_mixture_loss,
    grad_F,
    grad_K,
    particle_potential,
    probe_potentials,
)
from .samplers import (
    GaussianSampler,
    PointSampler,
    ProductSampler,
    UniformSampler,
    build_sampler,
)

__version__ = "0.1.0"
