"""Finite-volume simulation of multi-species nonlocal aggregation equations
and of their cross-diffusion localisation limit."""

from .diagnostics import (
    DiagnosticsRecord,
    RadialProfile,
    l2_distance,
    mass_radius,
    quadratic_energy,
    radial_profile,
    record,
)
from .experiment import (
    ConfigError,
    ExperimentConfig,
    RunResult,
    SweepResult,
    build_model,
    build_strategy,
    epsilon_sweep,
    initial_condition,
    run_case,
)
from .grid import Field, Grid2D, KernelSamples, convolve, gradient_at_edges, integrate, second_moment
from .kernels import (
    GaussianMollifier,
    InteractionModel,
    TabulatedMollifier,
    ValidationReport,
    gamma_matrix,
    kernel_closed_form,
    mollifier_eval,
    validate_model,
)
from .solver import (
    BlowUpError,
    LocalPotential,
    NonlocalPotential,
    SchemeParams,
    SolverError,
    SpeciesState,
    advance_step,
    compute_potentials,
    run_to_time,
)

__version__ = "0.1.0"
