"""Simulation and verification toolkit for the randomly forced heat recursion
u_{n+1} = P u_n + sigma(u_n) xi_n on the integer lattice."""

from .fields import LatticeField, box_field, delta_field, max_abs_diff
from .kernels import (
    KernelSlice,
    WalkKernel,
    apply_transition,
    char_function,
    custom_kernel,
    lazy_kernel,
    make_kernel,
    n_step_kernel,
    overlap_q,
    simple_kernel,
)
from .moments import (
    ExponentEstimate,
    MomentSeries,
    TemporalReport,
    VerdictReport,
    estimate_exponent,
    exact_second_moment,
    intermittency_verdict,
    mc_moments,
    sup_series,
    temporal_gamma,
    temporal_gamma_prime0,
    temporal_report,
)
from .noise import (
    NoiseModel,
    NoiseSlice,
    NoiseStream,
    constant_noise,
    make_noise,
    noise_stats,
    rademacher_noise,
    sample_slice,
    temporal_path,
    uniform_noise,
)
from .solver import (
    ComparisonReport,
    InvariantViolation,
    PicardDiagnostics,
    RegionError,
    SigmaSpec,
    Trajectory,
    affine_sigma,
    check_comparison,
    custom_sigma,
    duhamel_eval,
    evolve,
    iter_evolution,
    linear_sigma,
    make_sigma,
    picard_solve,
    step,
    support_metrics,
)
from .spectral import (
    BoundReport,
    SpectralProfile,
    burkholder_constant,
    confluent_series_value,
    liapounov_bounds,
    simple_walk_exponent_threshold,
    simple_walk_lambda_upsilon,
    simple_walk_overlap,
    upsilon,
    upsilon_inverse,
)

__version__ = "0.1.0"
