"""Coupling-by-change-of-measure simulator and Monte Carlo checks of dimension-free Harnack inequalities."""

from .bounds import (
    BoundInputs,
    bound_harnack_exponent,
    bound_log_harnack,
    effective_delta,
    entropy_bound,
    exp_moment_bound,
    exp_moment_rate,
    moment_bound,
    moment_order_r,
    ou_kernel_kl,
    theta_for_power,
)
from .coupling import (
    CoupledTrajectory,
    CouplingConfig,
    RefinementPolicy,
    girsanov_log_weight,
    simulate_coupled_batch,
    simulate_coupled_pair,
    xi_schedule,
)
from .harnack import (
    RunParams,
    VerificationReport,
    mc_semigroup,
    verify_harnack_power,
    verify_identity,
    verify_log_harnack,
    verify_weight_bounds,
)
from .sde_core import (
    AssumptionConstants,
    ModelSpec,
    RngStreamSpec,
    estimate_constants,
    simulate_path,
    step_euler,
)

__version__ = "0.1.0"
