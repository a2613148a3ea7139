"""Driven-dissipative preparation of entangled dimer and multimer dark states."""

from .model import (
    BathConfig,
    ControlMode,
    DriveProtocol,
    NoiseConfig,
    PairingSpec,
    SystemModel,
    assemble_model,
    build_coherent_interaction,
    build_control_field,
    build_drive,
    build_x_operator,
    drive_value,
    singlet,
    target_state,
    theta_of_omega,
    triplet,
)
from .dynamics import StabilityError, Trajectory, evolve, lindblad_rhs, relax_constant
from .liouville import (
    GapResult,
    LiouvillianMatrix,
    SteadyStateResult,
    build_liouvillian,
    devectorize,
    dimer_time_from_fidelity,
    fidelity_from_dimer_time,
    finite_drive_dimer_state,
    liouvillian_gap,
    propagate_expm,
    qsl_activity,
    steady_state,
    vectorize,
)
from .metrics import concurrence, fidelity_to_pure, partial_trace, purity
from .operators import collective_lowering, embed_site_operator, ground_state

__version__ = "0.1.0"
