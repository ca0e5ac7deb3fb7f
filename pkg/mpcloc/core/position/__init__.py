from .models import (
    ProjectionSystem,
    TauSystem,
    PositionEstimate,
    DeltaMode,
    TauMode,
    build_projection_system,
    build_tau_system,
    estimate_position_by_delta,
    delta_residuals,
    estimate_clock_offset_given_d,
    estimate_position_by_tau,
    estimate_position_mle,
    approx_position_rmse,
)
