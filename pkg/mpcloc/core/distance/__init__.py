from .models import (
    DistanceEstimate,
    Variant,
    RmseCase,
    distance_loglik,
    estimate_distance_mle,
    estimate_distance_closedform,
    clock_offset_mvue,
    analytic_rmse,
    mean_mle_bias_factor,
    noassoc_loglik,
    estimate_distance_noassoc,
    estimate_distance_fullyasync,
    velocity_loglik,
)
