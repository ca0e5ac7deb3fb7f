from .models import (
    MpcGeometry,
    ProjectionMode,
    as_vec3,
    check_unit,
    mpc_pair_from_virtual_source,
    relpos_from_single_mpc,
    projection_residual,
    s_vector,
    s_vectors,
    random_unit_vectors,
    perturb_in_cone,
    angle_between_deg,
)
