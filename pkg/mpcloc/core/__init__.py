from .geometry import MpcGeometry, ProjectionMode, mpc_pair_from_virtual_source, relpos_from_single_mpc, \
    projection_residual, s_vector
from .observation import Observation, SideSet, UnpairedObservation
from .channel import ChannelConfig, ChannelModel, Scenario, sample_scenario, corrupt_directions, inject_aliens
from .distance import DistanceEstimate, distance_loglik, estimate_distance_mle, estimate_distance_closedform, \
    analytic_rmse, noassoc_loglik, estimate_distance_noassoc
from .position import PositionEstimate, DeltaMode, TauMode, estimate_position_by_delta, \
    estimate_clock_offset_given_d, estimate_position_by_tau
from .association import AssocParams, Association, association_cost, associate, evaluate_association
