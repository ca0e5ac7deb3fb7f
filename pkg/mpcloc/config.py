# Contains constants shared across the package
import os


# propagation speed, meters per nanosecond
C_M_PER_NS = 0.299792458

BASE_DIR = os.path.dirname(os.path.abspath(__file__))

DEFAULTS_FILE = os.path.join(BASE_DIR, "harness/defaults/experiment.json")

# geometry tolerances
UNIT_NORM_TOL = 1e-6
DEGENERATE_DISTANCE_M = 1e-9
ANTIPODAL_TOL = 1e-9

# hard-indicator slack for zero-sigma likelihoods (ns)
INDICATOR_TOL_NS = 1e-9

# numeric maximizer
SOLVER_XATOL = 1e-6
SOLVER_FATOL = 1e-12
SOLVER_MAXITER = 4000
SOLVER_NOCONVERGE_TOL = 1e-10
MIN_DISTANCE_M = 1e-6

# linear solvers
MAX_CONDITION_NUMBER = 1e10

# unknown association
MAX_PERMUTATION_SIZE = 8

# association
DEFAULT_ANGLE_GATE_DEG = 30.0
ASSOC_REFINE_ITERATIONS = 2
RESIDUAL_GATE = 4.0
RESIDUAL_FLOOR_M = 0.1

# report rendering
REPORT_FLOAT_FORMAT = "%.9g"
MPC_FLOAT_FORMAT = "%.17g"

REPORT_COLUMNS = [
    "sweep_var", "sweep_value", "estimator", "rmse_m", "bias_m",
    "median_abs_err_m", "trials", "failures", "stderr_m",
]

MPC_COLUMNS = ["node", "observer", "mpc", "delay_ns", "dir_x", "dir_y", "dir_z", "sigma_ns"]
