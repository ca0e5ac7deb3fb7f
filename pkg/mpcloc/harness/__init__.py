from .models import (
    ExperimentConfig,
    RmseReport,
    RmseRow,
    ESTIMATORS,
    SWEEP_VARS,
    run_experiment,
    sample_trial,
    load_defaults,
)
from .analytic import rss_beat_threshold, toa_beat_criterion
