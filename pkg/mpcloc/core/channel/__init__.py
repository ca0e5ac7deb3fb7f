from .models import (
    ChannelConfig,
    ChannelModel,
    Mpc,
    Scenario,
    pdp_value,
    pdp_moments,
    path_amplitude_sq,
    measurement_sigma,
    sample_scenario,
    corrupt_directions,
    inject_aliens,
)
