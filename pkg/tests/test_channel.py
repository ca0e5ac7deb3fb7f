import math

import numpy as np
import pytest
from scipy.stats import kstest

from mpcloc import config
from mpcloc.core.channel import ChannelConfig, ChannelModel, corrupt_directions, inject_aliens, measurement_sigma, \
    path_amplitude_sq, pdp_moments, pdp_value, sample_scenario
from mpcloc.core.geometry import angle_between_deg, random_unit_vectors, relpos_from_single_mpc
from mpcloc.errors import ValidationError

C = config.C_M_PER_NS


def test_pdp_moments_match_quoted_values():
    mean, rms = pdp_moments(ChannelConfig())
    assert mean == pytest.approx(36.5, rel=0.01)
    assert rms == pytest.approx(30.3, rel=0.01)


def test_pdp_rises_then_decays():
    cfg = ChannelConfig()
    assert pdp_value(0.0, cfg) == pytest.approx(cfg.pdp_amplitude * (1 - cfg.chi))
    assert pdp_value(15.0, cfg) > pdp_value(0.0, cfg)
    assert pdp_value(200.0, cfg) < pdp_value(15.0, cfg)
    with pytest.raises(ValueError):
        pdp_value(-1.0, cfg)


def test_los_sinr_and_ranging_sigma():
    cfg = ChannelConfig()
    sinr, sigma = measurement_sigma(path_amplitude_sq(cfg.tau_min_ns, 1.0, cfg), 0.0, cfg)
    assert 10 * math.log10(sinr) == pytest.approx(20.85, abs=0.01)
    assert C * sigma == pytest.approx(5.30e-3, rel=0.02)


def test_excess_delay_draws_follow_pdp(rng):
    cfg = ChannelConfig()
    draws = ChannelModel(cfg).sample_excess_delays(rng, 200_000)
    assert draws.min() >= 0 and draws.max() <= cfg.pdp_support_ns
    assert draws.mean() == pytest.approx(pdp_moments(cfg)[0], rel=0.01)


@pytest.mark.parametrize("field, value", [
    ("p_los", 1.5),
    ("n_observers", 0),
    ("k_per_observer", 0),
    ("chi", 1.2),
    ("bandwidth_ghz", 0.0),
])
def test_config_validation_names_field(field, value):
    with pytest.raises(ValidationError) as err:
        ChannelConfig(**{field: value})
    assert err.value.field == field


def test_scenario_shape_and_geometry():
    cfg = ChannelConfig(n_observers=3, k_per_observer=4)
    scenario = sample_scenario(cfg, 2.5, seed=7)

    assert len(scenario.mpcs) == 12
    assert scenario.distance_m == pytest.approx(2.5)
    np.testing.assert_allclose(np.linalg.norm(scenario.observers - scenario.pos_a, axis=1), cfg.observer_radius_m)
    for m in scenario.mpcs:
        np.testing.assert_allclose(relpos_from_single_mpc(m.geometry), scenario.d_vec, atol=1e-9)
        assert m.sigma_a_ns > 0 and m.sigma_b_ns > 0

    for o in range(cfg.n_observers):
        group = scenario.mpcs_of(o)
        nlos = [m.geometry.tau_a_ns for m in group if not m.is_los]
        assert nlos == sorted(nlos)
        assert all(not m.is_los for m in group[1:])


def test_scenario_is_reproducible():
    cfg = ChannelConfig()
    first = sample_scenario(cfg, 1.0, seed=3).observation()
    second = sample_scenario(cfg, 1.0, seed=3).observation()
    np.testing.assert_array_equal(first.delta_ns, second.delta_ns)
    np.testing.assert_array_equal(first.dir_b, second.dir_b)


def test_error_free_delay_differences_carry_the_offset():
    cfg = ChannelConfig(measurement_errors=False)
    scenario = sample_scenario(cfg, [1.0, -0.5, 0.2], seed=11)
    obs = scenario.observation(sync=True)

    true_delta = np.array([m.geometry.delta_ns for m in scenario.mpcs])
    np.testing.assert_allclose(obs.delta_ns, true_delta + scenario.eps_ns, atol=1e-9)
    assert obs.eps_ns == scenario.eps_ns
    np.testing.assert_allclose(obs.sigma_ns, 0.0)
    assert abs(scenario.eps_ns) <= cfg.clock_offset_max_ns


def test_per_observer_offsets():
    cfg = ChannelConfig(per_observer_offsets=True, n_observers=4)
    scenario = sample_scenario(cfg, 2.0, seed=5)
    assert np.unique(scenario.eps_per_obs).size == 4
    obs = scenario.observation()
    assert obs.per_observer_offsets and not obs.is_sync


def test_direction_corruption():
    cfg = ChannelConfig(k_per_observer=8)
    scenario = sample_scenario(cfg, 2.5, seed=2)
    assert corrupt_directions(scenario, 0.0, seed=1) is scenario

    corrupted = corrupt_directions(scenario, 2.0, seed=1)
    true = np.array([m.geometry.dir_a for m in corrupted.mpcs])
    measured = np.array([m.dir_meas_a for m in corrupted.mpcs])
    angles = angle_between_deg(true, measured)
    assert np.all(angles > 0) and np.all(angles < 10.0)
    np.testing.assert_allclose(np.linalg.norm(measured, axis=1), 1.0)


def test_alien_injection_preserves_b_order():
    cfg = ChannelConfig(k_per_observer=6)
    scenario = sample_scenario(cfg, 2.5, seed=9)
    corrupted = inject_aliens(scenario, 4, seed=9)

    aliens = [m for m in corrupted.mpcs if m.is_alien]
    assert len(aliens) == 4
    assert all(m.path_id_b != m.path_id for m in aliens)
    for o in range(cfg.n_observers):
        before = [m.geometry.tau_b_ns for m in scenario.mpcs_of(o)]
        after = [m.geometry.tau_b_ns for m in corrupted.mpcs_of(o)]
        np.testing.assert_array_equal(np.argsort(before), np.argsort(after))


def test_too_many_aliens():
    scenario = sample_scenario(ChannelConfig(n_observers=1, k_per_observer=2), 1.0, seed=0)
    with pytest.raises(ValidationError):
        inject_aliens(scenario, 3, seed=0)


def test_unpaired_view_shuffles_b(rng):
    scenario = sample_scenario(ChannelConfig(k_per_observer=6), 2.5, seed=4)
    unpaired = scenario.unpaired(rng=rng)
    for o, (set_a, set_b) in enumerate(zip(unpaired.sets_a, unpaired.sets_b)):
        assert sorted(set_a.path_ids) == sorted(set_b.path_ids)
        assert len(set_a) == 6


def test_alien_injection_always_succeeds():
    cfg = ChannelConfig(n_observers=2, k_per_observer=6)
    for seed in range(20):
        scenario = sample_scenario(cfg, 4.0, seed=seed)
        corrupted = inject_aliens(scenario, len(scenario.mpcs), seed=seed)
        assert all(m.is_alien for m in corrupted.mpcs)
        for o in range(cfg.n_observers):
            before = [m.geometry.tau_b_ns for m in scenario.mpcs_of(o)]
            after = [m.geometry.tau_b_ns for m in corrupted.mpcs_of(o)]
            np.testing.assert_array_equal(np.argsort(before), np.argsort(after))


def test_b_side_interference_is_relative_to_b_los():
    cfg = ChannelConfig(p_los=1.0, n_observers=4)
    scenario = sample_scenario(cfg, 3.0, seed=6)
    for m in scenario.mpcs:
        if m.is_los:
            sinr, sigma = measurement_sigma(path_amplitude_sq(m.geometry.tau_b_ns, 1.0, cfg), 0.0, cfg)
            assert m.sinr_b == pytest.approx(sinr, rel=1e-9)
            assert m.sigma_b_ns == pytest.approx(sigma, rel=1e-9)


def test_conditional_excess_delay(rng):
    model = ChannelModel(ChannelConfig())
    for lower, upper in [(0.0, 5.0), (20.0, 21.0), (100.0, 400.0), (300.0, 310.0), (250.0, math.inf)]:
        draws = [model.sample_excess_delay_between(rng, lower, upper) for _ in range(200)]
        assert min(draws) >= lower and max(draws) <= upper
    unconditional = [model.sample_excess_delay_between(rng, -np.inf, np.inf) for _ in range(50_000)]
    assert np.mean(unconditional) == pytest.approx(pdp_moments(ChannelConfig())[0], rel=0.02)
    with pytest.raises(ValueError):
        model.sample_excess_delay_between(rng, 10.0, 10.0)


def test_nlos_sinr_fractions(rng):
    cfg = ChannelConfig()
    excess = ChannelModel(cfg).sample_excess_delays(rng, 1_000_000)
    sinr, _ = measurement_sigma(path_amplitude_sq(cfg.tau_min_ns + excess, cfg.xi_nlos, cfg), excess, cfg)
    sinr_db = 10 * np.log10(sinr)
    assert np.mean(sinr_db < 10) == pytest.approx(0.93, abs=0.01)
    assert np.mean(sinr_db < 0) == pytest.approx(0.04, abs=0.005)


def test_direction_sampler_moments(rng):
    dirs = random_unit_vectors(rng, 1_000_000)
    assert np.all(np.abs(dirs.mean(axis=0)) < 0.005)
    np.testing.assert_allclose(np.cov(dirs.T), np.eye(3) / 3, atol=0.01 / 3)


def test_plane_wave_delay_differences_are_uniform(rng):
    d = np.array([1.2, -0.7, 0.4])
    half = float(np.linalg.norm(d))
    c_delta = random_unit_vectors(rng, 1_000_000) @ d
    assert kstest(c_delta, "uniform", args=(-half, 2 * half)).statistic < 0.002


def test_friis_doubling():
    cfg = ChannelConfig()
    tau = np.array([16.7, 40.0, 123.4])
    np.testing.assert_array_equal(path_amplitude_sq(2 * tau, 1.0, cfg), path_amplitude_sq(tau, 1.0, cfg) / 4)


def test_cone_angle_mean():
    scenario = sample_scenario(ChannelConfig(n_observers=50, k_per_observer=1000), 1.0, seed=12)
    corrupted = corrupt_directions(scenario, 5.0, seed=13)
    angles = np.concatenate([
        angle_between_deg(np.array([m.geometry.dir_a for m in corrupted.mpcs]),
                          np.array([m.dir_meas_a for m in corrupted.mpcs])),
        angle_between_deg(np.array([m.geometry.dir_b for m in corrupted.mpcs]),
                          np.array([m.dir_meas_b for m in corrupted.mpcs])),
    ])
    assert angles.size == 100_000
    assert angles.mean() == pytest.approx(5.0 * math.sqrt(2 / math.pi), rel=0.02)
