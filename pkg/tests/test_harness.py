import math
from dataclasses import replace

import numpy as np
import pytest

from mpcloc.core.association import AssocParams
from mpcloc.core.channel import ChannelConfig
from mpcloc.core.distance import estimate_distance_fullyasync
from mpcloc.errors import ConfigInvalid, ValidationError
from mpcloc.harness import ESTIMATORS, ExperimentConfig, RmseRow, load_defaults, rss_beat_threshold, \
    run_experiment, sample_trial, toa_beat_criterion
from mpcloc.harness.models import TrialContext


@pytest.mark.parametrize("alpha, sigma_sh_db, k_min", [
    (2, 6.14492392567659, 2),
    (2, 6.13878207267742, 3),
    (2, 3.8856766940153, 3),
    (2, 3.88321995318415, 4),
    (2, 2.89597913484982, 4),
    (2, 2.89461427889317, 5),
    (2, 3.0, 4),
    (3, 9.21738588851489, 2),
    (3, 9.20817310901612, 3),
    (3, 4.34396870227473, 4),
    (3, 4.34192141833976, 5),
    (3, 0.999320183154416, 18),
    (3, 0.999211797540032, 19),
    (4, 2.36422722846969, 10),
    (4, 2.36377227650520, 11),
])
def test_rss_threshold_breakpoints(alpha, sigma_sh_db, k_min):
    assert rss_beat_threshold(alpha, sigma_sh_db) == k_min


def test_rss_threshold_grows_as_shadowing_vanishes():
    thresholds = [rss_beat_threshold(2, s) for s in (8.0, 4.0, 1.0, 0.1, 0.01)]
    assert thresholds == sorted(thresholds)
    assert thresholds[-1] > 1000
    with pytest.raises(ValueError):
        rss_beat_threshold(0, 3)


def test_toa_criterion():
    assert not toa_beat_criterion(1)
    assert not toa_beat_criterion(18)
    assert toa_beat_criterion(19)


def test_defaults_table():
    defaults = load_defaults()
    assert defaults["n_observers"] == 3
    assert defaults["k_per_observer"] == 4
    assert defaults["d_m"] == 2.5
    assert defaults["p_los"] == 0.5
    cfg = ExperimentConfig.from_dict(defaults)
    assert cfg.channel == ChannelConfig()
    assert cfg.to_dict() == defaults


@pytest.mark.parametrize("values, field", [
    ({"trials": 0}, "trials"),
    ({"estimators": ["MVUE", "BOGUS"]}, "estimators"),
    ({"sweep_var": "temperature"}, "sweep_var"),
    ({"sweep_var": "k", "sweep_values": [2.5]}, "sweep_values"),
    ({"n_alien": 13}, "n_alien"),
    ({"colour": "red"}, "colour"),
])
def test_invalid_experiments(values, field):
    with pytest.raises(ValidationError) as err:
        ExperimentConfig.from_dict({**load_defaults(), **values})
    assert err.value.field == field
    assert isinstance(err.value, ConfigInvalid)


def test_grid_points():
    cfg = ExperimentConfig(sweep_var="k", sweep_values=(2, 6))
    assert cfg.grid == [2, 6]
    assert cfg.at(6).channel.k_per_observer == 6
    assert ExperimentConfig(sweep_var="sigma_dir").grid == [0.0]
    assert ExperimentConfig(sweep_var="p_los").at(1.0).channel.p_los == 1.0


def test_row_aggregation():
    errors = np.array([[3.0, 0, 0], [-4.0, 0, 0], [np.nan, np.nan, np.nan]])
    row = RmseRow.from_errors("d", 1.0, "MVUE", errors)
    assert row.trials == 3 and row.failures == 1
    assert row.rmse_m == pytest.approx(math.sqrt(12.5))
    assert row.bias_m == pytest.approx(-0.5)
    assert row.median_abs_err_m == pytest.approx(3.5)


def test_small_run_covers_every_estimator():
    cfg = ExperimentConfig(trials=6, seed=3, estimators=tuple(ESTIMATORS), sweep_values=(1.0, 2.5))
    report = run_experiment(cfg, progress=False)

    assert len(report.rows) == 2 * len(ESTIMATORS)
    for row in report.rows:
        assert row.trials == 6
        assert 0 <= row.failures <= 6
        assert row.failures == 6 or row.rmse_m >= 0
    frame = report.to_frame()
    assert list(frame["sweep_value"]) == sorted(frame["sweep_value"])


def test_fully_asynchronous_run():
    cfg = ExperimentConfig(
        channel=ChannelConfig(per_observer_offsets=True, k_per_observer=5),
        trials=5, estimators=("MVUE", "MLE", "MVUE_SYNC", "DD", "DD_SYNC", "TAU", "TAU_SYNC"),
    )
    report = run_experiment(cfg, progress=False)
    assert report.row("MVUE_SYNC").failures == 0
    assert report.row("DD").failures == 0


def test_mvue_with_per_observer_offsets_runs_the_fully_asynchronous_mle():
    cfg = ExperimentConfig(channel=ChannelConfig(per_observer_offsets=True, k_per_observer=5), seed=3)
    scenario = sample_trial(cfg, 0, 0)
    obs = scenario.observation()
    assert obs.per_observer_offsets

    ctx = TrialContext(scenario, AssocParams(), np.random.default_rng(0))
    expected = estimate_distance_fullyasync(replace(obs, sigma_ns=None)).d_hat_m
    assert ESTIMATORS["MVUE"].run(ctx) == pytest.approx(expected, rel=1e-12)
    assert "fully asynchronous MLE" in ESTIMATORS["MVUE"].description


def test_run_is_reproducible_across_workers():
    cfg = ExperimentConfig(trials=10, seed=42, estimators=("MVUE", "DD", "SORT"), n_alien=1, sigma_dir_deg=1.0)
    serial = run_experiment(cfg, progress=False, chunk_size=3)
    parallel = run_experiment(replace(cfg, workers=2), progress=False, chunk_size=4)
    for key, errors in serial.errors.items():
        np.testing.assert_array_equal(errors, parallel.errors[key])
    assert serial.to_frame().equals(parallel.to_frame())


def test_trial_sampling_is_keyed():
    cfg = ExperimentConfig(seed=1)
    first = sample_trial(cfg, 0, 5).observation()
    again = sample_trial(cfg, 0, 5).observation()
    other = sample_trial(cfg, 1, 5).observation()
    np.testing.assert_array_equal(first.delta_ns, again.delta_ns)
    assert not np.array_equal(first.delta_ns, other.delta_ns)


def test_default_channel_mvue_sanity():
    report = run_experiment(ExperimentConfig(trials=300, estimators=("MVUE",)), progress=False)
    row = report.row("MVUE")
    assert row.failures == 0
    assert 0.22 < row.rmse_m < 0.40


def test_plane_wave_error_grows_with_distance():
    cfg = ExperimentConfig(trials=200, seed=5, estimators=("PWA",), sweep_values=(0.5, 5.0))
    report = run_experiment(cfg, progress=False)
    assert report.row("PWA", 5.0).median_abs_err_m > report.row("PWA", 0.5).median_abs_err_m


########################################################################################################################
# full-size reproductions


@pytest.mark.slow
def test_distance_rmse_at_default_point():
    cfg = ExperimentConfig(trials=100_000, d_m=2.5119, estimators=("MVUE",), workers=4)
    report = run_experiment(cfg, progress=False)
    assert report.row("MVUE").rmse_m == pytest.approx(0.30, rel=0.05)


@pytest.mark.slow
def test_position_rmse_over_distance():
    cfg = ExperimentConfig(trials=20_000, estimators=("DD", "TAU", "TAU_SYNC"), sweep_values=(0.1, 1.0, 2.5119, 10.0),
                           workers=4)
    report = run_experiment(cfg, progress=False)
    for value in cfg.sweep_values:
        assert 0.055 <= report.row("DD", value).rmse_m <= 0.080
    assert report.row("TAU", 2.5119).rmse_m == pytest.approx(0.027, rel=0.2)
    assert report.row("TAU_SYNC", 2.5119).rmse_m == pytest.approx(0.018, rel=0.2)


@pytest.mark.slow
def test_direction_error_robustness():
    cfg = ExperimentConfig(trials=10_000, d_m=1.0, estimators=("DD", "DDN", "TAU"), sweep_var="sigma_dir",
                           sweep_values=(1.0, 2.0, 4.0), workers=4)
    report = run_experiment(cfg, progress=False)
    assert report.row("TAU", 1.0).rmse_m >= 0.15
    assert report.row("DD", 1.0).rmse_m <= 0.08
    for value in cfg.sweep_values:
        dd, ddn = report.row("DD", value).rmse_m, report.row("DDN", value).rmse_m
        assert abs(ddn - dd) <= 0.05 * dd


@pytest.mark.slow
def test_mle_mvue_crossover():
    cfg = ExperimentConfig(trials=10_000, estimators=("MVUE", "MLE"), sweep_values=(0.1, 10.0), workers=4)
    report = run_experiment(cfg, progress=False)

    def gap(value):
        mvue, mle = report.row("MVUE", value), report.row("MLE", value)
        return mvue.rmse_m - mle.rmse_m, 3 * math.hypot(mvue.stderr_m, mle.stderr_m)

    diff, tol = gap(0.1)
    assert diff > tol
    diff, tol = gap(10.0)
    assert -diff > tol


@pytest.mark.slow
def test_alien_robustness_ordering():
    cfg = ExperimentConfig(trials=10_000, estimators=("MVUE", "DD", "DDN"), sweep_var="n_alien",
                           sweep_values=(2, 6), workers=4)
    report = run_experiment(cfg, progress=False)
    assert report.row("MVUE", 2).median_abs_err_m > 1.0
    assert report.row("DD", 2).median_abs_err_m > 1.0
    assert report.row("DDN", 2).median_abs_err_m < 0.10
    assert report.row("DDN", 6).median_abs_err_m < 0.16
