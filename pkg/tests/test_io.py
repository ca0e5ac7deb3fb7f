import json

import numpy as np
import pytest

from mpcloc.core.channel import ChannelConfig, sample_scenario
from mpcloc.core.observation import Observation, UnpairedObservation
from mpcloc.errors import CountMismatch, ParseError, ReportWriteError, SchemaError, ValidationError
from mpcloc.harness import ExperimentConfig, RmseReport, RmseRow, run_experiment
from mpcloc.io import parse_config, read_mpc_file, write_mpc_file, write_report_csv

HEADER = "node,observer,mpc,delay_ns,dir_x,dir_y,dir_z,sigma_ns\n"


def _write(path, text):
    path.write_text(text)
    return str(path)


########################################################################################################################
# configuration


def test_empty_config_gives_defaults(tmp_path):
    cfg = parse_config(_write(tmp_path / "empty.json", "{}"))
    assert cfg.channel.n_observers == 3
    assert cfg.channel.k_per_observer == 4
    assert cfg.d_m == 2.5
    assert cfg.channel.p_los == 0.5


def test_yaml_config(tmp_path):
    cfg = parse_config(_write(tmp_path / "run.yaml", "trials: 50\nsweep_var: k\nsweep_values: [2, 4, 8]\n"))
    assert cfg.trials == 50
    assert cfg.grid == [2, 4, 8]
    assert parse_config(_write(tmp_path / "blank.yml", "")).trials == 1000


@pytest.mark.parametrize("content, field", [
    ({"p_los": 1.5}, "p_los"),
    ({"trials": 0}, "trials"),
    ({"trails": 10}, "trails"),
])
def test_invalid_config_values(tmp_path, content, field):
    with pytest.raises(ValidationError) as err:
        parse_config(_write(tmp_path / "bad.json", json.dumps(content)))
    assert err.value.field == field


def test_malformed_json_reports_position(tmp_path):
    with pytest.raises(ParseError) as err:
        parse_config(_write(tmp_path / "broken.json", '{\n  "trials": 10,\n  "seed": }\n'))
    assert err.value.line == 3
    assert err.value.column is not None


def test_malformed_yaml_reports_position(tmp_path):
    with pytest.raises(ParseError) as err:
        parse_config(_write(tmp_path / "broken.yaml", "trials: [1, 2\nseed: 3\n"))
    assert err.value.line is not None


def test_non_object_config(tmp_path):
    with pytest.raises(ParseError):
        parse_config(_write(tmp_path / "list.json", "[1, 2]"))


########################################################################################################################
# MPC files


def test_two_rows_make_one_pair(tmp_path):
    path = _write(tmp_path / "pair.csv", HEADER + "A,0,0,10,,,,\nB,0,0,12,,,,\n")
    obs = read_mpc_file(path)
    assert isinstance(obs, Observation)
    np.testing.assert_allclose(obs.delta_ns, [2.0])
    assert obs.dir_a is None and obs.sigma_ns is None


def test_partial_direction_triple(tmp_path):
    path = _write(tmp_path / "partial.csv", HEADER + "A,0,0,10,1,,0,\nB,0,0,12,1,0,0,\n")
    with pytest.raises(SchemaError):
        read_mpc_file(path)


def test_bad_header(tmp_path):
    with pytest.raises(SchemaError):
        read_mpc_file(_write(tmp_path / "header.csv", "node,observer,delay_ns\nA,0,10\n"))


def test_negative_delay(tmp_path):
    with pytest.raises(SchemaError):
        read_mpc_file(_write(tmp_path / "negative.csv", HEADER + "A,0,0,-1,,,,\nB,0,0,2,,,,\n"))


def test_count_mismatch(tmp_path):
    rows = ["A,0,0,10,,,,", "B,0,0,11,,,,"]
    rows += [f"A,1,{k},{20 + k},,,," for k in range(3)] + [f"B,1,{k},{21 + k},,,," for k in range(2)]
    path = _write(tmp_path / "mismatch.csv", HEADER + "\n".join(rows) + "\n")
    with pytest.raises(CountMismatch):
        read_mpc_file(path, paired=True)

    unpaired = read_mpc_file(path, paired=False)
    assert isinstance(unpaired, UnpairedObservation)
    assert [len(s) for s in unpaired.sets_a] == [1, 3]
    assert [len(s) for s in unpaired.sets_b] == [1, 2]


def test_directions_are_normalized(tmp_path):
    path = _write(tmp_path / "dirs.csv", HEADER + "A,0,0,10,2,0,0,0.1\nB,0,0,12,0,0,3,0.1\n")
    obs = read_mpc_file(path)
    np.testing.assert_allclose(obs.dir_a, [[1, 0, 0]])
    np.testing.assert_allclose(obs.dir_b, [[0, 0, 1]])
    np.testing.assert_allclose(obs.sigma_ns, [np.hypot(0.1, 0.1)])


def test_rows_are_ordered_by_mpc_index(tmp_path):
    path = _write(tmp_path / "order.csv", HEADER + "B,0,1,25,,,,\nA,0,1,20,,,,\nA,0,0,10,,,,\nB,0,0,11,,,,\n")
    np.testing.assert_allclose(read_mpc_file(path).delta_ns, [1.0, 5.0])


def test_observation_round_trip(tmp_path, exact_observation):
    obs = exact_observation([1.0, 0.5, -0.3], 4, n_observers=3, eps_ns=2.0, eps_a_ns=[1.0, 2.0, 3.0])
    obs = Observation(
        observer=obs.observer, delta_ns=obs.delta_ns, tau_a_ns=obs.tau_a_ns, tau_b_ns=obs.tau_b_ns,
        dir_a=obs.dir_a, dir_b=obs.dir_b, sigma_ns=np.linspace(0.01, 0.2, 12),
    )
    path = str(tmp_path / "mpcs.csv")
    write_mpc_file(obs, path)
    back = read_mpc_file(path)

    np.testing.assert_array_equal(back.observer, obs.observer)
    np.testing.assert_allclose(back.tau_a_ns, obs.tau_a_ns, atol=1e-9)
    np.testing.assert_allclose(back.delta_ns, obs.delta_ns, atol=1e-9)
    np.testing.assert_allclose(back.dir_b, obs.dir_b, atol=1e-12)
    np.testing.assert_allclose(back.sigma_ns, obs.sigma_ns, rtol=1e-12)


def test_scenario_dump(tmp_path):
    scenario = sample_scenario(ChannelConfig(), 2.5, seed=1)
    path = str(tmp_path / "scenario.csv")
    write_mpc_file(scenario, path)
    obs = read_mpc_file(path)
    np.testing.assert_allclose(obs.delta_ns, scenario.observation().delta_ns, atol=1e-9)


def test_delay_differences_alone_cannot_be_written(tmp_path):
    with pytest.raises(SchemaError):
        write_mpc_file(Observation.from_deltas([[1.0, 2.0]]), str(tmp_path / "x.csv"))


########################################################################################################################
# reports


def _row(value, estimator):
    return RmseRow("d", value, estimator, 0.123456789123, 0.01, 0.1, 100, 0, 0.001)


def test_report_rows_are_sorted(tmp_path):
    report = RmseReport(rows=[_row(2.0, "MVUE"), _row(1.0, "MVUE"), _row(1.0, "DD")])
    path = tmp_path / "report.csv"
    write_report_csv(report, str(path))

    lines = path.read_text().splitlines()
    assert lines[0] == "sweep_var,sweep_value,estimator,rmse_m,bias_m,median_abs_err_m,trials,failures,stderr_m"
    assert [line.split(",")[1:3] for line in lines[1:]] == [["1", "DD"], ["1", "MVUE"], ["2", "MVUE"]]
    assert lines[1].split(",")[3] == "0.123456789"


def test_single_and_empty_reports(tmp_path):
    single = tmp_path / "single.csv"
    write_report_csv(RmseReport(rows=[_row(1.0, "MVUE")]), str(single))
    assert len(single.read_text().splitlines()) == 2

    empty = tmp_path / "empty.csv"
    write_report_csv(RmseReport(), str(empty))
    assert len(empty.read_text().splitlines()) == 1


def test_identical_runs_write_identical_bytes(tmp_path):
    cfg = ExperimentConfig(trials=5, estimators=("MVUE", "DD"), seed=9)
    first, second = tmp_path / "a.csv", tmp_path / "b.csv"
    write_report_csv(run_experiment(cfg, progress=False), str(first))
    write_report_csv(run_experiment(cfg, progress=False), str(second))
    assert first.read_bytes() == second.read_bytes()


def test_unwritable_report(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(ReportWriteError):
        write_report_csv(RmseReport(), str(blocker / "report.csv"))
