########################################################################################################################
# imports

import argparse
import logging
import math
import sys
from dataclasses import replace
from typing import Callable, Dict, List, Optional

import numpy as np
import pandas as pd

from mpcloc import config
from mpcloc.core.association import AssocParams, associate_by_delay_sort, associate_with_fit
from mpcloc.core.distance import RmseCase, Variant, analytic_rmse, estimate_distance_closedform, \
    estimate_distance_mle, estimate_distance_noassoc, mean_mle_bias_factor
from mpcloc.core.observation import Observation, UnpairedObservation
from mpcloc.core.position import DeltaMode, TauMode, approx_position_rmse, estimate_position_by_delta, \
    estimate_position_by_tau
from mpcloc.errors import ConfigInvalid, DataError, EstimatorError, GeometryError, InsufficientMpcs, \
    ReportWriteError, ValidationError
from mpcloc.harness import ExperimentConfig, load_defaults, rss_beat_threshold, run_experiment, sample_trial, \
    toa_beat_criterion
from mpcloc.io import parse_config, read_mpc_file, write_estimates_csv, write_mpc_file, write_report_csv


logger = logging.getLogger(__name__)

########################################################################################################################
# arguments


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("-v", "--verbose", action="store_true", dest="verbose", help="debug logging")
    parser.add_argument("--quiet", action="store_true", dest="quiet", help="no progress bar, warnings only")


def _experiment(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=str, dest="config", default=None, help="JSON or YAML experiment config")
    parser.add_argument("--seed", type=int, dest="seed", default=None)
    parser.add_argument("--trials", type=int, dest="trials", default=None)
    parser.add_argument("--workers", type=int, dest="workers", default=None)
    parser.add_argument("--estimators", type=str, dest="estimators", default=None,
                        help="comma-separated estimator names")
    parser.add_argument("--out", type=str, dest="out", default=None, help="report CSV (default: stdout)")


def parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(prog="mpcloc", description="UWB multipath distance and position estimation")
    subparsers = parser.add_subparsers(dest="command", required=True)

    simulate = subparsers.add_parser("simulate", help="Monte Carlo run at the configured base point")
    _experiment(simulate)
    simulate.add_argument("--dump-mpcs", type=str, dest="dump_mpcs", default=None,
                          help="write the MPCs of the first trial to this CSV")
    _common(simulate)

    sweep = subparsers.add_parser("sweep", help="Monte Carlo run over a one-dimensional grid")
    _experiment(sweep)
    sweep.add_argument("--sweep-var", type=str, dest="sweep_var", default=None)
    sweep.add_argument("--values", type=str, dest="values", default=None, help="comma-separated grid values")
    _common(sweep)

    estimate = subparsers.add_parser("estimate", help="run estimators on a measured MPC file")
    estimate.add_argument("-i", type=str, dest="input_file", required=True, help="MPC CSV")
    estimate.add_argument("--estimators", type=str, dest="estimators", default=None)
    estimate.add_argument("--eps-ns", type=float, dest="eps_ns", default=None, help="known clock offset")
    estimate.add_argument("--lambda-per-ns", type=float, dest="lambda_per_ns", default=None)
    estimate.add_argument("--angle-gate-deg", type=float, dest="angle_gate_deg",
                          default=config.DEFAULT_ANGLE_GATE_DEG)
    estimate.add_argument("--out", type=str, dest="out", default=None)
    _common(estimate)

    analytic = subparsers.add_parser("analytic", help="closed-form RMSE laws and comparison thresholds")
    analytic.add_argument("--d", type=float, dest="d_m", default=load_defaults()["d_m"])
    analytic.add_argument("--k", type=int, dest="k", default=12)
    analytic.add_argument("--sigma-ns", type=float, dest="sigma_ns", default=None,
                          help="delay error sigma for the position approximation")
    analytic.add_argument("--alpha", type=float, dest="alpha", default=None, help="path-loss exponent")
    analytic.add_argument("--sigma-sh-db", type=float, dest="sigma_sh_db", default=None, help="shadowing sigma")
    _common(analytic)

    return parser.parse_args(argv)


def _setup_logging(args: argparse.Namespace) -> None:
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")


def _names(value: Optional[str]) -> Optional[List[str]]:
    if value is None:
        return None
    return [name.strip().upper() for name in value.split(",") if name.strip()]


def _floats(value: str, field: str) -> List[float]:
    try:
        return [float(v) for v in value.split(",") if v.strip()]
    except ValueError as err:
        raise ValidationError(field, f"not a number list ({value})") from err


########################################################################################################################
# subcommands


def _experiment_config(args: argparse.Namespace) -> ExperimentConfig:
    if args.config is not None:
        cfg = parse_config(args.config)
    else:
        cfg = ExperimentConfig.from_dict(load_defaults())

    overrides = {}
    for key in ("seed", "trials", "workers"):
        if getattr(args, key) is not None:
            overrides[key] = getattr(args, key)
    if args.estimators is not None:
        overrides["estimators"] = _names(args.estimators)
    if getattr(args, "sweep_var", None) is not None:
        overrides["sweep_var"] = args.sweep_var
    if getattr(args, "values", None) is not None:
        overrides["sweep_values"] = _floats(args.values, "sweep_values")
    return replace(cfg, **overrides)


def _emit_report(cfg: ExperimentConfig, args: argparse.Namespace) -> None:
    report = run_experiment(cfg, progress=not args.quiet)
    if args.out is not None:
        write_report_csv(report, args.out)
    else:
        report.to_frame().to_csv(sys.stdout, index=False, float_format=config.REPORT_FLOAT_FORMAT,
                                 lineterminator="\n")


def simulate(args: argparse.Namespace) -> int:
    cfg = replace(_experiment_config(args), sweep_values=())
    if args.dump_mpcs is not None:
        write_mpc_file(sample_trial(cfg, 0, 0), args.dump_mpcs)
        logger.info("wrote the MPCs of trial 0 to %s", args.dump_mpcs)
    _emit_report(cfg, args)
    return 0


def sweep(args: argparse.Namespace) -> int:
    cfg = _experiment_config(args)
    if not cfg.sweep_values:
        raise ValidationError("sweep_values", "a sweep needs at least one grid value")
    _emit_report(cfg, args)
    return 0


def _with_eps(obs, eps_ns: Optional[float]):
    return obs if eps_ns is None else replace(obs, eps_ns=eps_ns)


def _delta_mode(sets: UnpairedObservation) -> DeltaMode:
    return DeltaMode.SYNC if sets.eps_ns is not None else DeltaMode.LSE


def _fit_pairs(sets: UnpairedObservation, params: AssocParams) -> Observation:
    return sets.pair(associate_with_fit(sets, params, _delta_mode(sets)).permutations)


_PAIRED: Dict[str, Callable[[Observation], tuple]] = {
    "MVUE": lambda obs: (estimate_distance_closedform(obs, Variant.MVUE), None),
    "MLE": lambda obs: (estimate_distance_mle(obs), None),
    "DD": lambda obs: (None, estimate_position_by_delta(obs, DeltaMode.SYNC if obs.is_sync else DeltaMode.LSE)),
    "PWA": lambda obs: (None, estimate_position_by_delta(obs, DeltaMode.SYNC if obs.is_sync else DeltaMode.LSE,
                                                         pwa=True)),
    "TAU": lambda obs: (None, estimate_position_by_tau(obs, TauMode.JOINT)),
}

_UNPAIRED: Dict[str, Callable[[UnpairedObservation, AssocParams], tuple]] = {
    "NA": lambda sets, params: (estimate_distance_noassoc(sets), None),
    "SORT": lambda sets, params: (estimate_distance_closedform(
        sets.pair(associate_by_delay_sort(sets.sets_a, sets.sets_b).permutations), Variant.MVUE), None),
    "DDN": lambda sets, params: (None, estimate_position_by_delta(_fit_pairs(sets, params), _delta_mode(sets))),
    "TNA": lambda sets, params: (None, estimate_position_by_tau(_fit_pairs(sets, params), TauMode.JOINT)),
}


def estimate(args: argparse.Namespace) -> int:
    names = _names(args.estimators) or list(_PAIRED) + list(_UNPAIRED)
    unknown = [name for name in names if name not in _PAIRED and name not in _UNPAIRED]
    if unknown:
        raise ValidationError("estimators", f"unknown estimator(s) {unknown}")
    params = AssocParams(lambda_per_ns=args.lambda_per_ns, angle_gate_deg=args.angle_gate_deg)

    paired = unpaired = None
    rows = []
    for name in names:
        if name in _PAIRED:
            if paired is None:
                paired = _with_eps(read_mpc_file(args.input_file, paired=True), args.eps_ns)
            distance, position = _PAIRED[name](paired)
        else:
            if unpaired is None:
                unpaired = _with_eps(read_mpc_file(args.input_file, paired=False), args.eps_ns)
            distance, position = _UNPAIRED[name](unpaired, params)

        if distance is not None:
            rows.append([name, distance.d_hat_m, np.nan, np.nan, np.nan, np.ravel(distance.eps_hat_ns)[0]])
        else:
            eps = position.eps_hat_ns if position.eps_hat_ns is not None else np.nan
            rows.append([name, position.distance_m, *position.d_hat, eps])
        logger.debug("%s: %s", name, rows[-1][1:])

    frame = pd.DataFrame(rows, columns=["estimator", "distance_m", "dx_m", "dy_m", "dz_m", "eps_hat_ns"])
    if args.out is not None:
        write_estimates_csv(frame, args.out)
    else:
        frame.to_csv(sys.stdout, index=False, float_format=config.REPORT_FLOAT_FORMAT, lineterminator="\n")
    return 0


def _rmse_or_nan(d_m: float, k: int, case: RmseCase) -> float:
    try:
        return analytic_rmse(d_m, k, case)
    except InsufficientMpcs:
        return math.nan


def analytic(args: argparse.Namespace) -> int:
    if args.k < 1:
        raise ValidationError("k", "must be >= 1")
    rows = [
        ("mvue_distance_rmse_m", _rmse_or_nan(args.d_m, args.k, RmseCase.ASYNC_DIST)),
        ("mvue_offset_rmse_ns", analytic_rmse(args.d_m, args.k, RmseCase.EPS_OFFSET)),
        ("mvue_sync_distance_rmse_m", analytic_rmse(args.d_m, args.k, RmseCase.SYNC_DIST)),
        ("mle_mean_factor", mean_mle_bias_factor(args.k)),
        ("beats_toa", toa_beat_criterion(args.k)),
    ]
    if args.sigma_ns is not None:
        rows.append(("position_rmse_approx_m", approx_position_rmse(args.sigma_ns, args.k)))
    if args.alpha is not None and args.sigma_sh_db is not None:
        rows.append(("rss_beat_k_min", rss_beat_threshold(args.alpha, args.sigma_sh_db)))

    frame = pd.DataFrame(rows, columns=["quantity", "value"])
    frame.to_csv(sys.stdout, index=False, float_format=config.REPORT_FLOAT_FORMAT, lineterminator="\n")
    return 0


_COMMANDS = {"simulate": simulate, "sweep": sweep, "estimate": estimate, "analytic": analytic}


def main(argv: Optional[List[str]] = None) -> int:
    """
    Runs one subcommand.

    Returns:
        int: 0 on success, 1 on configuration, data or output errors, 2 when an estimator fails in estimate mode.
    """
    args = parse_args(argv)
    _setup_logging(args)

    try:
        return _COMMANDS[args.command](args)
    except (ConfigInvalid, DataError, ReportWriteError) as err:
        logger.error("%s", err)
        return 1
    except (EstimatorError, GeometryError) as err:
        if args.command != "estimate":
            raise
        logger.error("estimator failed: %s", err)
        return 2
    except ValueError as err:
        # invalid analytic inputs and direction-less files for position estimators
        logger.error("%s", err)
        return 1
