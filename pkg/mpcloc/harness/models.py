########################################################################################################################
# imports

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from functools import cached_property
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from tqdm import tqdm

from mpcloc import config
from mpcloc.core.association import AssocParams, associate_by_delay_sort, associate_with_fit
from mpcloc.core.channel import ChannelConfig, Scenario, corrupt_directions, inject_aliens, pdp_moments, \
    sample_scenario
from mpcloc.core.distance import Variant, estimate_distance_closedform, estimate_distance_fullyasync, \
    estimate_distance_mle, estimate_distance_noassoc
from mpcloc.core.observation import Observation, UnpairedObservation
from mpcloc.core.position import DeltaMode, TauMode, estimate_position_by_delta, estimate_position_by_tau
from mpcloc.errors import EstimatorError, GeometryError, ValidationError
from mpcloc.utils import substream


logger = logging.getLogger(__name__)

########################################################################################################################

SWEEP_VARS = {
    "d": "d_m",
    "k": "k_per_observer",
    "n_observers": "n_observers",
    "sigma_dir": "sigma_dir_deg",
    "n_alien": "n_alien",
    "snr_scale": "snr_scale",
    "p_los": "p_los",
}

_INTEGER_SWEEPS = {"k", "n_observers", "n_alien"}


def load_defaults() -> dict:
    """Loads the frozen default table."""

    with open(config.DEFAULTS_FILE, "r") as defaults_file:
        return json.load(defaults_file)


@dataclass(frozen=True)
class ExperimentConfig:
    """
    A Monte Carlo experiment: channel statistics, corruptions, a one-dimensional sweep and the estimators to run.

    Attributes:
        channel (ChannelConfig): Channel statistics at the base point.
        d_m (float): Node distance at the base point (m).
        sigma_dir_deg (float): Direction-error cone standard deviation (deg).
        n_alien (int): Number of alien MPC pairs per trial.
        sweep_var (str): One of SWEEP_VARS.
        sweep_values (tuple): Grid; empty means the single base value.
        estimators (tuple): Names from ESTIMATORS.
        trials (int): Trials per grid point.
        seed (int): Base seed.
        workers (int): Worker processes.
        angle_gate_deg (float): Association angle gate.
        lambda_per_ns (float): Association delay weight; None uses 1 / tau_rms_ns.
        tau_rms_ns (float): RMS delay spread for the default weight; None uses the channel PDP.
    """

    channel: ChannelConfig = field(default_factory=ChannelConfig)
    d_m: float = 2.5
    sigma_dir_deg: float = 0.0
    n_alien: int = 0
    sweep_var: str = "d"
    sweep_values: tuple = ()
    estimators: tuple = ("MVUE", "MLE", "NA", "SORT", "DD", "PWA", "DDN", "TAU", "TNA")
    trials: int = 1000
    seed: int = 0
    workers: int = 1
    angle_gate_deg: float = config.DEFAULT_ANGLE_GATE_DEG
    lambda_per_ns: Optional[float] = None
    tau_rms_ns: Optional[float] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "sweep_values", tuple(self.sweep_values))
        object.__setattr__(self, "estimators", tuple(str(e).upper() for e in self.estimators))
        self.validate()

    def validate(self) -> None:
        """
        Raises:
            ValidationError: Naming the first offending field.
        """
        _integer(self.trials, "trials", 1)
        _integer(self.workers, "workers", 1)
        _integer(self.n_alien, "n_alien", 0)
        _integer(self.seed, "seed", 0)
        if not self.d_m >= 0:
            raise ValidationError("d_m", "must be >= 0")
        if self.n_alien > self.channel.n_observers * self.channel.k_per_observer:
            raise ValidationError("n_alien", "must not exceed the MPC count N * K_o")
        if not self.sigma_dir_deg >= 0:
            raise ValidationError("sigma_dir_deg", "must be >= 0")
        if not 0 < self.angle_gate_deg <= 180:
            raise ValidationError("angle_gate_deg", "must lie in (0, 180]")
        if self.lambda_per_ns is not None and self.lambda_per_ns < 0:
            raise ValidationError("lambda_per_ns", "must be >= 0")
        if self.tau_rms_ns is not None and not self.tau_rms_ns > 0:
            raise ValidationError("tau_rms_ns", "must be > 0")
        if self.sweep_var not in SWEEP_VARS:
            raise ValidationError("sweep_var", f"must be one of {sorted(SWEEP_VARS)}")
        if not self.estimators:
            raise ValidationError("estimators", "must not be empty")
        unknown = [e for e in self.estimators if e not in ESTIMATORS]
        if unknown:
            raise ValidationError("estimators", f"unknown estimator(s) {unknown}")
        for value in self.sweep_values:
            self.at(value)

    @classmethod
    def from_dict(cls, values: dict) -> "ExperimentConfig":
        """
        Builds a config from a flat mapping of channel and experiment keys.

        Raises:
            ValidationError: On unknown keys or invalid values.
        """
        channel_keys = set(ChannelConfig.field_names())
        own_keys = {f for f in cls.__dataclass_fields__ if f != "channel"}
        unknown = sorted(set(values) - channel_keys - own_keys)
        if unknown:
            raise ValidationError(unknown[0], "unknown key")

        channel = ChannelConfig(**{k: v for k, v in values.items() if k in channel_keys})
        return cls(channel=channel, **{k: v for k, v in values.items() if k in own_keys})

    def to_dict(self) -> dict:
        flat = asdict(self.channel)
        flat.update({k: v for k, v in asdict(self).items() if k != "channel"})
        flat["sweep_values"] = list(self.sweep_values)
        flat["estimators"] = list(self.estimators)
        return flat

    @property
    def grid(self) -> List[float]:
        if self.sweep_values:
            return list(self.sweep_values)
        attr = SWEEP_VARS[self.sweep_var]
        return [getattr(self.channel, attr) if hasattr(self.channel, attr) else getattr(self, attr)]

    def at(self, value: float) -> "ExperimentConfig":
        """
        The configuration at one grid value of the sweep variable.

        Raises:
            ValidationError: If the value is invalid for the swept field.
        """
        attr = SWEEP_VARS[self.sweep_var]
        if self.sweep_var in _INTEGER_SWEEPS:
            if float(value) != int(value):
                raise ValidationError("sweep_values", f"{self.sweep_var} needs integer values")
            value = int(value)
        if hasattr(self.channel, attr):
            return replace(self, channel=replace(self.channel, **{attr: value}), sweep_values=())
        return replace(self, **{attr: value}, sweep_values=())

    def assoc_params(self) -> AssocParams:
        if self.lambda_per_ns is not None:
            return AssocParams(lambda_per_ns=self.lambda_per_ns, angle_gate_deg=self.angle_gate_deg)
        tau_rms = self.tau_rms_ns if self.tau_rms_ns is not None else pdp_moments(self.channel)[1]
        return AssocParams.from_tau_rms(tau_rms, angle_gate_deg=self.angle_gate_deg)


def _integer(value, name: str, minimum: int) -> None:
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < minimum:
        raise ValidationError(name, f"must be an integer >= {minimum}")


########################################################################################################################
# estimators


class TrialContext:
    """
    Lazily derived views of one trial's scenario, shared by all estimators of the trial.

    Attributes:
        scenario (Scenario): The corrupted scenario.
        params (AssocParams): Association parameters.
        _rng (np.random.Generator): Source for the B-side shuffle of the unpaired views.
    """

    def __init__(self, scenario: Scenario, params: AssocParams, rng: np.random.Generator) -> None:
        self.scenario = scenario
        self.params = params
        self._rng = rng

    @cached_property
    def obs(self) -> Observation:
        return self.scenario.observation()

    @cached_property
    def obs_sync(self) -> Observation:
        obs = self.scenario.observation(sync=True)
        if not obs.per_observer_offsets:
            return obs
        # per-observer offsets are known, so they are compensated into the delay differences
        return replace(obs, delta_ns=obs.delta_ns - self.scenario.eps_per_obs[obs.observer], eps_ns=0.0,
                       per_observer_offsets=False)

    @cached_property
    def unpaired(self) -> UnpairedObservation:
        return self.scenario.unpaired(rng=self._rng)

    @cached_property
    def unpaired_sync(self) -> UnpairedObservation:
        unpaired = self.unpaired
        if not self.fully_async:
            return replace(unpaired, eps_ns=self.scenario.eps_ns)
        eps = self.scenario.eps_per_obs
        sets_b = [replace(s, tau_ns=s.tau_ns - eps[o]) for o, s in enumerate(unpaired.sets_b)]
        return replace(unpaired, sets_b=sets_b, eps_ns=0.0)

    @cached_property
    def sorted_pairs(self) -> Observation:
        assoc = associate_by_delay_sort(self.unpaired.sets_a, self.unpaired.sets_b)
        paired = self.unpaired.pair(assoc.permutations)
        return replace(paired, per_observer_offsets=self.fully_async)

    @cached_property
    def hungarian_pairs(self) -> Observation:
        assoc = associate_with_fit(self.unpaired, self.params, _delta_mode(self))
        paired = self.unpaired.pair(assoc.permutations)
        return replace(paired, per_observer_offsets=self.fully_async)

    @property
    def fully_async(self) -> bool:
        return self.scenario.cfg.per_observer_offsets


def _distance(obs: Observation, variant: Variant) -> float:
    """
    MVUE or MLE distance. Under per-observer offsets MVUE has no closed form and runs the fully asynchronous MLE.
    """
    if variant is Variant.MLE:
        return estimate_distance_mle(obs).d_hat_m
    if obs.per_observer_offsets and not obs.is_sync:
        return estimate_distance_fullyasync(replace(obs, sigma_ns=None)).d_hat_m
    return estimate_distance_closedform(obs, Variant.MVUE).d_hat_m


def _delta_mode(ctx: TrialContext) -> DeltaMode:
    return DeltaMode.FULLY_ASYNC if ctx.fully_async else DeltaMode.LSE


def _tau_mode(ctx: TrialContext) -> TauMode:
    return TauMode.FULLY_ASYNC if ctx.fully_async else TauMode.JOINT


@dataclass(frozen=True)
class EstimatorSpec:
    name: str
    kind: str
    run: Callable[[TrialContext], object]
    description: str = ""


ESTIMATORS: Dict[str, EstimatorSpec] = {spec.name: spec for spec in [
    EstimatorSpec("MVUE", "distance", lambda ctx: _distance(ctx.obs, Variant.MVUE),
                  "error-free MVUE, true association; with per-observer offsets the fully asynchronous MLE "
                  "(no closed form exists there)"),
    EstimatorSpec("MVUE_SYNC", "distance", lambda ctx: _distance(ctx.obs_sync, Variant.MVUE),
                  "synchronous MVUE, true association"),
    EstimatorSpec("MLE", "distance", lambda ctx: _distance(ctx.obs, Variant.MLE),
                  "Gaussian MLE, true association"),
    EstimatorSpec("MLE_SYNC", "distance", lambda ctx: _distance(ctx.obs_sync, Variant.MLE),
                  "synchronous Gaussian MLE, true association"),
    EstimatorSpec("NA", "distance", lambda ctx: estimate_distance_noassoc(ctx.unpaired).d_hat_m,
                  "MLE with unknown association"),
    EstimatorSpec("NA_SYNC", "distance", lambda ctx: estimate_distance_noassoc(ctx.unpaired_sync).d_hat_m,
                  "synchronous MLE with unknown association"),
    EstimatorSpec("SORT", "distance", lambda ctx: _distance(ctx.sorted_pairs, Variant.MVUE),
                  "MVUE after association by ascending delay"),
    EstimatorSpec("DD", "position", lambda ctx: estimate_position_by_delta(ctx.obs, _delta_mode(ctx)).d_hat,
                  "delay-difference LSE, true association"),
    EstimatorSpec("DD_SYNC", "position", lambda ctx: estimate_position_by_delta(ctx.obs_sync, DeltaMode.SYNC).d_hat,
                  "synchronous delay-difference LSE"),
    EstimatorSpec("PWA", "position",
                  lambda ctx: estimate_position_by_delta(ctx.obs, _delta_mode(ctx), pwa=True).d_hat,
                  "delay-difference LSE under the plane-wave assumption"),
    EstimatorSpec("DDN", "position",
                  lambda ctx: estimate_position_by_delta(ctx.hungarian_pairs, _delta_mode(ctx)).d_hat,
                  "delay-difference LSE after fit-verified cost-based association"),
    EstimatorSpec("TAU", "position", lambda ctx: estimate_position_by_tau(ctx.obs, _tau_mode(ctx)).d_hat,
                  "raw-delay LSE, true association"),
    EstimatorSpec("TAU_SYNC", "position", lambda ctx: estimate_position_by_tau(ctx.obs_sync, TauMode.SYNC).d_hat,
                  "raw-delay estimate with all offsets known"),
    EstimatorSpec("TNA", "position",
                  lambda ctx: estimate_position_by_tau(ctx.hungarian_pairs, _tau_mode(ctx)).d_hat,
                  "raw-delay LSE after fit-verified cost-based association"),
]}


########################################################################################################################
# trial loop


def sample_trial(cfg: ExperimentConfig, point: int, trial: int) -> Scenario:
    """The corrupted scenario of one trial, drawn from its own substreams."""
    scenario = sample_scenario(cfg.channel, cfg.d_m, substream(cfg.seed, point, trial, "scenario"))
    scenario = inject_aliens(scenario, cfg.n_alien, substream(cfg.seed, point, trial, "aliens"))
    return corrupt_directions(scenario, cfg.sigma_dir_deg, substream(cfg.seed, point, trial, "directions"))


def _run_chunk(cfg: ExperimentConfig, point: int, trials: Sequence[int]) -> Dict[str, np.ndarray]:
    """
    Runs a block of trials of one grid point.

    Returns:
        dict: Per estimator an array of shape (len(trials), 3) of signed errors; distance errors use column 0.
            Failed trials are NaN.
    """
    params = cfg.assoc_params()
    errors = {name: np.full((len(trials), 3), np.nan) for name in cfg.estimators}

    for row, trial in enumerate(trials):
        scenario = sample_trial(cfg, point, trial)
        ctx = TrialContext(scenario, params, substream(cfg.seed, point, trial, "shuffle"))
        for name in cfg.estimators:
            spec = ESTIMATORS[name]
            try:
                value = spec.run(ctx)
            except (EstimatorError, GeometryError) as err:
                logger.debug("point %d trial %d: %s failed (%s)", point, trial, name, err)
                continue
            if spec.kind == "distance":
                errors[name][row, 0] = value - scenario.distance_m
                errors[name][row, 1:] = 0.0
            else:
                errors[name][row] = np.asarray(value) - scenario.d_vec
    return errors


def _chunks(trials: int, size: int) -> List[range]:
    return [range(start, min(start + size, trials)) for start in range(0, trials, size)]


@dataclass(frozen=True)
class RmseRow:
    sweep_var: str
    sweep_value: float
    estimator: str
    rmse_m: float
    bias_m: float
    median_abs_err_m: float
    trials: int
    failures: int
    stderr_m: float

    @classmethod
    def from_errors(cls, sweep_var: str, sweep_value: float, estimator: str, errors: np.ndarray) -> "RmseRow":
        """
        Aggregates per-trial errors.

        Args:
            errors (np.ndarray): Shape (trials, 3); NaN rows are failures. Distance estimators carry the signed error
                in column 0 and zeros elsewhere, so norms and means work for both kinds.
        """
        trials = int(errors.shape[0])
        valid = errors[~np.isnan(errors).any(axis=1)]
        n = int(valid.shape[0])
        if n == 0:
            return cls(sweep_var, float(sweep_value), estimator, math.nan, math.nan, math.nan, trials, trials,
                       math.nan)

        squared = np.sum(valid ** 2, axis=1)
        rmse = float(np.sqrt(squared.mean()))
        if ESTIMATORS[estimator].kind == "distance":
            bias = float(valid[:, 0].mean())
        else:
            bias = float(np.linalg.norm(valid.mean(axis=0)))
        stderr = float(np.std(squared, ddof=1) / math.sqrt(n) / (2.0 * rmse)) if n > 1 and rmse > 0 else 0.0
        return cls(
            sweep_var=sweep_var, sweep_value=float(sweep_value), estimator=estimator, rmse_m=rmse, bias_m=bias,
            median_abs_err_m=float(np.median(np.sqrt(squared))), trials=trials, failures=trials - n,
            stderr_m=stderr,
        )


@dataclass
class RmseReport:
    """
    Monte Carlo aggregates, one row per (grid point, estimator).

    Attributes:
        rows (list): RmseRow entries.
        errors (dict): Raw per-trial errors keyed by (sweep value, estimator), kept for further analysis.
    """

    rows: List[RmseRow] = field(default_factory=list)
    errors: Dict[tuple, np.ndarray] = field(default_factory=dict)

    def __repr__(self) -> str:
        return f"RmseReport(rows={len(self.rows)})"

    def to_frame(self) -> pd.DataFrame:
        """Rows as a DataFrame sorted by (sweep_value, estimator)."""
        frame = pd.DataFrame([asdict(row) for row in self.rows], columns=config.REPORT_COLUMNS)
        return frame.sort_values(["sweep_value", "estimator"], kind="stable").reset_index(drop=True)

    def row(self, estimator: str, sweep_value: Optional[float] = None) -> RmseRow:
        for r in self.rows:
            if r.estimator == estimator and (sweep_value is None or r.sweep_value == sweep_value):
                return r
        raise KeyError((estimator, sweep_value))


def run_experiment(cfg: ExperimentConfig, progress: bool = True, chunk_size: int = 64) -> RmseReport:
    """
    Runs every estimator over every grid point and aggregates the errors.

    Trials draw from substreams keyed by (seed, point, trial), so the report does not depend on the worker count
    or on the chunk size.

    Args:
        cfg (ExperimentConfig): The experiment.
        progress (bool): Show a tqdm progress bar on stderr.
        chunk_size (int): Trials per work unit.

    Returns:
        RmseReport: The aggregated report.

    Raises:
        ConfigInvalid: If the configuration is invalid.
    """
    cfg.validate()
    grid = cfg.grid
    points = [cfg.at(value) for value in grid]
    jobs = [(p, chunk) for p in range(len(points)) for chunk in _chunks(cfg.trials, chunk_size)]
    logger.info("running %d trial(s) at %d grid point(s) of %s with %s",
                cfg.trials, len(grid), cfg.sweep_var, ", ".join(cfg.estimators))

    results: Dict[tuple, Dict[str, np.ndarray]] = {}
    with tqdm(total=cfg.trials * len(points), disable=not progress, desc="trials") as bar:
        if cfg.workers == 1:
            for p, chunk in jobs:
                results[(p, chunk.start)] = _run_chunk(points[p], p, chunk)
                bar.update(len(chunk))
        else:
            with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
                futures = {(p, chunk.start): pool.submit(_run_chunk, points[p], p, chunk) for p, chunk in jobs}
                for (p, start), future in futures.items():
                    results[(p, start)] = future.result()
                    bar.update(len(range(start, min(start + chunk_size, cfg.trials))))

    report = RmseReport()
    for p, value in enumerate(grid):
        starts = sorted(start for q, start in results if q == p)
        for name in cfg.estimators:
            errors = np.concatenate([results[(p, start)][name] for start in starts])
            report.errors[(value, name)] = errors
            row = RmseRow.from_errors(cfg.sweep_var, value, name, errors)
            report.rows.append(row)
            if row.failures:
                logger.info("%s=%s %s: %d of %d trial(s) failed", cfg.sweep_var, value, name, row.failures,
                            row.trials)
    return report
