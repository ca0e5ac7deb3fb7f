########################################################################################################################
# imports

import json
import logging
from dataclasses import replace
from typing import Union

import numpy as np
import pandas as pd
import yaml

from mpcloc import config
from mpcloc.core.channel import Scenario
from mpcloc.core.observation import Observation, SideSet, UnpairedObservation
from mpcloc.errors import CountMismatch, ParseError, ReportWriteError, SchemaError, ValidationError
from mpcloc.harness import ExperimentConfig, RmseReport, load_defaults
from mpcloc.utils import ensure_parent_dir, is_yaml_path


logger = logging.getLogger(__name__)

_DIR_COLUMNS = ["dir_x", "dir_y", "dir_z"]

########################################################################################################################
# configuration


def _load_mapping(path: str) -> dict:
    try:
        with open(path, "r") as config_file:
            text = config_file.read()
    except OSError as err:
        raise ParseError(path, f"cannot read file ({err.strerror})") from err

    if is_yaml_path(path):
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as err:
            mark = getattr(err, "problem_mark", None)
            problem = getattr(err, "problem", None) or str(err)
            if mark is not None:
                raise ParseError(path, problem, mark.line + 1, mark.column + 1) from err
            raise ParseError(path, problem) from err
        data = {} if data is None else data
    else:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as err:
            raise ParseError(path, err.msg, err.lineno, err.colno) from err

    if not isinstance(data, dict):
        raise ParseError(path, "top level must be an object of configuration keys")
    return data


def parse_config(path: str) -> ExperimentConfig:
    """
    Reads a flat JSON or YAML experiment configuration and fills missing keys from the default table.

    Args:
        path (str): Config path; .yml and .yaml are parsed as YAML, anything else as JSON.

    Returns:
        ExperimentConfig: The validated configuration.

    Raises:
        ParseError: On unreadable or malformed files, with the line and column when known.
        ValidationError: On unknown keys or invalid values.
    """
    overrides = _load_mapping(path)
    defaults = load_defaults()

    unknown = sorted(set(overrides) - set(defaults))
    if unknown:
        raise ValidationError(unknown[0], "unknown key")

    values = {key: overrides.get(key, value) for key, value in defaults.items()}
    try:
        cfg = ExperimentConfig.from_dict(values)
    except TypeError as err:
        raise ValidationError("config", str(err)) from err

    logger.debug("loaded %s with %d override(s)", path, len(overrides))
    return cfg


########################################################################################################################
# MPC files


def _read_frame(path: str) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError as err:
        raise SchemaError(f"{path}: empty file") from err
    except pd.errors.ParserError as err:
        raise SchemaError(f"{path}: {err}") from err
    except OSError as err:
        raise SchemaError(f"{path}: cannot read ({err.strerror or err})") from err

    if list(frame.columns) != config.MPC_COLUMNS:
        raise SchemaError(f"{path}: header must be {','.join(config.MPC_COLUMNS)}")
    if frame.empty:
        return frame
    return frame.apply(lambda column: column.str.strip())


def _numeric(frame: pd.DataFrame, column: str, path: str) -> pd.Series:
    values = pd.to_numeric(frame[column].replace("", np.nan), errors="coerce")
    bad = values.isna() & (frame[column] != "")
    if bad.any():
        row = int(np.flatnonzero(bad.to_numpy())[0]) + 2
        raise SchemaError(f"{path}:{row}: {column} is not a number")
    return values


def _integer_column(frame: pd.DataFrame, column: str, path: str) -> np.ndarray:
    values = _numeric(frame, column, path)
    if values.isna().any() or (values < 0).any() or (values != values.round()).any():
        raise SchemaError(f"{path}: {column} must hold non-negative integers")
    return values.to_numpy(dtype=int)


def read_mpc_file(path: str, paired: bool = True) -> Union[Observation, UnpairedObservation]:
    """
    Reads measured MPCs of both nodes.

    Rows are grouped per node and observer and ordered by their mpc index. Paired reading associates the k-th A row
    of an observer with its k-th B row.

    Args:
        path (str): CSV path with header node,observer,mpc,delay_ns,dir_x,dir_y,dir_z,sigma_ns.
        paired (bool): Return an associated Observation instead of per-side sets.

    Returns:
        Union[Observation, UnpairedObservation]: The measurements; directions unit-normalized.

    Raises:
        SchemaError: On a bad header, malformed cells, partial direction triples or duplicate indices.
        CountMismatch: If pairing is requested and an observer's A and B counts differ.
    """
    frame = _read_frame(path)

    node = frame["node"].str.upper()
    if not node.isin(["A", "B"]).all():
        raise SchemaError(f"{path}: node must be A or B")
    observer = _integer_column(frame, "observer", path)
    mpc = _integer_column(frame, "mpc", path)

    delay = _numeric(frame, "delay_ns", path)
    if delay.isna().any() or (delay < 0).any() or not np.all(np.isfinite(delay)):
        raise SchemaError(f"{path}: delay_ns must be a finite non-negative number")

    dirs = pd.concat([_numeric(frame, c, path) for c in _DIR_COLUMNS], axis=1).to_numpy()
    present = (~np.isnan(dirs)).sum(axis=1)
    if np.any((present != 0) & (present != 3)):
        raise SchemaError(f"{path}: direction triples must be complete or empty")
    if np.any(present == 3) and np.any(present == 0):
        raise SchemaError(f"{path}: directions must be given for every row or for none")
    with_dirs = frame.shape[0] > 0 and bool(np.all(present == 3))
    if with_dirs:
        norms = np.linalg.norm(dirs, axis=1)
        if np.any(norms <= 0):
            raise SchemaError(f"{path}: zero direction vector")
        dirs = dirs / norms[:, None]

    sigma = _numeric(frame, "sigma_ns", path).to_numpy()
    with_sigma = frame.shape[0] > 0 and not np.any(np.isnan(sigma))
    if np.any(np.isnan(sigma)) and not np.all(np.isnan(sigma)):
        raise SchemaError(f"{path}: sigma_ns must be given for every row or for none")
    if with_sigma and np.any(sigma < 0):
        raise SchemaError(f"{path}: sigma_ns must be >= 0")

    n_observers = int(observer.max()) + 1 if observer.size else 0
    sets = {"A": [], "B": []}
    for side in ("A", "B"):
        for o in range(n_observers):
            rows = np.flatnonzero((node == side).to_numpy() & (observer == o))
            rows = rows[np.argsort(mpc[rows], kind="stable")]
            if np.unique(mpc[rows]).size != rows.size:
                raise SchemaError(f"{path}: duplicate mpc index for node {side}, observer {o}")
            sets[side].append(SideSet(
                tau_ns=delay.to_numpy()[rows],
                dirs=dirs[rows] if with_dirs else None,
                sigma_ns=sigma[rows] if with_sigma else None,
            ))

    unpaired = UnpairedObservation(sets_a=sets["A"], sets_b=sets["B"])
    logger.debug("read %d row(s) for %d observer(s) from %s", frame.shape[0], n_observers, path)
    if not paired:
        return unpaired

    try:
        unpaired.check_equal_sizes()
    except CountMismatch as err:
        raise CountMismatch(f"{path}: {err}") from err
    return unpaired.pair([np.arange(len(s)) for s in unpaired.sets_a])


def _side_rows(side: str, sets) -> list:
    rows = []
    for o, side_set in enumerate(sets):
        for k in range(len(side_set)):
            direction = side_set.dirs[k] if side_set.dirs is not None else (None, None, None)
            rows.append([
                side, o, k, side_set.tau_ns[k], *direction,
                side_set.sigma_ns[k] if side_set.sigma_ns is not None else None,
            ])
    return rows


def _as_unpaired(obj: Union[Observation, UnpairedObservation, Scenario]) -> UnpairedObservation:
    if isinstance(obj, UnpairedObservation):
        return obj
    if isinstance(obj, Scenario):
        return obj.unpaired()
    if not obj.has_delays:
        raise SchemaError("an MPC file needs the delays of both nodes, not only their differences")

    # each side carries sigma / sqrt(2) so that pairing restores the delay-difference sigma
    side_sigma = None if obj.sigma_ns is None else obj.sigma_ns / np.sqrt(2.0)
    sets_a, sets_b = [], []
    for g in obj.groups():
        for sets, tau, dirs in ((sets_a, obj.tau_a_ns, obj.dir_a), (sets_b, obj.tau_b_ns, obj.dir_b)):
            sets.append(SideSet(
                tau_ns=tau[g],
                dirs=None if dirs is None else dirs[g],
                sigma_ns=None if side_sigma is None else side_sigma[g],
            ))
    return UnpairedObservation(sets_a=sets_a, sets_b=sets_b)


def write_mpc_file(obj: Union[Observation, UnpairedObservation, Scenario], path: str) -> None:
    """
    Writes MPCs in the format read_mpc_file accepts, floats in full precision.

    Args:
        obj: An associated observation (k-th A row pairs with k-th B row), per-side sets, or a simulated scenario.
            Negative delays are removed by one common shift of all delays.
        path (str): Output CSV path.

    Raises:
        SchemaError: If an observation carries only delay differences.
        ReportWriteError: If the file cannot be written.
    """
    unpaired = _as_unpaired(obj)
    sides = unpaired.sets_a + unpaired.sets_b
    lowest = min((float(s.tau_ns.min()) for s in sides if len(s)), default=0.0)
    if lowest < 0:
        # a common shift of both clocks keeps every delay difference
        sides = [replace(s, tau_ns=s.tau_ns - lowest) for s in sides]
        unpaired = UnpairedObservation(sets_a=sides[:unpaired.n_observers], sets_b=sides[unpaired.n_observers:])
        logger.info("shifted all delays by %.3f ns to keep them non-negative", -lowest)
    rows = _side_rows("A", unpaired.sets_a) + _side_rows("B", unpaired.sets_b)
    frame = pd.DataFrame(rows, columns=config.MPC_COLUMNS)
    _to_csv(frame, path, config.MPC_FLOAT_FORMAT)


########################################################################################################################
# reports


def _to_csv(frame: pd.DataFrame, path: str, float_format: str) -> None:
    try:
        frame.to_csv(ensure_parent_dir(path), index=False, float_format=float_format, lineterminator="\n")
    except OSError as err:
        raise ReportWriteError(f"cannot write {path}: {err}") from err


def write_report_csv(report: RmseReport, path: str) -> None:
    """
    Writes one row per (grid point, estimator), sorted by sweep value then estimator, floats at 9 significant digits.

    Raises:
        ReportWriteError: If the file cannot be written.
    """
    frame = report.to_frame()
    _to_csv(frame, path, config.REPORT_FLOAT_FORMAT)
    logger.info("wrote %d report row(s) to %s", frame.shape[0], path)


def write_estimates_csv(frame: pd.DataFrame, path: str) -> None:
    """
    Writes the per-estimator results of `mpcloc estimate`, floats at 9 significant digits.

    Raises:
        ReportWriteError: If the file cannot be written.
    """
    _to_csv(frame, path, config.REPORT_FLOAT_FORMAT)
    logger.info("wrote %d estimate(s) to %s", frame.shape[0], path)
