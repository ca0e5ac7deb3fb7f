########################################################################################################################
# imports

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Sequence, Union

import numpy as np
from numpy.typing import ArrayLike

from mpcloc import config
from mpcloc.core.geometry import as_vec3, s_vectors
from mpcloc.core.observation import Observation
from mpcloc.errors import InsufficientMpcs, RankDeficient
from mpcloc.utils import multistart_simplex


logger = logging.getLogger(__name__)

C = config.C_M_PER_NS

########################################################################################################################


class DeltaMode(str, Enum):
    LSE = "lse"
    WEIGHTED = "weighted"
    SYNC = "sync"
    FULLY_ASYNC = "fully_async"


class TauMode(str, Enum):
    JOINT = "joint"
    SYNC = "sync"
    FULLY_ASYNC = "fully_async"


@dataclass(eq=False)
class ProjectionSystem:
    """
    Stacked projection vectors of the delay-difference estimators.

    Attributes:
        E (np.ndarray): Columns [s_ko; 1], shape (4, K); with per-observer offsets the ones row becomes one
            indicator row per observer, shape (3 + N, K).
        s (np.ndarray): Projection vectors, shape (K, 3).
        observer (np.ndarray): Observer index per column.
        pwa (bool): Whether s_ko = e^A_ko was used.
    """

    E: np.ndarray
    s: np.ndarray
    observer: np.ndarray
    pwa: bool = False

    @property
    def n_mpcs(self) -> int:
        return int(self.s.shape[0])


@dataclass(eq=False)
class TauSystem:
    """
    Stacked raw-delay system G x = t, three rows per MPC.

    Attributes:
        G (np.ndarray): Shape (3K, 4 + N), or (3K, 3 + 2N) with per-observer offsets.
        t (np.ndarray): c*tau_b*e_b - c*tau_a*e_a per MPC, stacked, shape (3K,).
    """

    G: np.ndarray
    t: np.ndarray
    n_observers: int


@dataclass(eq=False)
class PositionEstimate:
    """
    Result of a relative-position estimator.

    Attributes:
        d_hat (np.ndarray): Relative position estimate p_B - p_A (m).
        eps_hat_ns (float): Inter-node clock offset estimate, None when known or per observer.
        eps_obs_ns (np.ndarray): Per-observer inter-node offsets (fully asynchronous modes), or None.
        eps_a_obs_ns (np.ndarray): Offsets between A and each observer (raw-delay modes), or None.
        residual_norm (float): Norm of the least-squares residual.
        condition (float): Condition number of the normal matrix.
        method (str): Estimator tag.
    """

    d_hat: np.ndarray
    eps_hat_ns: Optional[float] = None
    eps_obs_ns: Optional[np.ndarray] = None
    eps_a_obs_ns: Optional[np.ndarray] = None
    residual_norm: float = 0.0
    condition: float = 1.0
    method: str = ""
    diagnostics: dict = field(default_factory=dict)

    def __repr__(self) -> str:
        return f"PositionEstimate({self.method}: d={np.array2string(self.d_hat, precision=4)} m)"

    @property
    def distance_m(self) -> float:
        return float(np.linalg.norm(self.d_hat))


def _require_directions(obs: Observation) -> None:
    if not obs.has_directions:
        raise ValueError("position estimators need measured directions at both nodes")


def _lstsq(A: np.ndarray, y: np.ndarray) -> tuple:
    """
    Rank-revealing least squares.

    Returns:
        tuple: (solution, residual norm, condition number of A^T A).

    Raises:
        RankDeficient: Fewer equations than unknowns, rank loss, or a normal-matrix condition number above the
            configured threshold.
    """
    rows, cols = A.shape
    if rows < cols:
        raise RankDeficient(f"{rows} equations for {cols} unknowns")
    theta, _, rank, sv = np.linalg.lstsq(A, y, rcond=None)
    with np.errstate(divide="ignore"):
        condition = float((sv[0] / sv[-1]) ** 2) if sv.size else math.inf
    if rank < cols or not condition <= config.MAX_CONDITION_NUMBER:
        raise RankDeficient(f"rank {rank} of {cols}, normal-matrix condition {condition:.3g}")
    return theta, float(np.linalg.norm(y - A @ theta)), condition


########################################################################################################################
# delay differences


def build_projection_system(obs: Observation, pwa: bool = False, fully_async: bool = False) -> ProjectionSystem:
    """
    Stacks the projection vectors s_ko = (e_a + e_b) / (1 + e_a^T e_b), or e_a under the plane-wave assumption.

    Args:
        obs (Observation): Measured directions at both nodes.
        pwa (bool): Use s_ko = e^A_ko and ignore dir_b.
        fully_async (bool): One offset row per observer instead of a single ones row.

    Returns:
        ProjectionSystem: The stacked system.
    """
    if obs.dir_a is None or (not pwa and obs.dir_b is None):
        raise ValueError("projection system needs measured directions")
    s = obs.dir_a.copy() if pwa else s_vectors(obs.dir_a, obs.dir_b)
    if fully_async:
        offsets = (obs.observer[None, :] == np.arange(obs.n_observers)[:, None]).astype(float)
    else:
        offsets = np.ones((1, obs.n_mpcs))
    return ProjectionSystem(E=np.vstack([s.T, offsets]), s=s, observer=obs.observer.copy(), pwa=pwa)


def estimate_position_by_delta(
    obs: Observation,
    mode: Union[DeltaMode, str] = DeltaMode.LSE,
    pwa: bool = False,
    mu_ns: Optional[ArrayLike] = None,
    cov_ns2: Optional[ArrayLike] = None,
) -> PositionEstimate:
    """
    Relative position from delay differences and MPC directions.

    LSE solves [d; c*eps] = (E E^T)^-1 E (c delta). WEIGHTED applies the Gaussian MLE
    (E Sigma^-1 E^T)^-1 E Sigma^-1 (c delta - c mu). SYNC drops the offset row and uses the known eps.
    FULLY_ASYNC solves one offset per observer.

    Args:
        obs (Observation): Delay differences with directions.
        mode (DeltaMode): Solver variant.
        pwa (bool): Plane-wave assumption.
        mu_ns (ArrayLike): Error means for WEIGHTED (default zero).
        cov_ns2 (ArrayLike): Error covariance for WEIGHTED; a vector is read as its diagonal. Defaults to
            diag(obs.sigma_ns^2).

    Returns:
        PositionEstimate: The estimate.

    Raises:
        InsufficientMpcs: Without MPCs, or an observer without MPCs in FULLY_ASYNC.
        RankDeficient: If the system is not solvable.
    """
    mode = DeltaMode(mode)
    obs.require(1)
    tag = f"delta_{mode.value}{'_pwa' if pwa else ''}"

    if mode is DeltaMode.FULLY_ASYNC and np.any(obs.counts == 0):
        raise InsufficientMpcs("every observer needs at least one MPC")

    system = build_projection_system(obs, pwa=pwa, fully_async=mode is DeltaMode.FULLY_ASYNC)
    y = C * obs.delta_ns

    if mode is DeltaMode.SYNC:
        if not obs.is_sync:
            raise ValueError("SYNC mode needs a known clock offset")
        theta, res, cond = _lstsq(system.s, C * (obs.delta_ns - obs.eps_ns))
        return PositionEstimate(d_hat=theta, eps_hat_ns=float(obs.eps_ns), residual_norm=res, condition=cond,
                                method=tag)

    A = system.E.T
    if mode is DeltaMode.WEIGHTED:
        mu = np.zeros(obs.n_mpcs) if mu_ns is None else np.asarray(mu_ns, dtype=float).reshape(-1)
        cov = obs.sigma_or_zero ** 2 if cov_ns2 is None else np.asarray(cov_ns2, dtype=float)
        y = y - C * mu
        if cov.ndim == 1:
            if np.any(cov <= 0):
                raise ValueError("WEIGHTED mode needs positive error variances")
            w = 1.0 / np.sqrt(cov)
            A, y = A * w[:, None], y * w
        else:
            chol = np.linalg.cholesky(cov)
            A, y = np.linalg.solve(chol, A), np.linalg.solve(chol, y)

    theta, res, cond = _lstsq(A, y)
    estimate = PositionEstimate(d_hat=theta[:3], residual_norm=res, condition=cond, method=tag)
    if mode is DeltaMode.FULLY_ASYNC:
        estimate.eps_obs_ns = theta[3:] / C
    else:
        estimate.eps_hat_ns = float(theta[3] / C)
    return estimate


def delta_residuals(obs: Observation, estimate: PositionEstimate, pwa: bool = False) -> np.ndarray:
    """
    Per-pair residuals c*delta - s^T d - c*eps (m) of a delay-difference estimate.

    Args:
        obs (Observation): Delay differences with directions.
        estimate (PositionEstimate): Supplies d_hat and either eps_obs_ns or eps_hat_ns.
        pwa (bool): Plane-wave assumption, as used for the estimate.

    Returns:
        np.ndarray: One residual per MPC pair.
    """
    system = build_projection_system(obs, pwa=pwa)
    if estimate.eps_obs_ns is not None:
        offset_ns = np.asarray(estimate.eps_obs_ns, dtype=float)[obs.observer]
    elif estimate.eps_hat_ns is not None:
        offset_ns = np.full(obs.n_mpcs, float(estimate.eps_hat_ns))
    else:
        raise ValueError("the estimate carries no clock offset")
    return C * (obs.delta_ns - offset_ns) - system.s @ estimate.d_hat


def estimate_clock_offset_given_d(obs: Observation, d_known: ArrayLike, pwa: bool = False) -> float:
    """
    Clock offset LSE for a known relative position: the mean of delta - s^T d / c.

    Args:
        obs (Observation): Delay differences with directions.
        d_known (ArrayLike): Relative position (m).
        pwa (bool): Plane-wave assumption.

    Returns:
        float: Offset estimate (ns).
    """
    obs.require(1)
    system = build_projection_system(obs, pwa=pwa)
    return float(np.mean(obs.delta_ns - system.s @ as_vec3(d_known) / C))


def approx_position_rmse(sigma_ns: float, k: int) -> float:
    """Large-K position RMSE of the delay-difference LSE with isotropic directions: 3 c sigma / sqrt(K)."""

    if k < 1:
        raise InsufficientMpcs("K must be >= 1")
    if sigma_ns < 0:
        raise ValueError("sigma_ns must be >= 0")
    return 3.0 * C * sigma_ns / math.sqrt(k)


########################################################################################################################
# raw delays


def build_tau_system(obs: Observation, fully_async: bool = False) -> TauSystem:
    """
    Stacks the raw-delay equations c tau_b e_b - c tau_a e_a = d + c eps_o e_b + c eps_a,o (e_b - e_a).

    Args:
        obs (Observation): Measured delays and directions.
        fully_async (bool): One inter-node offset per observer.

    Returns:
        TauSystem: G and t.
    """
    _require_directions(obs)
    if not obs.has_delays:
        raise ValueError("raw-delay estimators need measured delays at both nodes")

    k, n = obs.n_mpcs, obs.n_observers
    e_a, e_b = obs.dir_a, obs.dir_b
    one_hot = (obs.observer[:, None] == np.arange(n)[None, :]).astype(float)

    eps_cols = (e_b[:, :, None] * one_hot[:, None, :]) if fully_async else e_b[:, :, None]
    obs_cols = (e_b - e_a)[:, :, None] * one_hot[:, None, :]
    identity = np.broadcast_to(np.eye(3), (k, 3, 3))
    G = np.concatenate([identity, eps_cols, obs_cols], axis=2).reshape(3 * k, -1)

    t = C * (obs.tau_b_ns[:, None] * e_b - obs.tau_a_ns[:, None] * e_a)
    return TauSystem(G=G, t=t.reshape(-1), n_observers=n)


def estimate_position_by_tau(obs: Observation, mode: Union[TauMode, str] = TauMode.JOINT) -> PositionEstimate:
    """
    Relative position directly from raw delays and directions.

    JOINT solves for d, the inter-node offset and every A-observer offset. SYNC averages the single-MPC
    reconstructions with all offsets known. FULLY_ASYNC solves one inter-node offset per observer as well.

    Args:
        obs (Observation): Measured delays and directions; SYNC needs eps_a_ns and eps_b_ns.
        mode (TauMode): Solver variant.

    Returns:
        PositionEstimate: The estimate.

    Raises:
        InsufficientMpcs: Without MPCs, or an observer without MPCs in JOINT/FULLY_ASYNC.
        RankDeficient: If the system is not solvable.
    """
    mode = TauMode(mode)
    obs.require(1)
    _require_directions(obs)
    tag = f"tau_{mode.value}"

    if mode is TauMode.SYNC:
        if obs.eps_a_ns is None or obs.eps_b_ns is None or not obs.has_delays:
            raise ValueError("SYNC mode needs delays and known per-observer offsets")
        tau_a = obs.tau_a_ns - obs.eps_a_ns[obs.observer]
        tau_b = obs.tau_b_ns - obs.eps_b_ns[obs.observer]
        singles = C * (tau_b[:, None] * obs.dir_b - tau_a[:, None] * obs.dir_a)
        d_hat = singles.mean(axis=0)
        return PositionEstimate(
            d_hat=d_hat, residual_norm=float(np.linalg.norm(singles - d_hat)), method=tag)

    if np.any(obs.counts == 0):
        raise InsufficientMpcs("every observer needs at least one MPC")

    fully_async = mode is TauMode.FULLY_ASYNC
    system = build_tau_system(obs, fully_async=fully_async)
    theta, res, cond = _lstsq(system.G, system.t)
    n = obs.n_observers

    estimate = PositionEstimate(d_hat=theta[:3], residual_norm=res, condition=cond, method=tag)
    if fully_async:
        estimate.eps_obs_ns = theta[3:3 + n] / C
        estimate.eps_a_obs_ns = theta[3 + n:] / C
    else:
        estimate.eps_hat_ns = float(theta[3] / C)
        estimate.eps_a_obs_ns = theta[4:] / C
    return estimate


########################################################################################################################
# general likelihood


def estimate_position_mle(
    obs: Observation,
    loglik_fn: Callable[[np.ndarray, float], float],
    starts: Optional[Sequence[ArrayLike]] = None,
) -> PositionEstimate:
    """
    Maximizes an arbitrary position likelihood over (d, eps) with the multistart simplex.

    Args:
        obs (Observation): Used for the default LSE starting point.
        loglik_fn (Callable): loglik_fn(d, eps) for a relative position d (m) and offset eps (ns).
        starts (Sequence[ArrayLike]): Starting points [dx, dy, dz, eps]; defaults to the LSE and four
            perturbations of it.

    Returns:
        PositionEstimate: The maximizer.
    """
    if starts is None:
        lse = estimate_position_by_delta(obs, DeltaMode.LSE)
        base = np.concatenate([lse.d_hat, [lse.eps_hat_ns]])
        step = max(float(np.linalg.norm(lse.d_hat)) * 0.1, 0.01)
        starts = [base] + [base + step * np.eye(4)[i] for i in range(4)]

    res = multistart_simplex(lambda x: -loglik_fn(x[:3], x[3]), [np.asarray(s, dtype=float) for s in starts])
    return PositionEstimate(
        d_hat=res.x[:3], eps_hat_ns=float(res.x[3]), method="mle",
        diagnostics={"loglik": -res.fun, "iterations": res.iterations},
    )
