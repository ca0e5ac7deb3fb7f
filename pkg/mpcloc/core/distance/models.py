########################################################################################################################
# imports

import itertools
import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import List, Optional, Union

import numpy as np
from numpy.typing import ArrayLike
from scipy.special import log_ndtr, logsumexp

from mpcloc import config
from mpcloc.core.observation import Observation, UnpairedObservation
from mpcloc.errors import InsufficientMpcs, NonpositiveDistanceHypothesis, PermutationBudgetExceeded
from mpcloc.utils import multistart_simplex


logger = logging.getLogger(__name__)

C = config.C_M_PER_NS

########################################################################################################################


class Variant(str, Enum):
    MLE = "mle"
    MVUE = "mvue"


class RmseCase(str, Enum):
    ASYNC_DIST = "async_dist"
    EPS_OFFSET = "eps_offset"
    SYNC_DIST = "sync_dist"


@dataclass(eq=False)
class DistanceEstimate:
    """
    Result of a distance estimator.

    Attributes:
        d_hat_m (float): Distance estimate, >= 0.
        eps_hat_ns (Union[float, np.ndarray]): Clock offset estimate, per observer in fully asynchronous mode.
        loglik (float): Log-likelihood at the estimate (+inf for a zero-distance point mass).
        method (str): Estimator tag.
        diagnostics (dict): Iterations, candidate counts, offset intervals.
    """

    d_hat_m: float
    eps_hat_ns: Union[float, np.ndarray]
    loglik: float
    method: str
    diagnostics: dict = field(default_factory=dict)

    def __repr__(self) -> str:
        return f"DistanceEstimate({self.method}: d={self.d_hat_m:.6g} m, eps={self.eps_hat_ns} ns)"


########################################################################################################################
# likelihood


def _log_indicator(x: np.ndarray, half: float, sigma: np.ndarray) -> np.ndarray:
    """
    log I(x, d) = log[F(x + d/c) - F(x - d/c)] for Gaussian errors, with the hard indicator where sigma is zero.
    """
    x = np.asarray(x, dtype=float)
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), x.shape)
    out = np.empty_like(x)

    hard = sigma <= 0
    out[hard] = np.where(np.abs(x[hard]) <= half + config.INDICATOR_TOL_NS, 0.0, -np.inf)

    soft = ~hard
    if np.any(soft):
        a = (x[soft] - half) / sigma[soft]
        b = (x[soft] + half) / sigma[soft]
        # reflect intervals on the upper half so both CDF values sit in the accurate lower tail
        flip = a > 0
        a, b = np.where(flip, -b, a), np.where(flip, -a, b)
        log_b = log_ndtr(b)
        with np.errstate(divide="ignore"):
            out[soft] = log_b + np.log1p(-np.exp(log_ndtr(a) - log_b))
    return out


def _eps_per_mpc(obs: Observation, eps_hyp_ns) -> Union[float, np.ndarray]:
    if np.ndim(eps_hyp_ns) == 0:
        return float(eps_hyp_ns)
    eps = np.asarray(eps_hyp_ns, dtype=float)
    if eps.size != obs.n_observers:
        raise ValueError(f"expected {obs.n_observers} per-observer offsets, got {eps.size}")
    return eps[obs.observer]


def distance_loglik(obs: Observation, d_hyp_m: float, eps_hyp_ns: Union[float, ArrayLike]) -> float:
    """
    Joint log-likelihood of a distance and clock-offset hypothesis given delay differences.

    Args:
        obs (Observation): Delay differences and optional sigmas (zero sigma means error free).
        d_hyp_m (float): Distance hypothesis (m), > 0.
        eps_hyp_ns (Union[float, ArrayLike]): Offset hypothesis, or one per observer.

    Returns:
        float: -K ln d + sum of log soft indicators; -inf when a hard indicator is violated.

    Raises:
        NonpositiveDistanceHypothesis: If d_hyp_m <= 0.
    """
    if not d_hyp_m > 0:
        raise NonpositiveDistanceHypothesis(f"distance hypothesis {d_hyp_m} must be > 0")
    x = obs.delta_ns - _eps_per_mpc(obs, eps_hyp_ns)
    terms = _log_indicator(x, d_hyp_m / C, obs.sigma_or_zero)
    return float(-obs.n_mpcs * math.log(d_hyp_m) + terms.sum())


def velocity_loglik(obs: Observation, elapsed_s: float, v_hyp_m_per_s: float, eps_hyp_ns) -> float:
    """
    Likelihood of a velocity hypothesis from the delay differences of two snapshots of the same node.

    Args:
        obs (Observation): Delay differences between the snapshots.
        elapsed_s (float): Time between the snapshots (s), > 0.
        v_hyp_m_per_s (float): Velocity hypothesis.
        eps_hyp_ns: Clock offset hypothesis.

    Returns:
        float: distance_loglik at d = v * T.
    """
    if not elapsed_s > 0:
        raise ValueError("elapsed_s must be > 0")
    return distance_loglik(obs, v_hyp_m_per_s * elapsed_s, eps_hyp_ns)


def _zero_sigma_loglik(obs: Observation, d_m: float, eps) -> float:
    if d_m <= 0:
        return math.inf
    return distance_loglik(replace(obs, sigma_ns=None), d_m, eps)


########################################################################################################################
# known association


def clock_offset_mvue(obs: Observation) -> float:
    """Midpoint of the delay-difference range, the error-free offset MLE and MVUE."""

    obs.require(1)
    return float(0.5 * (obs.delta_ns.max() + obs.delta_ns.min()))


def estimate_distance_closedform(obs: Observation, variant: Union[Variant, str] = Variant.MVUE) -> DistanceEstimate:
    """
    Order-statistics estimators for error-free delay differences.

    Asynchronous: d = (c/2)(max - min), eps = midpoint; MVUE scales d by (K+1)/(K-1).
    Synchronous (obs.eps_ns known): d = c * max|delta - eps|; MVUE scales d by (K+1)/K.

    Args:
        obs (Observation): Delay differences; sigmas are ignored.
        variant (Variant): MLE or MVUE.

    Returns:
        DistanceEstimate: The closed-form estimate.

    Raises:
        InsufficientMpcs: K < 1, or K < 2 for the asynchronous MVUE.
    """
    variant = Variant(variant)
    k = obs.n_mpcs
    delta = obs.delta_ns

    if obs.is_sync:
        obs.require(1)
        eps_hat = float(obs.eps_ns)
        d_mle = C * float(np.max(np.abs(delta - eps_hat)))
        factor = (k + 1) / k
    else:
        obs.require(2 if variant is Variant.MVUE else 1)
        eps_hat = clock_offset_mvue(obs)
        d_mle = 0.5 * C * float(delta.max() - delta.min())
        factor = (k + 1) / (k - 1) if k > 1 else 1.0

    d_hat = d_mle * factor if variant is Variant.MVUE else d_mle
    return DistanceEstimate(
        d_hat_m=d_hat,
        eps_hat_ns=eps_hat,
        loglik=_zero_sigma_loglik(obs, d_hat, eps_hat),
        method=f"{variant.value}{'_sync' if obs.is_sync else ''}",
        diagnostics={"closed_form": True},
    )


def estimate_distance_mle(obs: Observation) -> DistanceEstimate:
    """
    Maximum-likelihood distance (and clock offset, when unknown) under Gaussian delay-difference errors.

    Without any positive sigma the closed form is returned. Otherwise the likelihood is maximized by a multistart
    simplex seeded from the closed form and a 5x5 grid around it.

    Args:
        obs (Observation): Delay differences with sigmas.

    Returns:
        DistanceEstimate: The MLE.

    Raises:
        InsufficientMpcs: K < 2 asynchronous, K < 1 synchronous.
        SolverNoConverge: If the simplex does not settle.
    """
    if obs.per_observer_offsets and not obs.is_sync:
        return estimate_distance_fullyasync(obs)

    obs.require(1 if obs.is_sync else 2)
    sigma = obs.sigma_or_zero
    seed = estimate_distance_closedform(obs, Variant.MLE)
    if not np.any(sigma > 0):
        return seed

    scale = float(np.mean(sigma[sigma > 0]))
    d0 = max(seed.d_hat_m, C * scale, config.MIN_DISTANCE_M)
    factors = (0.5, 0.75, 1.0, 1.5, 2.0)

    if obs.is_sync:
        eps = float(obs.eps_ns)
        starts = [np.array([d0 * f]) for f in factors]
        res = multistart_simplex(
            lambda x: -distance_loglik(obs, x[0], eps), starts, bounds=[(config.MIN_DISTANCE_M, None)])
        d_hat, eps_hat = float(res.x[0]), eps
    else:
        grid = [np.array([d0 * f, seed.eps_hat_ns + scale * s]) for f in factors for s in (-2, -1, 0, 1, 2)]
        scores = [distance_loglik(obs, x[0], x[1]) for x in grid]
        ranked = [grid[i] for i in np.argsort(scores)[::-1][:3]]
        starts = [np.array([d0, seed.eps_hat_ns])] + ranked
        res = multistart_simplex(
            lambda x: -distance_loglik(obs, x[0], x[1]), starts,
            bounds=[(config.MIN_DISTANCE_M, None), (None, None)])
        d_hat, eps_hat = float(res.x[0]), float(res.x[1])

    return DistanceEstimate(
        d_hat_m=d_hat, eps_hat_ns=eps_hat, loglik=-res.fun,
        method=f"mle{'_sync' if obs.is_sync else ''}",
        diagnostics={"iterations": res.iterations, "starts": res.starts},
    )


def analytic_rmse(d_m: float, k: int, case: Union[RmseCase, str]) -> float:
    """
    RMSE of the error-free MVUE distance and offset estimators for uniformly distributed delay differences.

    Args:
        d_m (float): True distance (m).
        k (int): Number of MPCs.
        case (RmseCase): ASYNC_DIST, EPS_OFFSET (returned in ns) or SYNC_DIST.

    Returns:
        float: The RMSE.
    """
    case = RmseCase(case)
    k_min = 2 if case is RmseCase.ASYNC_DIST else 1
    if k < k_min:
        raise InsufficientMpcs(f"{case.value} needs K >= {k_min}")
    if case is RmseCase.ASYNC_DIST:
        return d_m * math.sqrt(2.0) / math.sqrt((k - 1) * (k + 2))
    if case is RmseCase.EPS_OFFSET:
        return (d_m / C) * math.sqrt(2.0) / math.sqrt((k + 1) * (k + 2))
    return d_m / math.sqrt(k * (k + 2))


def mean_mle_bias_factor(k: int) -> float:
    """E[d_MLE] / d for the error-free asynchronous MLE."""

    if k < 1:
        raise InsufficientMpcs("K must be >= 1")
    return (k - 1) / (k + 1)


########################################################################################################################
# fully asynchronous observers


def estimate_distance_fullyasync(obs: Observation) -> DistanceEstimate:
    """
    Distance MLE when every observer has its own inter-node clock offset.

    Error free, d = (c/2) * max over observers of the delay-difference spread, and any per-observer offset in
    [max delta - d/c, min delta + d/c] is a maximizer; its midpoint is reported. With sigmas the likelihood is
    maximized jointly over (d, eps_1, ..., eps_N).

    Args:
        obs (Observation): Delay differences grouped by observer.

    Returns:
        DistanceEstimate: eps_hat_ns holds one offset per observer (NaN for observers without MPCs).

    Raises:
        InsufficientMpcs: If no observer has two MPCs.
    """
    groups = obs.groups()
    if not any(g.size >= 2 for g in groups):
        raise InsufficientMpcs("fully asynchronous estimation needs an observer with at least 2 MPCs")

    delta = obs.delta_ns
    hi = np.array([delta[g].max() if g.size else np.nan for g in groups])
    lo = np.array([delta[g].min() if g.size else np.nan for g in groups])
    d_hat = 0.5 * C * float(np.nanmax(hi - lo))
    eps_hat = 0.5 * (hi + lo)
    intervals = np.column_stack([hi - d_hat / C, lo + d_hat / C])

    active = ~np.isnan(eps_hat)

    def _loglik(d, eps_active):
        eps = np.zeros(obs.n_observers)
        eps[active] = eps_active
        return distance_loglik(obs, d, eps)

    sigma = obs.sigma_or_zero
    if not np.any(sigma > 0):
        loglik = _loglik(d_hat, eps_hat[active]) if d_hat > 0 else math.inf
        return DistanceEstimate(
            d_hat_m=d_hat, eps_hat_ns=eps_hat, loglik=loglik, method="mle_fullyasync",
            diagnostics={"closed_form": True, "eps_intervals_ns": intervals},
        )

    scale = float(np.mean(sigma[sigma > 0]))
    d0 = max(d_hat, C * scale, config.MIN_DISTANCE_M)
    starts = [np.concatenate([[d0 * f], eps_hat[active]]) for f in (1.0, 0.75, 1.5)]
    bounds = [(config.MIN_DISTANCE_M, None)] + [(None, None)] * int(active.sum())
    res = multistart_simplex(lambda x: -_loglik(x[0], x[1:]), starts, bounds=bounds)

    eps_out = np.full(obs.n_observers, np.nan)
    eps_out[active] = res.x[1:]
    return DistanceEstimate(
        d_hat_m=float(res.x[0]), eps_hat_ns=eps_out, loglik=-res.fun, method="mle_fullyasync",
        diagnostics={"iterations": res.iterations, "eps_intervals_ns": intervals},
    )


########################################################################################################################
# unknown association


@dataclass(eq=False)
class _PermTable:
    """Per-observer delay-difference matrix and its permutation extremes."""

    perms: np.ndarray
    delta: np.ndarray
    sigma: np.ndarray
    hi: np.ndarray
    lo: np.ndarray


def _perm_tables(obs: UnpairedObservation) -> List[_PermTable]:
    obs.check_equal_sizes()
    tables = []
    for o, (set_a, set_b) in enumerate(zip(obs.sets_a, obs.sets_b)):
        k = len(set_a)
        if k == 0:
            continue
        if k > config.MAX_PERMUTATION_SIZE:
            raise PermutationBudgetExceeded(
                f"observer {o} has {k} MPCs, the cap is {config.MAX_PERMUTATION_SIZE}")

        perms = np.array(list(itertools.permutations(range(k))), dtype=int)
        delta = set_b.tau_ns[None, :] - set_a.tau_ns[:, None]
        sigma_a = np.zeros(k) if set_a.sigma_ns is None else set_a.sigma_ns
        sigma_b = np.zeros(k) if set_b.sigma_ns is None else set_b.sigma_ns
        sigma = np.hypot(sigma_a[:, None], sigma_b[None, :])

        per_perm = delta[np.arange(k)[None, :], perms]
        tables.append(_PermTable(perms, delta, sigma, per_perm.max(axis=1), per_perm.min(axis=1)))
    return tables


def noassoc_loglik(obs: UnpairedObservation, d_hyp_m: float, eps_hyp_ns: float) -> float:
    """
    Log-likelihood of (d, eps) with unknown association: the per-observer permanent of soft indicators.

    Args:
        obs (UnpairedObservation): Per-observer delay sets with sigmas (missing sigmas mean error free).
        d_hyp_m (float): Distance hypothesis, > 0.
        eps_hyp_ns (float): Clock offset hypothesis.

    Returns:
        float: -K ln d + sum over observers of log sum over permutations of prod of indicators.
    """
    if not d_hyp_m > 0:
        raise NonpositiveDistanceHypothesis(f"distance hypothesis {d_hyp_m} must be > 0")
    return _noassoc_loglik(_perm_tables(obs), obs.n_mpcs, d_hyp_m, eps_hyp_ns)


def _noassoc_loglik(tables: List[_PermTable], k_total: int, d_m: float, eps_ns: float) -> float:
    half = d_m / C
    total = -k_total * math.log(d_m)
    for table in tables:
        log_m = _log_indicator(table.delta - eps_ns, half, table.sigma)
        rows = np.arange(log_m.shape[0])[None, :]
        per_perm = log_m[rows, table.perms].sum(axis=1)
        total += float(logsumexp(per_perm)) if np.any(np.isfinite(per_perm)) else -math.inf
    return total


def _count_scores(tables: List[_PermTable], k_total: int, d: np.ndarray, eps: np.ndarray) -> np.ndarray:
    """log[(1/d^K) prod_o C_o] for candidate arrays; C_o counts permutations consistent with the hypothesis."""

    half = d / C
    upper = eps + half + config.INDICATOR_TOL_NS
    lower = eps - half - config.INDICATOR_TOL_NS
    with np.errstate(divide="ignore", invalid="ignore"):
        score = -k_total * np.log(d)
        for table in tables:
            counts = np.zeros(d.size)
            # chunked to bound memory for large permutation sets
            for start in range(0, d.size, 512):
                sl = slice(start, start + 512)
                ok = (table.hi[None, :] <= upper[sl, None]) & (table.lo[None, :] >= lower[sl, None])
                counts[sl] = ok.sum(axis=1)
            score = score + np.log(counts)
    return np.nan_to_num(score, nan=-np.inf)


def _pick(scores: np.ndarray, d: np.ndarray, eps: np.ndarray) -> int:
    """Argmax with ties broken toward the smallest distance, then the smallest |offset|."""

    best = scores.max()
    tol = 1e-12 * max(1.0, abs(best)) if np.isfinite(best) else 0.0
    tied = np.flatnonzero(scores >= best - tol) if np.isfinite(best) else np.flatnonzero(scores == best)
    order = np.lexsort((np.abs(eps[tied]), d[tied]))
    return int(tied[order[0]])


def _noassoc_candidates(tables: List[_PermTable], eps_known: Optional[float]) -> tuple:
    if eps_known is None:
        hi = np.unique(np.concatenate([t.hi for t in tables]))
        lo = np.unique(np.concatenate([t.lo for t in tables]))
        big, small = np.meshgrid(hi, lo, indexing="ij")
        keep = big >= small
        big, small = big[keep], small[keep]
        return C * (big - small) / 2.0, (big + small) / 2.0

    d = np.unique(np.concatenate([C * np.maximum(np.abs(t.hi - eps_known), np.abs(t.lo - eps_known))
                                  for t in tables]))
    return d, np.full(d.size, float(eps_known))


def estimate_distance_noassoc(obs: UnpairedObservation, sync_eps: Optional[float] = None) -> DistanceEstimate:
    """
    Joint distance and clock-offset MLE with unknown MPC association.

    Error free, the likelihood is evaluated on the finite candidate set built from the per-permutation extremes of
    the delay differences and scored by (1/d^K) prod_o C_o. With sigmas, the permanent likelihood is maximized by
    a multistart simplex seeded from the best-scoring candidates.

    Args:
        obs (UnpairedObservation): Per-observer delay sets of equal size per observer.
        sync_eps (float): Known clock offset; defaults to obs.eps_ns.

    Returns:
        DistanceEstimate: The estimate.

    Raises:
        PermutationBudgetExceeded: If any observer has more than MAX_PERMUTATION_SIZE MPCs.
        InsufficientMpcs: K < 2 asynchronous, K < 1 synchronous.
    """
    eps_known = obs.eps_ns if sync_eps is None else sync_eps
    k_total = obs.n_mpcs
    k_min = 1 if eps_known is not None else 2
    if k_total < k_min:
        raise InsufficientMpcs(f"need at least {k_min} MPCs, got {k_total}")

    tables = _perm_tables(obs)
    d_c, eps_c = _noassoc_candidates(tables, eps_known)
    scores = _count_scores(tables, k_total, d_c, eps_c)
    best = _pick(scores, d_c, eps_c)
    tag = "noassoc_sync" if eps_known is not None else "noassoc"

    has_sigma = any(np.any(t.sigma > 0) for t in tables)
    if not has_sigma:
        return DistanceEstimate(
            d_hat_m=float(d_c[best]), eps_hat_ns=float(eps_c[best]), loglik=float(scores[best]), method=tag,
            diagnostics={"closed_form": True, "candidates": int(d_c.size), "score": float(scores[best])},
        )

    scale = float(np.mean([t.sigma[t.sigma > 0].mean() for t in tables if np.any(t.sigma > 0)]))
    d_floor = max(C * scale, config.MIN_DISTANCE_M)
    ranked = np.argsort(-scores, kind="stable")[:6]

    if eps_known is not None:
        starts = [np.array([max(d_c[i], d_floor)]) for i in ranked]
        res = multistart_simplex(
            lambda x: -_noassoc_loglik(tables, k_total, x[0], eps_known), starts,
            bounds=[(config.MIN_DISTANCE_M, None)])
        d_hat, eps_hat = float(res.x[0]), float(eps_known)
    else:
        starts = [np.array([max(d_c[i], d_floor), eps_c[i]]) for i in ranked]
        res = multistart_simplex(
            lambda x: -_noassoc_loglik(tables, k_total, x[0], x[1]), starts,
            bounds=[(config.MIN_DISTANCE_M, None), (None, None)])
        d_hat, eps_hat = float(res.x[0]), float(res.x[1])

    return DistanceEstimate(
        d_hat_m=d_hat, eps_hat_ns=eps_hat, loglik=-res.fun, method=tag,
        diagnostics={"iterations": res.iterations, "candidates": int(d_c.size)},
    )
