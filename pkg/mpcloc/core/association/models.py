########################################################################################################################
# imports

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import linear_sum_assignment

from mpcloc import config
from mpcloc.core.geometry import angle_between_deg
from mpcloc.core.observation import Observation, SideMpc, SideSet, UnpairedObservation
from mpcloc.core.position import DeltaMode, PositionEstimate, delta_residuals, estimate_position_by_delta
from mpcloc.errors import CountMismatch, EstimatorError, GeometryError, ValidationError


logger = logging.getLogger(__name__)

C = config.C_M_PER_NS

########################################################################################################################


class MuMode(str, Enum):
    MEAN_DELAY = "mean_delay"
    KNOWN_OFFSET = "known_offset"


@dataclass(frozen=True)
class AssocParams:
    """
    Parameters of the geometry-inspired association cost.

    Attributes:
        lambda_per_ns (float): Weight of the centered delay mismatch; None estimates 1/tau_RMS from set A.
        angle_gate_deg (float): Pairs whose directions differ by more than this are infeasible.
        mu_mode (MuMode): Center delays by their set means or by known clock offsets.
        eps_a_ns (float): Known offset of A (KNOWN_OFFSET mode), per observer when a sequence.
        eps_b_ns (float): Known offset of B (KNOWN_OFFSET mode), per observer when a sequence.
        use_observer_directions (bool): Add |f_b - f_a|^2 when observer-side directions are present.
        refine_iterations (int): Re-association rounds against a position fit (associate_with_fit).
        residual_gate (float): Pairs whose fit residual exceeds this many sqrt((c sigma)^2 + floor^2) are rejected
            by associate_with_fit; None disables the rejection.
        residual_floor_m (float): Residual scale added to c sigma, covering direction errors and unknown sigmas.
    """

    lambda_per_ns: Optional[float] = None
    angle_gate_deg: float = config.DEFAULT_ANGLE_GATE_DEG
    mu_mode: MuMode = MuMode.MEAN_DELAY
    eps_a_ns: Optional[object] = None
    eps_b_ns: Optional[object] = None
    use_observer_directions: bool = False
    refine_iterations: int = config.ASSOC_REFINE_ITERATIONS
    residual_gate: Optional[float] = config.RESIDUAL_GATE
    residual_floor_m: float = config.RESIDUAL_FLOOR_M

    def __post_init__(self) -> None:
        if self.lambda_per_ns is not None and self.lambda_per_ns < 0:
            raise ValidationError("lambda_per_ns", "must be >= 0")
        if not 0 < self.angle_gate_deg <= 180:
            raise ValidationError("angle_gate_deg", "must lie in (0, 180]")
        if isinstance(self.refine_iterations, bool) or not isinstance(self.refine_iterations, (int, np.integer)) \
                or self.refine_iterations < 0:
            raise ValidationError("refine_iterations", "must be an integer >= 0")
        if self.residual_gate is not None and not self.residual_gate > 0:
            raise ValidationError("residual_gate", "must be > 0")
        if not self.residual_floor_m > 0:
            raise ValidationError("residual_floor_m", "must be > 0")
        object.__setattr__(self, "mu_mode", MuMode(self.mu_mode))
        if self.mu_mode is MuMode.KNOWN_OFFSET and (self.eps_a_ns is None or self.eps_b_ns is None):
            raise ValidationError("mu_mode", "KNOWN_OFFSET needs eps_a_ns and eps_b_ns")

    @classmethod
    def from_tau_rms(cls, tau_rms_ns: float, **kwargs) -> "AssocParams":
        return cls(lambda_per_ns=1.0 / tau_rms_ns, **kwargs)

    def lam(self, set_a: SideSet) -> float:
        if self.lambda_per_ns is not None:
            return float(self.lambda_per_ns)
        spread = float(np.std(set_a.tau_ns)) if len(set_a) else 0.0
        return 1.0 / spread if spread > 0 else 0.0

    def mu(self, set_a: SideSet, set_b: SideSet, observer: int) -> Tuple[float, float]:
        if self.mu_mode is MuMode.KNOWN_OFFSET:
            eps_a = np.atleast_1d(np.asarray(self.eps_a_ns, dtype=float))
            eps_b = np.atleast_1d(np.asarray(self.eps_b_ns, dtype=float))
            return float(eps_a[observer if eps_a.size > 1 else 0]), float(eps_b[observer if eps_b.size > 1 else 0])
        return float(np.mean(set_a.tau_ns)), float(np.mean(set_b.tau_ns))


@dataclass(eq=False)
class Association:
    """
    Per-observer MPC association.

    Attributes:
        permutations (list): One array per observer mapping A-index -> B-index, -1 for rejected A-side MPCs.
        rejected_b (list): One array per observer of rejected B-side indices.
        total_cost (float): Sum of the costs of accepted pairs.
    """

    permutations: List[np.ndarray]
    rejected_b: List[np.ndarray] = field(default_factory=list)
    total_cost: float = 0.0

    def __repr__(self) -> str:
        return f"Association(N={len(self.permutations)}, accepted={self.n_accepted}, cost={self.total_cost:.4g})"

    @property
    def n_accepted(self) -> int:
        return int(sum(np.sum(p >= 0) for p in self.permutations))

    def rejected_a(self, observer: int) -> np.ndarray:
        return np.flatnonzero(self.permutations[observer] < 0)

    def inverse(self) -> "Association":
        """The B -> A association."""
        inverted, rejected = [], []
        for perm in self.permutations:
            inv = np.full(perm.size, -1, dtype=int)
            accepted = np.flatnonzero(perm >= 0)
            inv[perm[accepted]] = accepted
            inverted.append(inv)
            rejected.append(np.flatnonzero(perm < 0))
        return Association(permutations=inverted, rejected_b=rejected, total_cost=self.total_cost)


@dataclass(frozen=True)
class AssociationScore:
    correct: bool
    n_errors: int
    n_alien: int


########################################################################################################################


def association_cost(
    mpc_a: SideMpc, mpc_b: SideMpc, params: AssocParams, mu_a: float, mu_b: float, lam: Optional[float] = None,
) -> float:
    """
    Cost of pairing one A-side MPC with one B-side MPC.

    J = |e_b - e_a|^2 + lambda^2 |(tau_b - mu_b) - (tau_a - mu_a)|^2, plus |f_b - f_a|^2 when enabled; infinite when
    the directions differ by more than the angle gate.

    Args:
        mpc_a (SideMpc): A-side MPC with direction.
        mpc_b (SideMpc): B-side MPC with direction.
        params (AssocParams): Cost parameters.
        mu_a (float): Centering delay of the A set.
        mu_b (float): Centering delay of the B set.
        lam (float): Overrides params.lambda_per_ns.

    Returns:
        float: The cost, possibly math.inf.
    """
    lam = params.lambda_per_ns if lam is None else lam
    if lam is None:
        raise ValueError("lambda_per_ns must be given for a single-pair cost")
    e_a, e_b = np.asarray(mpc_a.direction), np.asarray(mpc_b.direction)
    if float(angle_between_deg(e_a, e_b)) > params.angle_gate_deg:
        return math.inf

    cost = float(np.sum((e_b - e_a) ** 2)) + (lam * ((mpc_b.tau_ns - mu_b) - (mpc_a.tau_ns - mu_a))) ** 2
    if params.use_observer_directions and mpc_a.obs_direction is not None and mpc_b.obs_direction is not None:
        cost += float(np.sum((np.asarray(mpc_b.obs_direction) - np.asarray(mpc_a.obs_direction)) ** 2))
    return cost


def cost_matrix(
    set_a: SideSet, set_b: SideSet, params: AssocParams, observer: int = 0,
    fit: Optional[Tuple[np.ndarray, float]] = None,
) -> np.ndarray:
    """
    All pairwise association costs of one observer, rows indexing A and columns indexing B.

    Args:
        set_a (SideSet): A-side MPCs with directions.
        set_b (SideSet): B-side MPCs with directions.
        params (AssocParams): Cost parameters.
        observer (int): Observer index, for per-observer known offsets.
        fit (tuple): (relative position in m, c times the inter-node offset in m). When given, the delay term
            compares tau_b - tau_a with the delay difference the fit predicts for the candidate pair instead of
            centering both sets.

    Returns:
        np.ndarray: Shape (K_a, K_b) with math.inf for gated pairs.
    """
    if set_a.dirs is None or set_b.dirs is None:
        raise ValueError("association needs measured directions")
    lam = params.lam(set_a)

    cosine = np.clip(set_a.dirs @ set_b.dirs.T, -1.0, 1.0)
    gated = np.degrees(np.arccos(cosine)) > params.angle_gate_deg

    direction_term = np.sum((set_b.dirs[None, :, :] - set_a.dirs[:, None, :]) ** 2, axis=2)
    if fit is None:
        mu_a, mu_b = params.mu(set_a, set_b, observer)
        mismatch = (set_b.tau_ns[None, :] - mu_b) - (set_a.tau_ns[:, None] - mu_a)
    else:
        mismatch = _fit_mismatch_ns(set_a, set_b, *fit)
    with np.errstate(invalid="ignore"):
        costs = direction_term + (lam * mismatch) ** 2
    if params.use_observer_directions and set_a.obs_dirs is not None and set_b.obs_dirs is not None:
        costs = costs + np.sum((set_b.obs_dirs[None, :, :] - set_a.obs_dirs[:, None, :]) ** 2, axis=2)
    costs[gated | ~np.isfinite(costs)] = math.inf
    return costs


def _fit_mismatch_ns(set_a: SideSet, set_b: SideSet, d_hat: np.ndarray, offset_m: float) -> np.ndarray:
    e_a, e_b = set_a.dirs[:, None, :], set_b.dirs[None, :, :]
    denom = 1.0 + np.sum(e_a * e_b, axis=2)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = (e_a + e_b) / denom[:, :, None]
        predicted = (s @ np.asarray(d_hat, dtype=float) + offset_m) / C
    mismatch = (set_b.tau_ns[None, :] - set_a.tau_ns[:, None]) - predicted
    # antipodal candidates have no projection vector
    return np.where(denom > config.ANTIPODAL_TOL, mismatch, math.inf)


def _assign(costs: np.ndarray) -> Tuple[np.ndarray, np.ndarray, float]:
    k = costs.shape[0]
    perm = np.full(k, -1, dtype=int)
    if costs.size == 0:
        return perm, np.zeros(0, dtype=int), 0.0

    finite = np.isfinite(costs)
    # infeasible pairs get a sentinel above any achievable feasible total, then get filtered out
    sentinel = 1e6 + 1e3 * (float(costs[finite].max()) + 1.0) * k if finite.any() else 1.0
    rows, cols = linear_sum_assignment(np.where(finite, costs, sentinel))

    accepted = finite[rows, cols]
    perm[rows[accepted]] = cols[accepted]
    rejected_b = np.setdiff1d(np.arange(costs.shape[1]), cols[accepted])
    return perm, rejected_b, float(costs[rows[accepted], cols[accepted]].sum())


def _solve(
    sets_a: List[SideSet], sets_b: List[SideSet], params: AssocParams, offsets_m: Optional[np.ndarray] = None,
    d_hat: Optional[np.ndarray] = None,
) -> Tuple[Association, List[np.ndarray]]:
    permutations, rejected, matrices, total = [], [], [], 0.0
    for o, (set_a, set_b) in enumerate(zip(sets_a, sets_b)):
        fit = None if d_hat is None else (d_hat, float(offsets_m[o]))
        costs = cost_matrix(set_a, set_b, params, o, fit=fit)
        perm, rej_b, cost = _assign(costs)
        permutations.append(perm)
        rejected.append(rej_b)
        matrices.append(costs)
        total += cost
        if rej_b.size:
            logger.debug("observer %d: rejected %d pair(s)", o, rej_b.size)
    return Association(permutations=permutations, rejected_b=rejected, total_cost=total), matrices


def associate(sets_a: Sequence[SideSet], sets_b: Sequence[SideSet], params: AssocParams) -> Association:
    """
    Optimal per-observer association by linear assignment on the gated cost.

    Pairs that could only be matched through a gated (infinite-cost) entry are rejected on both sides.

    Args:
        sets_a (Sequence[SideSet]): A-side sets, one per observer.
        sets_b (Sequence[SideSet]): B-side sets, one per observer.
        params (AssocParams): Cost parameters.

    Returns:
        Association: Permutations with rejections and the total accepted cost.
    """
    sets_a, sets_b = _as_sequences(sets_a, sets_b)
    return _solve(sets_a, sets_b, params)[0]


########################################################################################################################
# fit-verified association


def _unknowns(mode: DeltaMode, n_observers: int) -> int:
    if mode is DeltaMode.SYNC:
        return 3
    return 3 + (n_observers if mode is DeltaMode.FULLY_ASYNC else 1)


def screen_pairs(
    obs: Observation, params: AssocParams, mode: Union[DeltaMode, str] = DeltaMode.LSE,
) -> Tuple[np.ndarray, Optional[PositionEstimate]]:
    """
    Rejects associated pairs that contradict the delay-difference position fit of the others.

    While more than one redundant pair remains, the pair with the largest normalized residual
    |c delta - s^T d - c eps| / sqrt((c sigma)^2 + floor^2) is dropped and the fit repeated, until every normalized
    residual is within params.residual_gate.

    Args:
        obs (Observation): Associated pairs with directions.
        params (AssocParams): Supplies residual_gate and residual_floor_m.
        mode (DeltaMode): LSE, SYNC or FULLY_ASYNC.

    Returns:
        tuple: (boolean mask of kept pairs, fit on the kept pairs or None when no fit exists).
    """
    mode = DeltaMode(mode)
    if mode is DeltaMode.WEIGHTED:
        raise ValueError("screening supports the LSE, SYNC and FULLY_ASYNC fits")
    keep = np.ones(obs.n_mpcs, dtype=bool)
    try:
        fit = estimate_position_by_delta(obs, mode)
    except (EstimatorError, GeometryError) as err:
        logger.debug("no position fit to screen against (%s)", err)
        return keep, None
    if params.residual_gate is None:
        return keep, fit

    scale = np.hypot(C * obs.sigma_or_zero, params.residual_floor_m)
    while np.count_nonzero(keep) > _unknowns(mode, obs.n_observers) + 1:
        idx = np.flatnonzero(keep)
        z = np.abs(delta_residuals(obs.take(idx), fit)) / scale[idx]
        worst = int(np.argmax(z))
        if z[worst] <= params.residual_gate:
            break
        candidate = keep.copy()
        candidate[idx[worst]] = False
        try:
            refit = estimate_position_by_delta(obs.take(np.flatnonzero(candidate)), mode)
        except (EstimatorError, GeometryError):
            break
        keep, fit = candidate, refit
    return keep, fit


def _drop_rows(assoc: Association, keep: np.ndarray, matrices: List[np.ndarray]) -> Association:
    # rows follow UnpairedObservation.pair: observer by observer, ascending A-index
    permutations = [p.copy() for p in assoc.permutations]
    rejected = [list(r) for r in assoc.rejected_b]
    row = 0
    for o, perm in enumerate(permutations):
        for k in np.flatnonzero(assoc.permutations[o] >= 0):
            if not keep[row]:
                rejected[o].append(int(perm[k]))
                perm[k] = -1
            row += 1

    total = 0.0
    for costs, perm in zip(matrices, permutations):
        accepted = np.flatnonzero(perm >= 0)
        total += float(costs[accepted, perm[accepted]].sum())
    return Association(
        permutations=permutations, rejected_b=[np.sort(np.asarray(r, dtype=int)) for r in rejected],
        total_cost=total,
    )


def associate_with_fit(
    unpaired: UnpairedObservation, params: AssocParams, mode: Union[DeltaMode, str] = DeltaMode.LSE,
) -> Association:
    """
    Cost-based association verified against a delay-difference position fit.

    Starts from the gated assignment of `associate`. Each round screens the accepted pairs with `screen_pairs`,
    then re-solves every observer with the delay term measured against the delay difference the fit predicts for
    each candidate pair. Rounds stop after params.refine_iterations or when the permutations repeat. Pairs the
    final screen drops are rejected on both sides.

    Args:
        unpaired (UnpairedObservation): Per-observer A and B sets with directions; SYNC needs eps_ns.
        params (AssocParams): Cost, refinement and rejection parameters.
        mode (DeltaMode): Offset model of the fit: LSE, SYNC or FULLY_ASYNC.

    Returns:
        Association: Permutations with rejections; total_cost sums the last cost matrices over accepted pairs.
    """
    mode = DeltaMode(mode)
    if mode is DeltaMode.SYNC and unpaired.eps_ns is None:
        raise ValueError("SYNC mode needs a known clock offset")
    sets_a, sets_b = _as_sequences(unpaired.sets_a, unpaired.sets_b)

    def paired(assoc: Association) -> Observation:
        obs = unpaired.pair(assoc.permutations)
        return obs if mode is not DeltaMode.FULLY_ASYNC else replace(obs, per_observer_offsets=True)

    assoc, matrices = _solve(sets_a, sets_b, params)
    keep, fit = screen_pairs(paired(assoc), params, mode)
    for _ in range(params.refine_iterations):
        if fit is None:
            break
        offsets = C * (fit.eps_obs_ns if fit.eps_obs_ns is not None else np.full(len(sets_a), fit.eps_hat_ns))
        refined, refined_matrices = _solve(sets_a, sets_b, params, offsets_m=offsets, d_hat=fit.d_hat)
        if all(np.array_equal(p, q) for p, q in zip(refined.permutations, assoc.permutations)):
            break
        assoc, matrices = refined, refined_matrices
        keep, fit = screen_pairs(paired(assoc), params, mode)

    if not keep.all():
        logger.debug("rejected %d pair(s) with poor fit", int(np.count_nonzero(~keep)))
    return _drop_rows(assoc, keep, matrices)


def associate_by_delay_sort(sets_a: Sequence[SideSet], sets_b: Sequence[SideSet]) -> Association:
    """
    Pairs the i-th smallest A delay with the i-th smallest B delay of every observer (stable in input order).

    Args:
        sets_a (Sequence[SideSet]): A-side sets, one per observer.
        sets_b (Sequence[SideSet]): B-side sets, one per observer.

    Returns:
        Association: Full permutations without rejections.
    """
    sets_a, sets_b = _as_sequences(sets_a, sets_b)
    permutations = []
    for set_a, set_b in zip(sets_a, sets_b):
        perm = np.empty(len(set_a), dtype=int)
        perm[np.argsort(set_a.tau_ns, kind="stable")] = np.argsort(set_b.tau_ns, kind="stable")
        permutations.append(perm)
    return Association(permutations=permutations, rejected_b=[np.zeros(0, dtype=int) for _ in permutations])


def evaluate_association(
    assoc: Association, sets_a: Sequence[SideSet], sets_b: Sequence[SideSet],
) -> AssociationScore:
    """
    Scores an association against ground-truth path identifiers.

    An accepted pair is an error when its path ids differ, unless both MPCs are alien.

    Args:
        assoc (Association): The association to score.
        sets_a (Sequence[SideSet]): A-side sets carrying path_ids and is_alien.
        sets_b (Sequence[SideSet]): B-side sets carrying path_ids and is_alien.

    Returns:
        AssociationScore: correct, n_errors and n_alien (accepted pairs with at least one alien MPC).
    """
    sets_a, sets_b = _as_sequences(sets_a, sets_b)
    n_errors = n_alien = 0
    for perm, set_a, set_b in zip(assoc.permutations, sets_a, sets_b):
        if set_a.path_ids is None or set_b.path_ids is None:
            raise ValueError("ground-truth path ids are required")
        alien_a = np.zeros(len(set_a), bool) if set_a.is_alien is None else set_a.is_alien
        alien_b = np.zeros(len(set_b), bool) if set_b.is_alien is None else set_b.is_alien
        for k in np.flatnonzero(perm >= 0):
            j = perm[k]
            both_alien = alien_a[k] and alien_b[j]
            n_alien += int(alien_a[k] or alien_b[j])
            if set_a.path_ids[k] != set_b.path_ids[j] and not both_alien:
                n_errors += 1
    return AssociationScore(correct=n_errors == 0, n_errors=n_errors, n_alien=n_alien)


def _as_sequences(sets_a, sets_b) -> tuple:
    if isinstance(sets_a, SideSet):
        sets_a, sets_b = [sets_a], [sets_b]
    if len(sets_a) != len(sets_b):
        raise CountMismatch("A and B must cover the same observers")
    for o, (set_a, set_b) in enumerate(zip(sets_a, sets_b)):
        if len(set_a) != len(set_b):
            raise CountMismatch(f"observer {o}: A has {len(set_a)} MPCs, B has {len(set_b)}")
    return list(sets_a), list(sets_b)
