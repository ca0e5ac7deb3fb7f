########################################################################################################################
# imports

import logging
import math
from dataclasses import dataclass, fields, replace
from functools import lru_cache
from typing import List, Optional, Tuple, Union

import numpy as np
from numpy.typing import ArrayLike
from scipy.integrate import cumulative_trapezoid, trapezoid

from mpcloc import config
from mpcloc.core.geometry import MpcGeometry, as_vec3, mpc_pair_from_virtual_source, perturb_in_cone, \
    random_unit_vectors
from mpcloc.core.observation import Observation, SideSet, UnpairedObservation
from mpcloc.errors import ValidationError
from mpcloc.utils import as_generator
from mpcloc.utils.random import SeedLike


logger = logging.getLogger(__name__)

########################################################################################################################


@dataclass(frozen=True)
class ChannelConfig:
    """
    Statistics of the simulated UWB channel and of the measurement process.

    Powers are in mW and spectral densities in mW/GHz, so that N0 and T_p * S(tau) share a unit.
    """

    n_observers: int = 3
    k_per_observer: int = 4
    observer_radius_m: float = 5.0
    p_los: float = 0.5
    gamma_rise_ns: float = 10.0
    gamma_1_ns: float = 30.0
    omega_1: float = 1.5e-6
    chi: float = 0.9
    n0: float = 5e-9
    e1: float = 2.5e-5
    xi_nlos_db: float = -5.0
    bandwidth_ghz: float = 2.0
    pdp_support_ns: float = 225.0
    pdp_grid_ns: float = 0.01
    snr_scale: float = 1.0
    measurement_errors: bool = True
    per_observer_offsets: bool = False
    clock_offset_max_ns: float = 10.0

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        """
        Checks every field range.

        Raises:
            ValidationError: Naming the first offending field.
        """
        _require(isinstance(self.n_observers, (int, np.integer)) and self.n_observers >= 1,
                 "n_observers", "must be an integer >= 1")
        _require(isinstance(self.k_per_observer, (int, np.integer)) and self.k_per_observer >= 1,
                 "k_per_observer", "must be an integer >= 1")
        _require(self.observer_radius_m > 0, "observer_radius_m", "must be > 0")
        _require(0.0 <= self.p_los <= 1.0, "p_los", "must lie in [0, 1]")
        _require(self.gamma_rise_ns > 0, "gamma_rise_ns", "must be > 0")
        _require(self.gamma_1_ns > 0, "gamma_1_ns", "must be > 0")
        _require(self.omega_1 > 0, "omega_1", "must be > 0")
        _require(0.0 <= self.chi <= 1.0, "chi", "must lie in [0, 1]")
        _require(self.n0 > 0, "n0", "must be > 0")
        _require(self.e1 > 0, "e1", "must be > 0")
        _require(self.bandwidth_ghz > 0, "bandwidth_ghz", "must be > 0")
        _require(self.pdp_support_ns > 0, "pdp_support_ns", "must be > 0")
        _require(0 < self.pdp_grid_ns < self.pdp_support_ns, "pdp_grid_ns", "must be > 0 and below the support")
        _require(self.snr_scale > 0, "snr_scale", "must be > 0")
        _require(self.clock_offset_max_ns >= 0, "clock_offset_max_ns", "must be >= 0")

    @classmethod
    def field_names(cls) -> List[str]:
        return [f.name for f in fields(cls)]

    @property
    def tau_min_ns(self) -> float:
        """LOS delay between an observer and node A."""
        return self.observer_radius_m / config.C_M_PER_NS

    @property
    def beta_ghz(self) -> float:
        """Effective mean-square bandwidth of a block spectrum."""
        return self.bandwidth_ghz / math.sqrt(12.0)

    @property
    def pulse_duration_ns(self) -> float:
        return 1.0 / self.bandwidth_ghz

    @property
    def xi_nlos(self) -> float:
        return 10.0 ** (self.xi_nlos_db / 10.0)

    @property
    def pdp_amplitude(self) -> float:
        """Amplitude A such that the PDP integrates to omega_1 over [0, inf)."""
        g = 1.0 / (1.0 / self.gamma_1_ns + 1.0 / self.gamma_rise_ns)
        return self.omega_1 / (self.gamma_1_ns - self.chi * g)


def _require(condition: bool, field: str, message: str) -> None:
    if not condition:
        raise ValidationError(field, message)


@dataclass(frozen=True, eq=False)
class Mpc:
    """
    One MPC pair between an observer and the two nodes.

    Attributes:
        observer_index (int): Observer the path belongs to.
        mpc_index (int): Index within the observer's selected set.
        path_id (str): Identifier of the propagation path seen at A.
        geometry (MpcGeometry): True delays and directions.
        tau_meas_a_ns (float): Measured delay at A, clock offset included.
        tau_meas_b_ns (float): Measured delay at B, clock offset included.
        sigma_a_ns (float): Delay error standard deviation at A.
        sigma_b_ns (float): Delay error standard deviation at B.
        sinr_a (float): Linear SINR of the A-side measurement.
        sinr_b (float): Linear SINR of the B-side measurement.
        is_los (bool): Whether the path is the direct path.
        is_alien (bool): Whether the B-side component was replaced by an unrelated path.
        dir_meas_a (np.ndarray): Measured direction at A.
        dir_meas_b (np.ndarray): Measured direction at B.
        alien_path_id (str): Identifier of the replacing B-side path, or None.
    """

    observer_index: int
    mpc_index: int
    path_id: str
    geometry: MpcGeometry
    tau_meas_a_ns: float
    tau_meas_b_ns: float
    sigma_a_ns: float
    sigma_b_ns: float
    sinr_a: float
    sinr_b: float
    is_los: bool = False
    is_alien: bool = False
    dir_meas_a: Optional[np.ndarray] = None
    dir_meas_b: Optional[np.ndarray] = None
    alien_path_id: Optional[str] = None

    def __post_init__(self) -> None:
        if self.dir_meas_a is None:
            object.__setattr__(self, "dir_meas_a", np.asarray(self.geometry.dir_a, dtype=float))
        if self.dir_meas_b is None:
            object.__setattr__(self, "dir_meas_b", np.asarray(self.geometry.dir_b, dtype=float))

    @property
    def path_id_b(self) -> str:
        return self.alien_path_id if self.alien_path_id is not None else self.path_id

    @property
    def delta_meas_ns(self) -> float:
        return self.tau_meas_b_ns - self.tau_meas_a_ns

    @property
    def sigma_delta_ns(self) -> float:
        return math.hypot(self.sigma_a_ns, self.sigma_b_ns)


@dataclass(frozen=True, eq=False)
class Scenario:
    """
    Ground-truth world of one trial.

    Attributes:
        pos_a (np.ndarray): Position of node A (m).
        pos_b (np.ndarray): Position of node B (m).
        observers (np.ndarray): Observer positions, shape (N, 3).
        eps_ns (float): Inter-node clock offset eps_b - eps_a (the common value unless per-observer offsets are on).
        eps_a_per_obs (np.ndarray): Clock offsets between A and each observer.
        eps_b_per_obs (np.ndarray): Clock offsets between B and each observer.
        mpcs (tuple): All MPC pairs, grouped by observer.
        cfg (ChannelConfig): The statistics they were drawn from.
    """

    pos_a: np.ndarray
    pos_b: np.ndarray
    observers: np.ndarray
    eps_ns: float
    eps_a_per_obs: np.ndarray
    eps_b_per_obs: np.ndarray
    mpcs: tuple
    cfg: ChannelConfig

    def __repr__(self) -> str:
        return f"Scenario(d={self.distance_m:.4g} m, N={self.n_observers}, K={len(self.mpcs)})"

    @property
    def d_vec(self) -> np.ndarray:
        return self.pos_b - self.pos_a

    @property
    def distance_m(self) -> float:
        return float(np.linalg.norm(self.d_vec))

    @property
    def n_observers(self) -> int:
        return int(self.observers.shape[0])

    @property
    def eps_per_obs(self) -> np.ndarray:
        return self.eps_b_per_obs - self.eps_a_per_obs

    def mpcs_of(self, observer: int) -> List[Mpc]:
        return [m for m in self.mpcs if m.observer_index == observer]

    def observation(self, sync: bool = False) -> Observation:
        """
        The associated measurements as an estimator sees them.

        Args:
            sync (bool): Whether the clock offsets are known a priori.

        Returns:
            Observation: Pairs in scenario order, measured directions, delay-difference sigmas.
        """
        mpcs = self.mpcs
        per_observer = self.cfg.per_observer_offsets
        return Observation(
            observer=np.array([m.observer_index for m in mpcs], dtype=int),
            delta_ns=np.array([m.delta_meas_ns for m in mpcs]),
            tau_a_ns=np.array([m.tau_meas_a_ns for m in mpcs]),
            tau_b_ns=np.array([m.tau_meas_b_ns for m in mpcs]),
            dir_a=np.array([m.dir_meas_a for m in mpcs]).reshape(-1, 3),
            dir_b=np.array([m.dir_meas_b for m in mpcs]).reshape(-1, 3),
            sigma_ns=np.array([m.sigma_delta_ns for m in mpcs]),
            eps_ns=self.eps_ns if sync and not per_observer else None,
            eps_a_ns=self.eps_a_per_obs if sync else None,
            eps_b_ns=self.eps_b_per_obs if sync else None,
            per_observer_offsets=per_observer,
            n_observers=self.n_observers,
        )

    def unpaired(self, rng: Optional[np.random.Generator] = None, sync: bool = False) -> UnpairedObservation:
        """
        The per-observer MPC sets with the association hidden.

        Args:
            rng (np.random.Generator): When given, the B-side order of every observer is shuffled.
            sync (bool): Whether the clock offsets are known a priori.

        Returns:
            UnpairedObservation: Side sets carrying ground-truth path ids and alien flags.
        """
        sets_a, sets_b = [], []
        for o in range(self.n_observers):
            group = self.mpcs_of(o)
            aliens = [m.is_alien for m in group]
            set_a = SideSet(
                tau_ns=[m.tau_meas_a_ns for m in group],
                dirs=np.array([m.dir_meas_a for m in group]).reshape(-1, 3),
                sigma_ns=[m.sigma_a_ns for m in group],
                path_ids=[m.path_id for m in group],
                is_alien=aliens,
            )
            set_b = SideSet(
                tau_ns=[m.tau_meas_b_ns for m in group],
                dirs=np.array([m.dir_meas_b for m in group]).reshape(-1, 3),
                sigma_ns=[m.sigma_b_ns for m in group],
                path_ids=[m.path_id_b for m in group],
                is_alien=aliens,
            )
            if rng is not None:
                set_b = set_b.take(rng.permutation(len(set_b)))
            sets_a.append(set_a)
            sets_b.append(set_b)

        return UnpairedObservation(
            sets_a=sets_a,
            sets_b=sets_b,
            eps_ns=self.eps_ns if sync else None,
            eps_a_ns=self.eps_a_per_obs if sync else None,
            eps_b_ns=self.eps_b_per_obs if sync else None,
        )


########################################################################################################################
# channel statistics


def pdp_value(excess_delay_ns: ArrayLike, cfg: ChannelConfig) -> Union[float, np.ndarray]:
    """
    Double-exponential power delay profile.

    Args:
        excess_delay_ns (ArrayLike): Excess delay(s) >= 0.
        cfg (ChannelConfig): Channel statistics.

    Returns:
        Power density A * (1 - chi * exp(-tau / gamma_rise)) * exp(-tau / gamma_1).
    """
    tau = np.asarray(excess_delay_ns, dtype=float)
    if np.any(tau < 0):
        raise ValueError("excess delay must be non-negative")
    value = cfg.pdp_amplitude * (1.0 - cfg.chi * np.exp(-tau / cfg.gamma_rise_ns)) * np.exp(-tau / cfg.gamma_1_ns)
    return float(value) if value.ndim == 0 else value


def pdp_moments(cfg: ChannelConfig) -> Tuple[float, float]:
    """
    Mean excess delay and RMS delay spread of the PDP on its truncated support.

    Returns:
        tuple: (mean excess delay, RMS delay spread), both in ns.
    """
    grid, pdf = _pdp_grid(cfg)
    mass = trapezoid(pdf, grid)
    mean = trapezoid(grid * pdf, grid) / mass
    second = trapezoid(grid ** 2 * pdf, grid) / mass
    return float(mean), float(math.sqrt(second - mean ** 2))


def _pdp_grid(cfg: ChannelConfig) -> Tuple[np.ndarray, np.ndarray]:
    n = int(round(cfg.pdp_support_ns / cfg.pdp_grid_ns)) + 1
    grid = np.linspace(0.0, cfg.pdp_support_ns, n)
    return grid, pdp_value(grid, cfg)


def path_amplitude_sq(tau_ns: ArrayLike, xi: ArrayLike, cfg: ChannelConfig) -> np.ndarray:
    """Friis-type squared amplitude xi * E1 / (c * tau)^2, scaled by the configured SNR factor."""

    length = config.C_M_PER_NS * np.asarray(tau_ns, dtype=float)
    return np.asarray(xi, dtype=float) * cfg.e1 * cfg.snr_scale / length ** 2


def measurement_sigma(path_amp_sq: ArrayLike, excess_delay_ns: ArrayLike, cfg: ChannelConfig) -> tuple:
    """
    SINR and Cramer-Rao delay standard deviation of a path.

    Args:
        path_amp_sq (ArrayLike): Squared path amplitude(s) > 0.
        excess_delay_ns (ArrayLike): Excess delay(s) at which the diffuse interference is evaluated.
        cfg (ChannelConfig): Channel statistics.

    Returns:
        tuple: (linear SINR, sigma in ns).
    """
    amp_sq = np.asarray(path_amp_sq, dtype=float)
    if np.any(amp_sq <= 0):
        raise ValueError("path amplitude must be positive")
    sinr = amp_sq / (cfg.n0 + cfg.pulse_duration_ns * np.asarray(pdp_value(excess_delay_ns, cfg)))
    sigma = 1.0 / (math.pi * cfg.beta_ghz * np.sqrt(8.0 * sinr))
    if sinr.ndim == 0:
        return float(sinr), float(sigma)
    return sinr, sigma


########################################################################################################################
# sampling


class ChannelModel:
    """
    Scenario sampler for one ChannelConfig.

    The inverse CDF of the excess-delay distribution is tabulated once per configuration.

    Attributes:
        _cfg (ChannelConfig): Channel statistics.
        _grid (np.ndarray): Excess-delay grid (ns).
        _cdf (np.ndarray): Normalized cumulative PDP on the grid.
    """

    __slots__ = ["_cfg", "_grid", "_cdf"]

    def __init__(self, cfg: ChannelConfig) -> None:
        """
        Args:
            cfg (ChannelConfig): Channel statistics.
        """
        self._cfg = cfg
        self._grid, pdf = _pdp_grid(cfg)
        cdf = cumulative_trapezoid(pdf, self._grid, initial=0.0)
        self._cdf = cdf / cdf[-1]

    def __repr__(self) -> str:
        return f"ChannelModel(N={self._cfg.n_observers}, K_o={self._cfg.k_per_observer})"

    @property
    def cfg(self) -> ChannelConfig:
        return self._cfg

    def sample_excess_delays(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Draws n NLOS excess delays (ns) proportional to the PDP."""
        return np.interp(rng.random(n), self._cdf, self._grid)

    def sample_excess_delay_between(self, rng: np.random.Generator, lower_ns: float, upper_ns: float) -> float:
        """
        Draws one excess delay (ns) from the PDP conditioned on the open interval (lower_ns, upper_ns).

        Inside the tabulated support this inverts the CDF on [F(lower), F(upper)]. An interval that starts beyond
        the support samples the exp(-tau / gamma_1) tail of the PDP.

        Args:
            rng (np.random.Generator): Random source.
            lower_ns (float): Lower bound, clipped at zero.
            upper_ns (float): Upper bound above lower_ns, possibly inf.

        Returns:
            float: The excess delay.
        """
        lower_ns = max(float(lower_ns), 0.0)
        if not upper_ns > lower_ns:
            raise ValueError("upper_ns must exceed lower_ns")

        support = float(self._grid[-1])
        if lower_ns >= support:
            gamma = self._cfg.gamma_1_ns
            mass = -math.expm1(-(upper_ns - lower_ns) / gamma) if math.isfinite(upper_ns) else 1.0
            return lower_ns - gamma * math.log1p(-mass * rng.random())

        lo, hi = np.interp([lower_ns, min(upper_ns, support)], self._grid, self._cdf)
        return float(np.interp(rng.uniform(lo, hi), self._cdf, self._grid))

    def _measure(self, rng, tau_ns, xi, excess_ns, offset_ns) -> tuple:
        cfg = self._cfg
        sinr, sigma = measurement_sigma(path_amplitude_sq(tau_ns, xi, cfg), max(excess_ns, 0.0), cfg)
        if not cfg.measurement_errors:
            sigma = 0.0
        return tau_ns + sigma * rng.standard_normal() + offset_ns, sigma, sinr

    def sample(self, pos_b: ArrayLike, rng: np.random.Generator, pos_a: ArrayLike = (0.0, 0.0, 0.0)) -> Scenario:
        """
        Draws one scenario.

        Args:
            pos_b (ArrayLike): Position of node B (m).
            rng (np.random.Generator): Random source.
            pos_a (ArrayLike): Position of node A (m).

        Returns:
            Scenario: Observers, offsets and MPCs.
        """
        cfg = self._cfg
        c = config.C_M_PER_NS
        pos_a, pos_b = as_vec3(pos_a), as_vec3(pos_b)
        n_obs, k_o = cfg.n_observers, cfg.k_per_observer

        observers = pos_a + cfg.observer_radius_m * random_unit_vectors(rng, n_obs)

        max_off = cfg.clock_offset_max_ns
        eps = float(rng.uniform(-max_off, max_off))
        eps_a = rng.uniform(-max_off, max_off, n_obs)
        eps_o = rng.uniform(-max_off, max_off, n_obs) if cfg.per_observer_offsets else np.full(n_obs, eps)
        eps_b = eps_a + eps_o

        mpcs = []
        for o in range(n_obs):
            # diffuse interference at B is evaluated relative to B's own LOS delay
            los_b = float(np.linalg.norm(pos_b - observers[o])) / c
            is_los = bool(rng.random() < cfg.p_los)
            n_nlos = k_o - 1 if is_los else k_o

            excess = np.sort(self.sample_excess_delays(rng, n_nlos))
            dirs = random_unit_vectors(rng, n_nlos)
            sources = [observers[o]] if is_los else []
            sources += [pos_a - c * (cfg.tau_min_ns + x) * e for x, e in zip(excess, dirs)]

            for k, source in enumerate(sources):
                los = is_los and k == 0
                geometry = mpc_pair_from_virtual_source(source, pos_a, pos_b)
                xi = 1.0 if los else cfg.xi_nlos
                tau_a, sigma_a, sinr_a = self._measure(
                    rng, geometry.tau_a_ns, xi, geometry.tau_a_ns - cfg.tau_min_ns, eps_a[o])
                tau_b, sigma_b, sinr_b = self._measure(
                    rng, geometry.tau_b_ns, xi, geometry.tau_b_ns - los_b, eps_b[o])
                mpcs.append(Mpc(
                    observer_index=o, mpc_index=k, path_id=f"o{o}p{k}", geometry=geometry,
                    tau_meas_a_ns=tau_a, tau_meas_b_ns=tau_b, sigma_a_ns=sigma_a, sigma_b_ns=sigma_b,
                    sinr_a=sinr_a, sinr_b=sinr_b, is_los=los,
                ))

        return Scenario(
            pos_a=pos_a, pos_b=pos_b, observers=observers, eps_ns=eps,
            eps_a_per_obs=eps_a, eps_b_per_obs=eps_b, mpcs=tuple(mpcs), cfg=cfg,
        )

    def sample_alien(self, rng: np.random.Generator, scenario: Scenario, mpc: Mpc, tag: int) -> Mpc:
        """
        Replaces the B-side component of an MPC by an unrelated path without changing the B-side delay order.

        The new delay is drawn from the PDP, referenced to the first arrival at B, conditioned on the open interval
        between the neighbouring B-side delays, so every call succeeds.

        Args:
            rng (np.random.Generator): Random source.
            scenario (Scenario): The scenario the MPC belongs to.
            mpc (Mpc): The slot to replace.
            tag (int): Suffix for the new path id.

        Returns:
            Mpc: The slot with an alien B side, flagged is_alien.
        """
        cfg = self._cfg
        o = mpc.observer_index
        others = np.array([m.geometry.tau_b_ns for m in scenario.mpcs_of(o) if m.mpc_index != mpc.mpc_index])
        tau_old = mpc.geometry.tau_b_ns
        lower = others[others < tau_old].max(initial=-np.inf)
        upper = others[others > tau_old].min(initial=np.inf)

        los_b = float(np.linalg.norm(scenario.pos_b - scenario.observers[o])) / config.C_M_PER_NS
        # virtual sources may reach B before its LOS path does
        first = min(los_b, tau_old, others.min(initial=np.inf))
        tau_new = first + self.sample_excess_delay_between(rng, lower - first, upper - first)
        dir_new = random_unit_vectors(rng, 1)[0]

        tau_meas_b, sigma_b, sinr_b = self._measure(
            rng, tau_new, cfg.xi_nlos, tau_new - los_b, scenario.eps_b_per_obs[o])
        geometry = MpcGeometry(
            tau_a_ns=mpc.geometry.tau_a_ns, tau_b_ns=tau_new,
            dir_a=mpc.geometry.dir_a, dir_b=dir_new, virtual_source=None,
        )
        return replace(
            mpc, geometry=geometry, tau_meas_b_ns=tau_meas_b, sigma_b_ns=sigma_b, sinr_b=sinr_b,
            dir_meas_b=dir_new, is_alien=True, is_los=False, alien_path_id=f"o{o}x{tag}",
        )


@lru_cache(maxsize=32)
def _model(cfg: ChannelConfig) -> ChannelModel:
    return ChannelModel(cfg)


def _pos_b(d_m_or_pos_b) -> np.ndarray:
    if np.ndim(d_m_or_pos_b) == 0:
        d = float(d_m_or_pos_b)
        if d < 0:
            raise ValidationError("d_m", "must be >= 0")
        return np.array([d, 0.0, 0.0])
    return as_vec3(d_m_or_pos_b)


def sample_scenario(cfg: ChannelConfig, d_m_or_pos_b: Union[float, ArrayLike], seed: SeedLike) -> Scenario:
    """
    Draws a scenario with node A at the origin.

    Args:
        cfg (ChannelConfig): Channel statistics.
        d_m_or_pos_b (Union[float, ArrayLike]): Node distance along x (m), or the position of B.
        seed (SeedLike): Integer seed or generator.

    Returns:
        Scenario: The sampled world.
    """
    cfg.validate()
    return _model(cfg).sample(_pos_b(d_m_or_pos_b), as_generator(seed))


def corrupt_directions(scenario: Scenario, sigma_dir_deg: float, seed: SeedLike) -> Scenario:
    """
    Replaces every measured direction by a draw from a cone around the true direction.

    The cone angle is N(0, sigma_dir^2) and the azimuth is uniform.

    Args:
        scenario (Scenario): Input scenario.
        sigma_dir_deg (float): Cone-angle standard deviation in degrees.
        seed (SeedLike): Integer seed or generator.

    Returns:
        Scenario: A copy with corrupted measured directions.
    """
    if sigma_dir_deg < 0:
        raise ValidationError("sigma_dir_deg", "must be >= 0")
    if sigma_dir_deg == 0 or not scenario.mpcs:
        return scenario

    rng = as_generator(seed)
    k = len(scenario.mpcs)
    true_dirs = np.array([[m.geometry.dir_a for m in scenario.mpcs], [m.geometry.dir_b for m in scenario.mpcs]])
    true_dirs = true_dirs.reshape(2 * k, 3)
    angles = np.radians(sigma_dir_deg) * rng.standard_normal(2 * k)
    azimuths = rng.uniform(0.0, 2.0 * math.pi, 2 * k)
    measured = perturb_in_cone(true_dirs, angles, azimuths)

    mpcs = tuple(
        replace(m, dir_meas_a=measured[i], dir_meas_b=measured[k + i]) for i, m in enumerate(scenario.mpcs)
    )
    return replace(scenario, mpcs=mpcs)


def inject_aliens(scenario: Scenario, n_alien: int, seed: SeedLike) -> Scenario:
    """
    Replaces the B-side component of n randomly chosen MPC pairs by unrelated paths.

    Args:
        scenario (Scenario): Input scenario.
        n_alien (int): Number of pairs to corrupt, at most the total MPC count.
        seed (SeedLike): Integer seed or generator.

    Returns:
        Scenario: A copy in which the chosen pairs are flagged alien.
    """
    total = len(scenario.mpcs)
    if not 0 <= n_alien <= total:
        raise ValidationError("n_alien", f"must lie in [0, {total}]")
    if n_alien == 0:
        return scenario

    rng = as_generator(seed)
    model = _model(scenario.cfg)
    mpcs = list(scenario.mpcs)
    for tag, slot in enumerate(sorted(rng.choice(total, size=n_alien, replace=False))):
        current = replace(scenario, mpcs=tuple(mpcs))
        mpcs[slot] = model.sample_alien(rng, current, mpcs[slot], tag)

    logger.debug("injected %d alien MPC(s)", n_alien)
    return replace(scenario, mpcs=tuple(mpcs))
