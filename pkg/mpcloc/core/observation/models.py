########################################################################################################################
# imports

from dataclasses import dataclass, replace
from typing import List, Optional, Sequence

import numpy as np
from numpy.typing import ArrayLike

from mpcloc.errors import CountMismatch, InsufficientMpcs


########################################################################################################################


def _opt_array(value, ndim: int = 1) -> Optional[np.ndarray]:
    if value is None:
        return None
    arr = np.asarray(value, dtype=float)
    return arr.reshape(-1, 3) if ndim == 2 else arr.reshape(-1)


@dataclass(frozen=True, eq=False)
class Observation:
    """
    Associated MPC measurements that an estimator may see.

    One entry per MPC pair; pairs are grouped by the integer observer index. Delays, directions and sigmas are
    optional so that the same carrier serves the delay-difference estimators (which need only delta_ns) and the
    raw-delay estimators.

    Attributes:
        observer (np.ndarray): Observer index per MPC, values in [0, n_observers).
        delta_ns (np.ndarray): Measured delay differences tau_b - tau_a.
        tau_a_ns (np.ndarray): Measured delays at A, or None.
        tau_b_ns (np.ndarray): Measured delays at B, or None.
        dir_a (np.ndarray): Measured unit directions at A, shape (K, 3), or None.
        dir_b (np.ndarray): Measured unit directions at B, shape (K, 3), or None.
        sigma_ns (np.ndarray): Delay-difference error standard deviations (zero entries mean error free), or None.
        eps_ns (float): Known inter-node clock offset (synchronous case), or None.
        eps_a_ns (np.ndarray): Known per-observer offsets of A, or None.
        eps_b_ns (np.ndarray): Known per-observer offsets of B, or None.
        per_observer_offsets (bool): Whether each observer carries its own inter-node offset.
        n_observers (int): Number of observers, inferred from `observer` when not given.
    """

    observer: np.ndarray
    delta_ns: np.ndarray
    tau_a_ns: Optional[np.ndarray] = None
    tau_b_ns: Optional[np.ndarray] = None
    dir_a: Optional[np.ndarray] = None
    dir_b: Optional[np.ndarray] = None
    sigma_ns: Optional[np.ndarray] = None
    eps_ns: Optional[float] = None
    eps_a_ns: Optional[np.ndarray] = None
    eps_b_ns: Optional[np.ndarray] = None
    per_observer_offsets: bool = False
    n_observers: int = 0

    def __post_init__(self) -> None:
        observer = np.asarray(self.observer, dtype=int).reshape(-1)
        delta = np.asarray(self.delta_ns, dtype=float).reshape(-1)
        if observer.shape != delta.shape:
            raise CountMismatch("observer and delta_ns lengths differ")
        if observer.size and observer.min() < 0:
            raise ValueError("observer indices must be non-negative")

        object.__setattr__(self, "observer", observer)
        object.__setattr__(self, "delta_ns", delta)
        for name in ("tau_a_ns", "tau_b_ns", "sigma_ns", "eps_a_ns", "eps_b_ns"):
            object.__setattr__(self, name, _opt_array(getattr(self, name)))
        for name in ("dir_a", "dir_b"):
            object.__setattr__(self, name, _opt_array(getattr(self, name), ndim=2))

        for name in ("tau_a_ns", "tau_b_ns", "sigma_ns"):
            value = getattr(self, name)
            if value is not None and value.shape != delta.shape:
                raise CountMismatch(f"{name} has {value.size} entries, expected {delta.size}")
        for name in ("dir_a", "dir_b"):
            value = getattr(self, name)
            if value is not None and value.shape[0] != delta.size:
                raise CountMismatch(f"{name} has {value.shape[0]} rows, expected {delta.size}")
        if self.sigma_ns is not None and np.any(self.sigma_ns < 0):
            raise ValueError("sigma_ns must be non-negative")

        n = max(int(self.n_observers), int(observer.max()) + 1 if observer.size else 0)
        object.__setattr__(self, "n_observers", n)

    def __repr__(self) -> str:
        return f"Observation(K={self.n_mpcs}, N={self.n_observers}, sync={self.is_sync})"

    @classmethod
    def from_deltas(
        cls,
        deltas: Sequence[ArrayLike],
        sigmas: Optional[Sequence[ArrayLike]] = None,
        eps_ns: Optional[float] = None,
        per_observer_offsets: bool = False,
    ) -> "Observation":
        """
        Builds a delay-difference-only observation from per-observer lists.

        Args:
            deltas (Sequence[ArrayLike]): One list of delay differences (ns) per observer.
            sigmas (Sequence[ArrayLike]): Matching lists of error sigmas (ns), or None.
            eps_ns (float): Known clock offset for the synchronous case.
            per_observer_offsets (bool): Fully asynchronous mode.

        Returns:
            Observation: The grouped observation.
        """
        deltas = [np.atleast_1d(np.asarray(group, dtype=float)) for group in deltas]
        observer = np.concatenate([np.full(len(group), o, dtype=int) for o, group in enumerate(deltas)]) \
            if deltas else np.zeros(0, dtype=int)
        sigma = None
        if sigmas is not None:
            sigma = np.concatenate([np.atleast_1d(np.asarray(group, dtype=float)) for group in sigmas])
        return cls(
            observer=observer,
            delta_ns=np.concatenate(deltas) if deltas else np.zeros(0),
            sigma_ns=sigma,
            eps_ns=eps_ns,
            per_observer_offsets=per_observer_offsets,
            n_observers=len(deltas),
        )

    @property
    def n_mpcs(self) -> int:
        return int(self.delta_ns.size)

    @property
    def is_sync(self) -> bool:
        return self.eps_ns is not None

    @property
    def has_directions(self) -> bool:
        return self.dir_a is not None and self.dir_b is not None

    @property
    def has_delays(self) -> bool:
        return self.tau_a_ns is not None and self.tau_b_ns is not None

    @property
    def sigma_or_zero(self) -> np.ndarray:
        return np.zeros_like(self.delta_ns) if self.sigma_ns is None else self.sigma_ns

    @property
    def counts(self) -> np.ndarray:
        """Number of MPCs per observer."""
        return np.bincount(self.observer, minlength=self.n_observers)

    def groups(self) -> List[np.ndarray]:
        """Index arrays selecting the MPCs of each observer."""
        return [np.flatnonzero(self.observer == o) for o in range(self.n_observers)]

    def require(self, k_min: int) -> None:
        if self.n_mpcs < k_min:
            raise InsufficientMpcs(f"need at least {k_min} MPCs, got {self.n_mpcs}")

    def take(self, indices: ArrayLike) -> "Observation":
        """The MPC pairs at `indices`, keeping the observer count and every known offset."""
        idx = np.asarray(indices, dtype=int).reshape(-1)

        def pick(arr):
            return None if arr is None else arr[idx]

        return replace(
            self, observer=self.observer[idx], delta_ns=self.delta_ns[idx], tau_a_ns=pick(self.tau_a_ns),
            tau_b_ns=pick(self.tau_b_ns), dir_a=pick(self.dir_a), dir_b=pick(self.dir_b),
            sigma_ns=pick(self.sigma_ns),
        )

    def desync(self) -> "Observation":
        """The same measurements with every known clock offset forgotten."""
        return replace(self, eps_ns=None, eps_a_ns=None, eps_b_ns=None)

    def with_sync(self, eps_ns: float) -> "Observation":
        return replace(self, eps_ns=float(eps_ns))


@dataclass(frozen=True, eq=False)
class SideMpc:
    tau_ns: float
    direction: Optional[np.ndarray] = None
    obs_direction: Optional[np.ndarray] = None


@dataclass(frozen=True, eq=False)
class SideSet:
    """
    The MPCs one node measured toward one observer, in arbitrary order.

    Attributes:
        tau_ns (np.ndarray): Measured delays.
        dirs (np.ndarray): Unit arrival directions, shape (K_o, 3), or None.
        sigma_ns (np.ndarray): Per-delay error sigmas, or None.
        obs_dirs (np.ndarray): Departure directions at the observer, or None.
        path_ids (tuple): Ground-truth path identifiers, or None.
        is_alien (np.ndarray): Ground-truth alien flags, or None.
    """

    tau_ns: np.ndarray
    dirs: Optional[np.ndarray] = None
    sigma_ns: Optional[np.ndarray] = None
    obs_dirs: Optional[np.ndarray] = None
    path_ids: Optional[tuple] = None
    is_alien: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "tau_ns", np.asarray(self.tau_ns, dtype=float).reshape(-1))
        object.__setattr__(self, "dirs", _opt_array(self.dirs, ndim=2))
        object.__setattr__(self, "obs_dirs", _opt_array(self.obs_dirs, ndim=2))
        object.__setattr__(self, "sigma_ns", _opt_array(self.sigma_ns))
        if self.is_alien is not None:
            object.__setattr__(self, "is_alien", np.asarray(self.is_alien, dtype=bool).reshape(-1))
        if self.path_ids is not None:
            object.__setattr__(self, "path_ids", tuple(self.path_ids))

    def __len__(self) -> int:
        return int(self.tau_ns.size)

    def __getitem__(self, k: int) -> SideMpc:
        return SideMpc(
            tau_ns=float(self.tau_ns[k]),
            direction=None if self.dirs is None else self.dirs[k],
            obs_direction=None if self.obs_dirs is None else self.obs_dirs[k],
        )

    def take(self, indices: ArrayLike) -> "SideSet":
        """Reorders (or subsets) the set."""
        idx = np.asarray(indices, dtype=int)
        return SideSet(
            tau_ns=self.tau_ns[idx],
            dirs=None if self.dirs is None else self.dirs[idx],
            sigma_ns=None if self.sigma_ns is None else self.sigma_ns[idx],
            obs_dirs=None if self.obs_dirs is None else self.obs_dirs[idx],
            path_ids=None if self.path_ids is None else tuple(self.path_ids[i] for i in idx),
            is_alien=None if self.is_alien is None else self.is_alien[idx],
        )


@dataclass(frozen=True, eq=False)
class UnpairedObservation:
    """
    Per-observer MPC sets of both nodes with unknown association.

    Attributes:
        sets_a (tuple): One SideSet per observer for node A.
        sets_b (tuple): One SideSet per observer for node B.
        eps_ns (float): Known inter-node clock offset, or None.
        eps_a_ns (np.ndarray): Known per-observer offsets of A, or None.
        eps_b_ns (np.ndarray): Known per-observer offsets of B, or None.
    """

    sets_a: tuple
    sets_b: tuple
    eps_ns: Optional[float] = None
    eps_a_ns: Optional[np.ndarray] = None
    eps_b_ns: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "sets_a", tuple(self.sets_a))
        object.__setattr__(self, "sets_b", tuple(self.sets_b))
        if len(self.sets_a) != len(self.sets_b):
            raise CountMismatch("A and B must cover the same observers")

    @property
    def n_observers(self) -> int:
        return len(self.sets_a)

    @property
    def n_mpcs(self) -> int:
        return sum(len(s) for s in self.sets_a)

    def check_equal_sizes(self) -> None:
        for o, (set_a, set_b) in enumerate(zip(self.sets_a, self.sets_b)):
            if len(set_a) != len(set_b):
                raise CountMismatch(f"observer {o}: A has {len(set_a)} MPCs, B has {len(set_b)}")

    def pair(self, permutations: Sequence[np.ndarray]) -> Observation:
        """
        Pairs A-side MPC k with B-side MPC permutations[o][k] and drops rejected (-1) entries.

        Args:
            permutations (Sequence[np.ndarray]): One A-index -> B-index array per observer.

        Returns:
            Observation: The associated observation.
        """
        observer, tau_a, tau_b, dir_a, dir_b, sigma = [], [], [], [], [], []
        with_dirs = all(s.dirs is not None for s in self.sets_a + self.sets_b)
        with_sigma = all(s.sigma_ns is not None for s in self.sets_a + self.sets_b)

        for o, (set_a, set_b, perm) in enumerate(zip(self.sets_a, self.sets_b, permutations)):
            perm = np.asarray(perm, dtype=int)
            ka = np.flatnonzero(perm >= 0)
            kb = perm[ka]
            observer.append(np.full(ka.size, o, dtype=int))
            tau_a.append(set_a.tau_ns[ka])
            tau_b.append(set_b.tau_ns[kb])
            if with_dirs:
                dir_a.append(set_a.dirs[ka])
                dir_b.append(set_b.dirs[kb])
            if with_sigma:
                sigma.append(np.hypot(set_a.sigma_ns[ka], set_b.sigma_ns[kb]))

        tau_a = np.concatenate(tau_a) if tau_a else np.zeros(0)
        tau_b = np.concatenate(tau_b) if tau_b else np.zeros(0)
        return Observation(
            observer=np.concatenate(observer) if observer else np.zeros(0, dtype=int),
            delta_ns=tau_b - tau_a,
            tau_a_ns=tau_a,
            tau_b_ns=tau_b,
            dir_a=np.concatenate(dir_a) if with_dirs and dir_a else None,
            dir_b=np.concatenate(dir_b) if with_dirs and dir_b else None,
            sigma_ns=np.concatenate(sigma) if with_sigma and sigma else None,
            eps_ns=self.eps_ns,
            eps_a_ns=self.eps_a_ns,
            eps_b_ns=self.eps_b_ns,
            n_observers=self.n_observers,
        )
