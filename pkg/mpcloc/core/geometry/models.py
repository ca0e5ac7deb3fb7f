########################################################################################################################
# imports

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np
from numpy.typing import ArrayLike

from mpcloc import config
from mpcloc.errors import AntipodalDirections, DegenerateGeometry, NonUnitDirection


########################################################################################################################


class ProjectionMode(str, Enum):
    EXACT = "exact"
    PWA = "pwa"


def as_vec3(v: ArrayLike) -> np.ndarray:
    """
    Converts a length-3 sequence to a float vector.

    Args:
        v (ArrayLike): Cartesian coordinates.

    Returns:
        np.ndarray: Array of shape (3,).
    """
    arr = np.asarray(v, dtype=float).reshape(-1)
    if arr.shape != (3,):
        raise ValueError(f"expected 3 coordinates, got shape {np.shape(v)}")
    return arr


def check_unit(v: np.ndarray, name: str = "direction") -> None:
    """Raises NonUnitDirection when the norm deviates from 1 by more than UNIT_NORM_TOL."""

    norm = float(np.linalg.norm(v))
    if abs(norm - 1.0) > config.UNIT_NORM_TOL:
        raise NonUnitDirection(f"{name} has norm {norm:.9g}")


@dataclass(frozen=True, eq=False)
class MpcGeometry:
    """
    True propagation geometry of one MPC seen by both nodes.

    Attributes:
        tau_a_ns (float): True delay at node A.
        tau_b_ns (float): True delay at node B.
        dir_a (np.ndarray): Unit arrival direction at A, pointing from the (virtual) source toward A.
        dir_b (np.ndarray): Unit arrival direction at B.
        virtual_source (np.ndarray): Source position, or None when the pair was not built from one.
    """

    tau_a_ns: float
    tau_b_ns: float
    dir_a: np.ndarray
    dir_b: np.ndarray
    virtual_source: Optional[np.ndarray] = None

    @property
    def delta_ns(self) -> float:
        return self.tau_b_ns - self.tau_a_ns


def mpc_pair_from_virtual_source(source: ArrayLike, pos_a: ArrayLike, pos_b: ArrayLike) -> MpcGeometry:
    """
    Builds the delay/direction pair of a path emitted by a (virtual) point source.

    Args:
        source (ArrayLike): Virtual source position (m).
        pos_a (ArrayLike): Position of node A (m).
        pos_b (ArrayLike): Position of node B (m).

    Returns:
        MpcGeometry: Delays satisfy c*tau = path length and directions point from the source to each node.

    Raises:
        DegenerateGeometry: If a node coincides with the source.
    """
    source, pos_a, pos_b = as_vec3(source), as_vec3(pos_a), as_vec3(pos_b)

    leg_a = pos_a - source
    leg_b = pos_b - source
    len_a = float(np.linalg.norm(leg_a))
    len_b = float(np.linalg.norm(leg_b))
    if min(len_a, len_b) < config.DEGENERATE_DISTANCE_M:
        raise DegenerateGeometry(f"path length below {config.DEGENERATE_DISTANCE_M} m")

    return MpcGeometry(
        tau_a_ns=len_a / config.C_M_PER_NS,
        tau_b_ns=len_b / config.C_M_PER_NS,
        dir_a=leg_a / len_a,
        dir_b=leg_b / len_b,
        virtual_source=source,
    )


def relpos_from_single_mpc(m: MpcGeometry) -> np.ndarray:
    """
    Reconstructs the relative position p_B - p_A from a single MPC.

    Args:
        m (MpcGeometry): Delays and unit directions of the path.

    Returns:
        np.ndarray: c*tau_b*e_b - c*tau_a*e_a in meters.
    """
    check_unit(m.dir_a, "dir_a")
    check_unit(m.dir_b, "dir_b")
    c = config.C_M_PER_NS
    return c * m.tau_b_ns * np.asarray(m.dir_b) - c * m.tau_a_ns * np.asarray(m.dir_a)


def projection_residual(m: MpcGeometry, d: ArrayLike, mode: ProjectionMode = ProjectionMode.EXACT) -> float:
    """
    Residual of the projection identity of one MPC for a relative position hypothesis.

    EXACT evaluates (e_a + e_b)^T d - c*delta*(1 + e_a^T e_b); PWA evaluates e_a^T d - c*delta and ignores dir_b.

    Args:
        m (MpcGeometry): The MPC.
        d (ArrayLike): Relative position hypothesis (m).
        mode (ProjectionMode): EXACT or PWA.

    Returns:
        float: Residual in meters.
    """
    d = as_vec3(d)
    mode = ProjectionMode(mode)
    check_unit(m.dir_a, "dir_a")
    c_delta = config.C_M_PER_NS * m.delta_ns
    if mode is ProjectionMode.PWA:
        return float(np.dot(m.dir_a, d) - c_delta)

    check_unit(m.dir_b, "dir_b")
    return float(np.dot(m.dir_a + m.dir_b, d) - c_delta * (1.0 + np.dot(m.dir_a, m.dir_b)))


def s_vector(dir_a: ArrayLike, dir_b: ArrayLike) -> np.ndarray:
    """
    Projection vector s with s^T d = c*delta.

    Args:
        dir_a (ArrayLike): Unit direction at A.
        dir_b (ArrayLike): Unit direction at B.

    Returns:
        np.ndarray: (e_a + e_b) / (1 + e_a^T e_b).

    Raises:
        AntipodalDirections: If 1 + e_a^T e_b <= ANTIPODAL_TOL.
    """
    return s_vectors(as_vec3(dir_a)[None, :], as_vec3(dir_b)[None, :])[0]


def s_vectors(dirs_a: np.ndarray, dirs_b: np.ndarray) -> np.ndarray:
    """Row-wise s_vector for (K, 3) direction arrays."""

    dirs_a = np.atleast_2d(np.asarray(dirs_a, dtype=float))
    dirs_b = np.atleast_2d(np.asarray(dirs_b, dtype=float))
    denom = 1.0 + np.einsum("ij,ij->i", dirs_a, dirs_b)
    if np.any(denom <= config.ANTIPODAL_TOL):
        raise AntipodalDirections(f"{int(np.sum(denom <= config.ANTIPODAL_TOL))} antipodal direction pair(s)")
    return (dirs_a + dirs_b) / denom[:, None]


def random_unit_vectors(rng: np.random.Generator, n: int) -> np.ndarray:
    """
    Draws directions uniformly on the unit sphere.

    Args:
        rng (np.random.Generator): Random source.
        n (int): Number of directions.

    Returns:
        np.ndarray: Array of shape (n, 3).
    """
    v = rng.standard_normal((n, 3))
    norms = np.linalg.norm(v, axis=1)
    # a zero draw has probability zero, but redraw rather than divide by it
    while np.any(norms == 0.0):
        bad = norms == 0.0
        v[bad] = rng.standard_normal((int(bad.sum()), 3))
        norms = np.linalg.norm(v, axis=1)
    return v / norms[:, None]


def perturb_in_cone(dirs: np.ndarray, angles_rad: np.ndarray, azimuths_rad: np.ndarray) -> np.ndarray:
    """
    Tilts each direction by a given angle toward a given azimuth around it.

    Args:
        dirs (np.ndarray): Unit directions, shape (n, 3).
        angles_rad (np.ndarray): Tilt angle per direction.
        azimuths_rad (np.ndarray): Azimuth on the cone per direction.

    Returns:
        np.ndarray: Re-normalized unit directions, shape (n, 3).
    """
    dirs = np.atleast_2d(np.asarray(dirs, dtype=float))

    # orthonormal basis (u, v) perpendicular to each direction
    helper = np.where(np.abs(dirs[:, [0]]) < 0.9, [[1.0, 0.0, 0.0]], [[0.0, 1.0, 0.0]])
    u = np.cross(dirs, helper)
    u /= np.linalg.norm(u, axis=1)[:, None]
    v = np.cross(dirs, u)

    angles = np.asarray(angles_rad, dtype=float)[:, None]
    azimuths = np.asarray(azimuths_rad, dtype=float)[:, None]
    out = np.cos(angles) * dirs + np.sin(angles) * (np.cos(azimuths) * u + np.sin(azimuths) * v)
    return out / np.linalg.norm(out, axis=1)[:, None]


def angle_between_deg(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Angle between unit directions in degrees, row-wise for 2D inputs."""

    cosine = np.clip(np.sum(np.asarray(a) * np.asarray(b), axis=-1), -1.0, 1.0)
    return np.degrees(np.arccos(cosine))
