import math

import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from conftest import triangles, unit_vectors
from mpcloc import config
from mpcloc.core.geometry import MpcGeometry, ProjectionMode, angle_between_deg, mpc_pair_from_virtual_source, \
    perturb_in_cone, projection_residual, random_unit_vectors, relpos_from_single_mpc, s_vector
from mpcloc.core.observation import Observation
from mpcloc.core.position import build_projection_system
from mpcloc.errors import AntipodalDirections, DegenerateGeometry, NonUnitDirection

C = config.C_M_PER_NS


def test_sqrt10_triangle():
    m = mpc_pair_from_virtual_source([0, 0, 0], [3, 0, 0], [3, 1, 0])
    assert m.tau_a_ns == pytest.approx(3.0 / C)
    assert m.tau_b_ns == pytest.approx(math.sqrt(10.0) / C)
    np.testing.assert_allclose(relpos_from_single_mpc(m), [0.0, 1.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(s_vector(m.dir_a, m.dir_b), [1.0, 0.162277, 0.0], atol=1e-6)
    assert projection_residual(m, [0, 1, 0]) == pytest.approx(0.0, abs=1e-12)


def test_coincident_node_is_degenerate():
    with pytest.raises(DegenerateGeometry):
        mpc_pair_from_virtual_source([1, 2, 3], [1, 2, 3], [0, 0, 0])


def test_non_unit_direction_rejected():
    m = MpcGeometry(tau_a_ns=1.0, tau_b_ns=2.0, dir_a=np.array([2.0, 0, 0]), dir_b=np.array([1.0, 0, 0]))
    with pytest.raises(NonUnitDirection):
        relpos_from_single_mpc(m)


def test_antipodal_directions_rejected():
    with pytest.raises(AntipodalDirections):
        s_vector([1, 0, 0], [-1, 0, 0])


def test_plane_wave_residual_small_for_far_source():
    d = np.array([1.0, 2.0, 0.5])
    m = mpc_pair_from_virtual_source([1e4, 3e3, -2e3], [0, 0, 0], d)
    assert abs(projection_residual(m, d, ProjectionMode.PWA)) < 1e-3
    assert projection_residual(m, d, ProjectionMode.EXACT) == pytest.approx(0.0, abs=1e-9)


@settings(max_examples=300, deadline=None)
@given(triangles())
def test_single_mpc_identities(triangle):
    source, pos_a, pos_b = triangle
    m = mpc_pair_from_virtual_source(source, pos_a, pos_b)
    d = pos_b - pos_a

    assert abs(C * m.delta_ns) <= np.linalg.norm(d) + 1e-9
    np.testing.assert_allclose(relpos_from_single_mpc(m), d, atol=1e-9)
    assert abs(projection_residual(m, d)) <= 1e-9 * max(1.0, np.linalg.norm(d))


@given(unit_vectors(), st.floats(min_value=0.0, max_value=3.0), st.floats(min_value=0.0, max_value=2 * math.pi))
def test_cone_perturbation_keeps_angle(direction, angle, azimuth):
    tilted = perturb_in_cone(direction[None, :], np.array([angle]), np.array([azimuth]))[0]
    assert np.linalg.norm(tilted) == pytest.approx(1.0)
    assert angle_between_deg(direction, tilted) == pytest.approx(math.degrees(angle), abs=1e-5)


def test_isotropic_projection_matrix_converges(rng):
    k = 100_000
    dirs = random_unit_vectors(rng, k)
    obs = Observation(observer=np.zeros(k, dtype=int), delta_ns=np.zeros(k), dir_a=dirs, dir_b=dirs)
    system = build_projection_system(obs, pwa=True)
    gram = system.E @ system.E.T / k
    assert np.linalg.norm(gram - np.diag([1 / 3, 1 / 3, 1 / 3, 1.0])) < 0.02
