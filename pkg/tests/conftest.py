import hypothesis.strategies as st
import numpy as np
import pytest
from hypothesis import assume
from hypothesis.extra.numpy import arrays

from mpcloc.core.geometry import mpc_pair_from_virtual_source, random_unit_vectors
from mpcloc.core.observation import Observation


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run full-size Monte Carlo checks")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full-size Monte Carlo reproduction, needs --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


########################################################################################################################
# strategies


@st.composite
def points(draw, scale=10.0):
    return draw(arrays(np.float64, 3, elements=st.floats(min_value=-scale, max_value=scale)))


@st.composite
def unit_vectors(draw):
    v = draw(points(scale=1.0))
    norm = float(np.linalg.norm(v))
    assume(norm > 0.1)
    return v / norm


@st.composite
def triangles(draw, min_leg=0.05):
    source, pos_a, pos_b = draw(points()), draw(points()), draw(points())
    assume(np.linalg.norm(pos_a - source) > min_leg)
    assume(np.linalg.norm(pos_b - source) > min_leg)
    return source, pos_a, pos_b


########################################################################################################################
# fixtures


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def exact_observation():
    """
    Factory for error-free observations of paths from random virtual sources around node A at the origin.

    Clock convention: tau_a = true + eps_a[o], tau_b = true + eps_a[o] + eps[o].
    """

    def _build(d_vec, k_per_observer, n_observers=1, eps_ns=0.0, eps_a_ns=None, seed=0, radius=(3.0, 10.0),
               per_observer_offsets=False):
        rng = np.random.default_rng(seed)
        d_vec = np.asarray(d_vec, dtype=float)
        eps = np.broadcast_to(np.asarray(eps_ns, dtype=float), (n_observers,))
        eps_a = np.zeros(n_observers) if eps_a_ns is None else np.asarray(eps_a_ns, dtype=float)

        observer, tau_a, tau_b, dir_a, dir_b = [], [], [], [], []
        for o in range(n_observers):
            dirs = random_unit_vectors(rng, k_per_observer)
            for e in dirs:
                m = mpc_pair_from_virtual_source(rng.uniform(*radius) * e, np.zeros(3), d_vec)
                observer.append(o)
                tau_a.append(m.tau_a_ns + eps_a[o])
                tau_b.append(m.tau_b_ns + eps_a[o] + eps[o])
                dir_a.append(m.dir_a)
                dir_b.append(m.dir_b)

        tau_a, tau_b = np.array(tau_a), np.array(tau_b)
        return Observation(
            observer=np.array(observer), delta_ns=tau_b - tau_a, tau_a_ns=tau_a, tau_b_ns=tau_b,
            dir_a=np.array(dir_a), dir_b=np.array(dir_b), per_observer_offsets=per_observer_offsets,
            n_observers=n_observers,
        )

    return _build
