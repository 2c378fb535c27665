import numpy as np
import pytest

from obstaclelab.fixtures import obstacle_1d_quadratic, radial_sharpness
from obstaclelab.grid import build_domain, sample
from obstaclelab.solver import SolverConfig, solve


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def radial_2d_coarse():
    """Penalised solve of the radial family (gamma = 1) at h = 1/32."""
    fx = radial_sharpness(1.0, 0.5, 2)
    dom = build_domain(2, 1 / 32, 1.0)
    rep = solve(fx.spec, dom, SolverConfig())
    return fx, dom, rep


@pytest.fixture(scope="session")
def obstacle_1d_pair():
    """Projected solve of the 1D parabola problem at h = 1/64."""
    fx = obstacle_1d_quadratic()
    dom = build_domain(1, 1 / 64, 1.0, closed=False)
    # the parabola is not a subsolution of the wrapped operator, so only the
    # projection backend reproduces the variational solution here
    proj = solve(fx.spec, dom, SolverConfig(backend="projection", tol_inner=1e-9))
    return fx, dom, proj


@pytest.fixture(scope="session")
def radial_oracle_fields():
    """Exact radial fields (gamma = 1, 2D, h = 1/256) with the zero obstacle."""
    fx = radial_sharpness(1.0, 0.5, 2)
    dom = build_domain(2, 1 / 256, 1.0)
    return fx, dom, sample(fx.exact, dom), sample(fx.spec.obstacle, dom)
