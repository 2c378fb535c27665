import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from obstaclelab.grid import build_domain
from obstaclelab.oracles import (
    ComparisonXi,
    HarmonicObstacle2D,
    QuadraticObstacle1D,
    RadialSharpness,
    beta_of,
    verify_radial_is_solution,
    xi_coefficient,
    xi_value,
)


class TestRadial:
    def test_boundary_value(self):
        orc = RadialSharpness(1.0, 0.5, 2)
        assert orc.value(np.array([[1.0, 0.0]]))[0] == pytest.approx(0.353553, abs=1e-6)
        assert orc.boundary_value() == pytest.approx(0.5**1.5)

    def test_source_inside_contact(self):
        orc = RadialSharpness(1.0, 0.5, 2)
        assert orc.source(np.array([[0.1, 0.2], [0.0, 0.0]])) == pytest.approx([1.125, 1.125])

    @pytest.mark.parametrize("gamma", [0.0, 0.5, 1.0, 3.0])
    def test_c1_matching(self, gamma):
        orc = RadialSharpness(gamma, 0.4, 2)
        x = np.array([[0.4, 0.0], [0.0, -0.4]])
        assert np.all(orc.value(x) == 0)
        assert np.all(orc.gradient(x) == 0)

    def test_gradient_against_difference(self):
        orc = RadialSharpness(1.0, 0.5, 3)
        x = np.array([[0.4, 0.5, 0.3]])
        e = 1e-6
        fd = [(orc.value(x + e * d) - orc.value(x - e * d))[0] / (2 * e) for d in np.eye(3)]
        assert orc.gradient(x)[0] == pytest.approx(fd, rel=1e-6)

    def test_source_limit_one_dimension(self):
        # 1D drops the curvature term, and the source is constant
        orc = RadialSharpness(2.0, 0.5, 1)
        xs = np.array([[0.1], [0.6], [0.9]])
        expected = (4 / 3) ** 3 / 3
        assert orc.source(xs)[1:] == pytest.approx([expected, expected])

    @pytest.mark.parametrize("gamma,dim", [(1.0, 2), (2.0, 1)])
    def test_residual_off_collar(self, gamma, dim):
        orc = RadialSharpness(gamma, 0.5, dim)
        assert verify_radial_is_solution(orc, build_domain(dim, 1 / 128, 1.0)) <= 0.05

    def test_residual_halves(self):
        orc = RadialSharpness(1.0, 0.5, 2)
        coarse = verify_radial_is_solution(orc, build_domain(2, 1 / 32, 1.0), collar=0.125)
        fine = verify_radial_is_solution(orc, build_domain(2, 1 / 64, 1.0), collar=0.125)
        assert coarse / fine >= 1.5

    def test_collar_floor(self):
        with pytest.raises(ValueError):
            verify_radial_is_solution(RadialSharpness(1.0, 0.5, 2), build_domain(2, 1 / 32, 1.0), collar=1 / 64)

    def test_sharp_holder_ratio(self):
        orc = RadialSharpness(1.0, 0.5, 1)
        s = 2.0 ** -np.arange(4, 20)
        x = (0.5 + s)[:, None]
        a = orc.exponent
        bounded = orc.value(x) / s**a
        assert np.allclose(bounded, 1.0)
        blow = orc.value(x) / s ** (a + 0.05)
        assert np.all(np.diff(blow) > 0) and blow[-1] > 1.5 * blow[0]

    def test_smallness_scaling_of_source(self):
        # v(tau x) solves the equation with source tau^(gamma+2) f(tau x)
        g, tau = 1.0, 0.5
        orc = RadialSharpness(g, 0.25, 2)
        x = np.array([[0.8, 0.3]])
        scaled = RadialSharpness(g, 0.25 / tau, 2)
        ratio = orc.value(tau * x) / scaled.value(x)
        assert ratio[0] == pytest.approx(tau ** orc.exponent)
        # the rescaled source is tau^(g+2) f(tau x), equal to the source of tau^a v_scaled
        lhs = tau ** (g + 2) * orc.source(tau * x)
        rhs = (tau ** orc.exponent) ** (g + 1) * scaled.source(x)
        assert lhs[0] == pytest.approx(rhs[0])

    @pytest.mark.parametrize("args", [(-1.0, 0.5, 2), (1.0, 1.0, 2), (1.0, 0.5, 4)])
    def test_invalid(self, args):
        with pytest.raises(ValueError):
            RadialSharpness(*args)


class TestXi:
    def test_coefficient(self):
        c = ComparisonXi(m_inf=1.0, lambda_cap=1.0, dim=2, gamma=1.0)
        assert xi_coefficient(c) == pytest.approx(math.sqrt(8 / 36))
        assert xi_coefficient(c) == pytest.approx(0.471405, abs=1e-6)

    def test_vanishes_with_m(self):
        assert xi_coefficient(ComparisonXi(1e-12, 1.0, 2, 1.0)) < 1e-5

    @given(st.floats(0.01, 10), st.floats(0.01, 10), st.floats(0.5, 4), st.floats(0, 3))
    def test_monotone(self, m, dm, Lam, gamma):
        base = xi_coefficient(ComparisonXi(m, Lam, 2, gamma))
        assert xi_coefficient(ComparisonXi(m + dm, Lam, 2, gamma)) >= base
        assert xi_coefficient(ComparisonXi(m, Lam * 1.5, 2, gamma)) <= base

    def test_value(self):
        c = ComparisonXi(1.0, 1.0, 2, 1.0, base_value=0.2)
        x = np.array([[0.3, 0.4]])
        assert xi_value(c, x)[0] == pytest.approx(xi_coefficient(c) * 0.5**1.5 + 0.2)
        assert xi_value(c, x, x0=(0.3, 0.4))[0] == pytest.approx(0.2)

    def test_requires_positive_m(self):
        with pytest.raises(ValueError):
            ComparisonXi(0.0, 1.0, 2, 1.0)


class TestBeta:
    @pytest.mark.parametrize("g,a,b", [(0, 1, 1), (1, 1, 0.5), (2, 0.25, 0.25)])
    def test_examples(self, g, a, b):
        assert beta_of(g, a) == b

    @given(st.floats(0, 10), st.floats(0, 10), st.floats(0.01, 1))
    def test_monotone_in_gamma(self, g1, g2, a):
        lo, hi = sorted((g1, g2))
        assert beta_of(hi, a) <= beta_of(lo, a)

    @given(st.floats(0, 10), st.floats(0.01, 1))
    def test_equals_alpha_iff_small(self, g, a):
        assert (beta_of(g, a) == a) == (a <= 1 / (g + 1))

    def test_domain(self):
        with pytest.raises(ValueError):
            beta_of(-0.1, 1)
        with pytest.raises(ValueError):
            beta_of(1, 0)


class TestObstacleOracles:
    def test_quadratic_contact_width(self):
        # mismatch a: 5a^2 - 10a + 0.5 = 0
        orc = QuadraticObstacle1D(0.5, 4.0, 2.0, 1.0)
        assert orc.contact_half_width == pytest.approx(1 - math.sqrt(0.9), abs=1e-14)

    def test_quadratic_is_c1(self):
        orc = QuadraticObstacle1D(0.5, 4.0, 2.0, 1.0)
        a = orc.contact_half_width
        e = 1e-7
        left = (orc.value([a]) - orc.value([a - e]))[0] / e
        right = (orc.value([a + e]) - orc.value([a]))[0] / e
        assert left == pytest.approx(right, abs=1e-5)
        assert orc.value([1.0])[0] == pytest.approx(1.0)

    def test_harmonic_contact(self):
        orc = HarmonicObstacle2D(0.5, 4.0)
        a = orc.contact_radius
        x = np.array([[a, 0.0], [1.0, 0.0]])
        v = orc.value(x)
        assert v[0] == pytest.approx(0.5 - 4 * a * a)
        assert v[1] == pytest.approx(0.0, abs=1e-14)
