import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from obstaclelab import operators as ops
from obstaclelab.grid import build_domain, sample
from obstaclelab.oracles import RadialSharpness


def _sym(n):
    return arrays(np.float64, (n, n), elements=st.floats(-5, 5)).map(lambda A: 0.5 * (A + A.T))


# ---------------------------------------------------------------- differences

class TestDifferences:
    def test_affine_gradient_exact(self):
        dom = build_domain(2, 1 / 8, 1.0)
        u = sample(lambda x: 0.3 - 1.5 * x[:, 0] + 2.0 * x[:, 1], dom)
        g = ops.gradients(u)
        assert np.allclose(g, [-1.5, 2.0], atol=1e-12)

    def test_quadratic_gradient_1d(self):
        dom = build_domain(1, 0.25, 1.0)
        u = sample(lambda x: x[:, 0] ** 2, dom)
        assert ops.discrete_gradient(u, (0.5,))[0] == pytest.approx(1.0, abs=1e-14)

    def test_power_gradient_1d(self):
        dom = build_domain(1, 0.25, 1.0)
        u = sample(lambda x: np.abs(x[:, 0]) ** 1.5, dom)
        expected = (0.75**1.5 - 0.25**1.5) / 0.5
        assert ops.discrete_gradient(u, (0.5,))[0] == pytest.approx(expected, abs=1e-14)
        assert expected == pytest.approx(1.049038, abs=1e-6)

    def test_power_hessian_1d(self):
        dom = build_domain(1, 0.25, 1.0)
        u = sample(lambda x: np.abs(x[:, 0]) ** 1.5, dom)
        expected = (0.75**1.5 - 2 * 0.5**1.5 + 0.25**1.5) / 0.0625
        assert ops.discrete_hessian(u, (0.5,)).hess[0, 0] == pytest.approx(expected, abs=1e-13)
        # three-point arithmetic: (0.649519 - 0.707107 + 0.125) / 0.0625
        assert expected == pytest.approx(1.078596, abs=1e-6)

    @pytest.mark.parametrize("dim", [2, 3])
    def test_quadratic_hessian_exact(self, dim, rng):
        A = ops.random_symmetric(rng, 1, dim)[0]
        dom = build_domain(dim, 1 / 4, 1.0)
        u = sample(lambda x: 0.5 * np.einsum("ni,ij,nj->n", x, A, x), dom)
        H = ops.hessians(u)
        assert np.allclose(H, A, atol=1e-12)
        assert np.array_equal(H, np.swapaxes(H, 1, 2))

    def test_mixed_product(self):
        dom = build_domain(2, 1 / 8, 1.0)
        s = ops.discrete_hessian(sample(lambda x: x[:, 0] * x[:, 1], dom), (0.25, -0.125))
        assert s.hess == pytest.approx(np.array([[0.0, 1.0], [1.0, 0.0]]), abs=1e-12)
        assert s.eigenvalues == pytest.approx([-1.0, 1.0], abs=1e-12)

    def test_ring_node_rejected(self):
        dom = build_domain(1, 0.25, 1.0)
        u = dom.zeros()
        with pytest.raises(ValueError):
            ops.discrete_gradient(u, dom.n_interior)

    @settings(max_examples=50, deadline=None)
    @given(st.one_of(_sym(2), _sym(3)))
    def test_eigenvalues_solve_characteristic_polynomial(self, X):
        e = ops.sym_eigenvalues(X)
        assert np.all(np.diff(e) >= -1e-12)
        ref = np.linalg.eigvalsh(X)
        assert np.allclose(e, ref, atol=1e-9 * (1 + np.abs(ref).max()))


# ---------------------------------------------------------------- Pucci

class TestPucci:
    def test_identities(self):
        assert ops.pucci_minus(np.eye(2), 1, 2) == 2.0
        assert ops.pucci_plus(np.diag([1.0, -1.0]), 1, 2) == 1.0
        assert ops.pucci_minus(np.zeros((2, 2)), 1, 2) == 0.0

    @settings(max_examples=50, deadline=None)
    @given(_sym(3), st.floats(0.1, 1), st.floats(1, 4))
    def test_duality(self, X, lam, Lam):
        assert ops.pucci_minus(X, lam, Lam) == pytest.approx(-ops.pucci_plus(-X, lam, Lam), abs=1e-12)

    def test_bellman_between_pucci(self, rng):
        table = [np.diag([1.0, 2.0]), np.array([[1.5, 0.3], [0.3, 1.2]])]
        op = ops.bellman(table)
        X = ops.random_symmetric(rng, 200, 2)
        F = ops.evaluate(op, None, X)
        assert np.all(ops.pucci_minus(X, op.lam, op.Lam) <= F + 1e-12)
        assert np.all(F <= ops.pucci_plus(X, op.lam, op.Lam) + 1e-12)


# ---------------------------------------------------------------- operator kinds

def _kinds():
    return {
        "trace": ops.trace_operator(),
        "pucci_minus": ops.pucci("-", 0.5, 2.0),
        "pucci_plus": ops.pucci("+", 0.5, 2.0),
        "bellman": ops.bellman([np.diag([1.0, 2.0]), np.diag([2.0, 1.0])]),
        "isaacs": ops.isaacs([[np.eye(2), 0.95 * np.eye(2)], [np.diag([1.0, 0.96])]], 0.95, 1.0),
        "p_laplacian": ops.p_laplacian(3.0),
        "special_lagrangian": ops.special_lagrangian([1.0, 2.0]),
    }


class TestEvaluate:
    def test_trace(self):
        assert ops.evaluate(ops.trace_operator(), None, np.diag([1.0, 2.0, 3.0])) == 6.0

    def test_p_laplacian(self):
        op = ops.p_laplacian(3.0)
        assert ops.evaluate(op, None, np.eye(2), grad=[1.0, 0.0]) == pytest.approx(3.0)
        assert (op.lam, op.Lam) == (1.0, 2.0)

    @pytest.mark.parametrize("p,pair", [(1.5, (0.5, 1.0)), (5.0, (1.0, 4.0))])
    def test_p_laplacian_pairs(self, p, pair):
        op = ops.p_laplacian(p)
        assert (op.lam, op.Lam) == pair

    def test_p_laplacian_needs_direction(self):
        with pytest.raises(ValueError):
            ops.evaluate(ops.p_laplacian(3.0), None, np.eye(2))

    def test_m_momentum_at_zero(self):
        op = ops.m_momentum(3, (1.0, 1.0))
        assert ops.evaluate(op, None, np.zeros((2, 2))) == pytest.approx(0.0, abs=1e-15)

    def test_m_momentum_declares_no_pair(self):
        op = ops.m_momentum(3, (1.0, 1.0))
        assert op.lam is None
        with pytest.raises(ValueError):
            ops.sandwich_gaps(op, None, np.eye(2), np.zeros((2, 2)))

    def test_m_momentum_flat_at_zero_eigenvalue(self):
        # (1 + e^3)^(1/3) - 1 ~ e^3 / 3, so no positive lower ellipticity constant exists
        op = ops.m_momentum(3, (1.0,))
        e = 1e-3
        rise = ops.evaluate(op, None, np.array([[e]])) - ops.evaluate(op, None, np.array([[0.0]]))
        assert 0 < rise / e < 1e-6

    def test_isaacs_aperture_gate(self):
        with pytest.raises(ValueError, match="aperture"):
            ops.isaacs([[np.eye(2)]], 0.5, 1.0)

    @pytest.mark.parametrize("name", list(_kinds()))
    def test_zero_at_zero(self, name):
        op = _kinds()[name]
        assert ops.evaluate(op, None, np.zeros((2, 2)), grad=[0.6, 0.8]) == pytest.approx(0.0, abs=1e-15)

    @pytest.mark.parametrize("name", list(_kinds()))
    def test_sandwich(self, name, rng):
        op = _kinds()[name]
        X = ops.random_symmetric(rng, 100, 2)
        Y = ops.random_symmetric(rng, 100, 2)
        lo, hi = ops.sandwich_gaps(op, None, X, Y, grad=[0.6, 0.8])
        assert lo.min() >= -1e-10 and hi.min() >= -1e-10

    @pytest.mark.parametrize("name", list(_kinds()))
    def test_degenerate_ellipticity(self, name, rng):
        op = _kinds()[name]
        X = ops.random_symmetric(rng, 100, 2)
        B = rng.normal(size=(100, 2, 2))
        P = np.einsum("nij,nkj->nik", B, B)
        g = [0.6, 0.8]
        assert np.all(ops.evaluate(op, None, X + P, g) >= ops.evaluate(op, None, X, g) - 1e-12)

    def test_coefficient_oscillation(self, rng):
        A = lambda x: np.einsum("n,ij->nij", 1.0 + 0.5 * x[:, 0], np.eye(2))
        op = ops.bellman([A], lam=0.5, Lam=1.5, coeff_modulus=(1.0, lambda t: t))
        X = ops.random_symmetric(rng, 100, 2)
        osc = ops.coefficient_oscillation(op, [0.1, 0.0], [0.3, 0.0], X)
        # |0.5 * 0.2 * Tr X| <= 0.1 * 2 ||X||
        assert 0 < osc <= 2 * 0.1 + 1e-12

    def test_bellman_needs_pair_for_callables(self):
        with pytest.raises(ValueError):
            ops.bellman([lambda x: np.eye(2)])


# ---------------------------------------------------------------- wrapper

class TestWrapper:
    def test_gamma_zero(self):
        X = np.diag([1.0, -3.0])
        assert ops.degenerate_wrapper(ops.trace_operator(), None, [5.0, 1.0], X, 0.0) == -2.0

    def test_zero_gradient(self):
        X = np.diag([1.0, 4.0])
        assert ops.degenerate_wrapper(ops.trace_operator(), None, [0.0, 0.0], X, 1.0) == 0.0

    def test_floor(self):
        X = np.diag([1.0, 1.0])
        val = ops.degenerate_wrapper(ops.trace_operator(), None, [0.0, 0.0], X, 2.0, grad_floor=0.5)
        assert val == pytest.approx(0.25 * 2.0)

    def test_radial_source_at_three_quarters(self):
        orc = RadialSharpness(1.0, 0.5, 2)
        rho = 0.75
        vp = 1.5 * (rho - 0.5) ** 0.5
        vpp = 0.75 * (rho - 0.5) ** -0.5
        X = np.diag([vpp, vp / rho])
        val = ops.degenerate_wrapper(ops.trace_operator(), [rho, 0.0], [vp, 0.0], X, 1.0)
        assert val == pytest.approx(1.875, abs=1e-12)
        assert orc.source(np.array([[rho, 0.0]]))[0] == pytest.approx(1.875, abs=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(_sym(2), st.floats(0.1, 3), st.floats(0, 3),
           st.sampled_from(["trace", "pucci_minus", "pucci_plus"]))
    def test_homogeneity(self, X, s, gamma, name):
        op = _kinds()[name]
        g = np.array([0.3, -0.4])
        lhs = ops.degenerate_wrapper(op, None, s * g, s * X, gamma)
        rhs = s ** (gamma + 1) * ops.degenerate_wrapper(op, None, g, X, gamma)
        assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-12)

    def test_negative_gamma_rejected(self):
        with pytest.raises(ValueError):
            ops.degenerate_wrapper(ops.trace_operator(), None, [1.0], np.eye(1), -1.0)


# ---------------------------------------------------------------- recession

class TestRecession:
    def test_m_momentum_to_trace(self, rng):
        op = ops.m_momentum(3, (1.0, 1.0))
        for X in ops.random_symmetric(rng, 5, 2):
            assert ops.recession_limit(op, X) == pytest.approx(np.trace(X), abs=1e-6)
            assert ops.recession_closed_form(op, X) == pytest.approx(np.trace(X), abs=1e-12)

    def test_special_lagrangian(self):
        op = ops.special_lagrangian([1.0, 1.0])
        assert ops.recession_limit(op, np.eye(2)) == pytest.approx(2.0, abs=1e-6)

    def test_single_tau(self):
        op = ops.trace_operator()
        assert ops.recession(op, 1e-3, np.diag([1.0, 2.0])) == pytest.approx(3.0)

    def test_recession_operator_is_elliptic(self, rng):
        op = ops.recession_of(ops.pucci("-", 0.5, 1.0))
        X = ops.random_symmetric(rng, 20, 2)
        Y = ops.random_symmetric(rng, 20, 2)
        lo, hi = ops.sandwich_gaps(op, None, X, Y)
        assert lo.min() >= -1e-8 and hi.min() >= -1e-8

    def test_bad_tau(self):
        with pytest.raises(ValueError):
            ops.recession(ops.trace_operator(), 0.0, np.eye(2))
