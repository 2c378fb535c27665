import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from obstaclelab.fixtures import radial_sharpness
from obstaclelab.grid import ProblemSpec, build_domain, sample
from obstaclelab.operators import degenerate_wrapper, gradients, hessians, pucci, random_symmetric
from obstaclelab.renormalization import (
    NormalizationMap,
    ScalingMap,
    apply_scaling,
    c1alpha_norm,
    dyadic_denominator,
    dyadic_sequence,
    flatness_measure,
    gradient_block_map,
    growth_bound_check,
    m_constant,
    scale_function,
)


def quad(x):
    return np.sum(x * x, axis=1)


class TestScalingMap:
    def test_identity(self, rng):
        fx = radial_sharpness(1.0, 0.5, 2)
        out = apply_scaling(ScalingMap(1.0, (0.0, 0.0)), fx.spec).spec
        x = rng.uniform(-0.7, 0.7, size=(20, 2))
        assert np.array_equal(out.source(x), fx.spec.source(x))
        assert np.array_equal(out.obstacle(x), fx.spec.obstacle(x))
        X = random_symmetric(rng, 20, 2)
        assert np.allclose(out.operator(x, X), fx.spec.operator(x, X))

    def test_source_factor(self):
        fx = radial_sharpness(1.0, 0.5, 2)
        m = ScalingMap(0.5, (0.25, 0.0))
        x = np.array([[0.3, 0.1]])
        scaled = apply_scaling(m, fx.spec).spec
        assert scaled.source(x)[0] == pytest.approx(0.5**3 * fx.spec.source(m.point(x))[0])

    def test_operator_rescaling(self, rng):
        op = pucci("+", 0.5, 2.0)
        X = random_symmetric(rng, 10, 2)
        x = rng.uniform(-1, 1, size=(10, 2))
        tau = 0.25
        assert np.allclose(op.scaled(tau, (0.1, 0.2))(x, X), tau**2 * op(x, X / tau**2))

    def test_discrete_equation_is_invariant(self):
        # the wrapped operator of v(c + tau x) on the fine grid is tau^(g+2) times
        # the wrapped operator of v on the coarse grid at the image nodes
        g, tau = 1.0, 0.5
        fx = radial_sharpness(g, 0.25, 2)
        coarse = build_domain(2, 1 / 64, 1.0)
        fine = build_domain(2, 1 / 32, 1.0)
        m = ScalingMap(tau, (0.0, 0.0))
        sp = apply_scaling(m, fx.spec, sample(fx.exact, coarse), fine)
        n = fine.n_interior
        lhs = degenerate_wrapper(sp.spec.operator, fine.coords[:n], gradients(sp.field)[:n],
                                 hessians(sp.field)[:n], g)
        img = np.array([coarse.node_at(p) for p in m.point(fine.coords[:n])])
        u = sample(fx.exact, coarse)
        rhs = degenerate_wrapper(fx.spec.operator, coarse.coords[img], gradients(u)[img], hessians(u)[img], g)
        assert np.allclose(lhs, tau ** (g + 2) * rhs, atol=1e-12)
        assert np.allclose(sp.spec.source(fine.coords[:n]), tau ** (g + 2) * fx.spec.source(coarse.coords[img]))

    def test_field_transport(self):
        fx = radial_sharpness(1.0, 0.5, 2)
        coarse = build_domain(2, 1 / 64, 1.0)
        fine = build_domain(2, 1 / 16, 1.0)
        m = ScalingMap(0.25, (0.5, 0.25))
        sp = apply_scaling(m, fx.spec, sample(fx.exact, coarse), fine)
        assert np.allclose(sp.field.values, fx.exact(m.point(fine.coords)), atol=1e-15)

    def test_incommensurate_rejected(self):
        fx = radial_sharpness(1.0, 0.5, 2)
        coarse = build_domain(2, 1 / 64, 1.0)
        with pytest.raises(ValueError, match="integer"):
            apply_scaling(ScalingMap(0.3, (0.0, 0.0)), fx.spec, sample(fx.exact, coarse),
                          build_domain(2, 1 / 16, 1.0))

    def test_leaving_ball_rejected(self):
        fx = radial_sharpness(1.0, 0.5, 2)
        coarse = build_domain(2, 1 / 64, 1.0)
        with pytest.raises(ValueError, match="leaves"):
            apply_scaling(ScalingMap(0.5, (0.75, 0.0)), fx.spec, sample(fx.exact, coarse),
                          build_domain(2, 1 / 32, 1.0))

    @settings(max_examples=40)
    @given(st.floats(0.05, 1), st.floats(0.05, 1), st.floats(-0.3, 0.3), st.floats(-0.3, 0.3))
    def test_composition(self, t1, t2, c1, c2):
        inner = ScalingMap(t1, (c1, 0.0))
        outer = ScalingMap(t2, (c2, 0.1))
        both = outer.compose(inner)
        x = np.array([[0.2, -0.4], [0.0, 0.0]])
        assert np.allclose(both.point(x), inner.point(outer.point(x)))
        assert both.tau == pytest.approx(t1 * t2)

    @pytest.mark.parametrize("kw", [{"tau": 0.0}, {"tau": 1.5}, {"tau": 0.5, "kind": "zoom"},
                                    {"tau": 0.5, "norm": 0.0}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            ScalingMap(**kw)

    def test_compose_needs_smallness(self):
        a = ScalingMap(0.5, (0.0,), "dyadic")
        with pytest.raises(ValueError):
            a.compose(ScalingMap(0.5, (0.0,)))


class TestDyadic:
    def test_m_constant(self):
        assert m_constant(0.5, 1.0) == pytest.approx(8.0)

    def test_denominator(self):
        assert dyadic_denominator(0, 0.5, 0.5, 3.0) == 1.0
        expected = 0.5**3 + 1.0 * (0.5**2 + 0.5**2.5)
        assert dyadic_denominator(2, 0.5, 0.5, 1.0) == pytest.approx(expected)

    def test_pure_quadratic_is_self_similar(self):
        dom = build_domain(2, 1 / 128, 1.0)
        steps = dyadic_sequence(sample(quad, dom), 0.5, 1.0, 4)
        assert [s.sup_norm for s in steps] == pytest.approx([1.0] * 5)
        assert np.all(np.linalg.norm(steps[-1].coords, axis=1) <= 1 + 1e-12)

    def test_affine_closed_form(self):
        dom = build_domain(2, 1 / 64, 1.0)
        rho, beta, a = 0.5, 0.5, 0.3
        steps = dyadic_sequence(sample(lambda x: a * x[:, 0], dom), rho, beta, 4)
        for s in steps:
            k = s.k
            expected = a * rho**k / (rho ** (k * (1 + beta)) + a * sum(rho ** (k + j * beta) for j in range(k)))
            assert s.sup_norm == pytest.approx(expected, rel=1e-12)
            assert s.sup_norm <= 1.0

    def test_radial_flat_regime(self, radial_oracle_fields):
        _, dom, u, _ = radial_oracle_fields
        steps = dyadic_sequence(u, 0.5, 0.5, 4, center=(0.5, 0.0))
        assert max(s.sup_norm for s in steps) <= 1.0 + 1e-12

    def test_too_deep(self):
        dom = build_domain(2, 1 / 32, 1.0)
        with pytest.raises(ValueError, match="too deep"):
            dyadic_sequence(dom.zeros(), 0.5, 1.0, 5)
        with pytest.raises(ValueError):
            dyadic_sequence(dom.zeros(), 0.75, 1.0, 1)

    def test_growth_bound(self, radial_oracle_fields):
        _, dom, u, _ = radial_oracle_fields
        pairs = growth_bound_check(u, 0.5, 0.5, [1 / 4, 1 / 8, 1 / 16], center=(0.5, 0.0))
        assert all(lhs <= rhs for lhs, rhs in pairs)

    def test_gradient_block_unit_slope(self):
        u = lambda x: 0.3 * x[:, 0] + quad(x)
        m = gradient_block_map(0.3, 0.5, (0.0, 0.0))
        assert m.tau == pytest.approx(0.09)
        v = scale_function(m, u, role="solution")
        e = 1e-7
        slope = (v(np.array([[e, 0.0]])) - v(np.array([[-e, 0.0]])))[0] / (2 * e)
        assert slope == pytest.approx(1.0, rel=1e-6)
        assert v(np.zeros((1, 2)))[0] == 0.0

    def test_gradient_block_needs_gradient(self):
        with pytest.raises(ValueError):
            gradient_block_map(0.0, 0.5, (0.0,))


class TestFlatness:
    def test_identical(self):
        dom = build_domain(2, 1 / 32, 1.0)
        phi = sample(quad, dom)
        fm = flatness_measure(phi, phi)
        assert fm.sup_gap == 0 and fm.sup_grad_gap == 0 and fm.flat

    def test_constant_lift(self):
        dom = build_domain(2, 1 / 32, 1.0)
        phi = sample(quad, dom)
        fm = flatness_measure(phi + 0.2, phi)
        assert fm.sup_gap == pytest.approx(0.2)
        assert fm.sup_grad_gap == pytest.approx(0.0, abs=1e-12)
        assert not fm.flat

    def test_tilt(self):
        dom = build_domain(2, 1 / 32, 1.0)
        phi = dom.zeros()
        fm = flatness_measure(sample(lambda x: 0.05 * x[:, 1], dom), phi)
        assert fm.sup_grad_gap == pytest.approx(0.05)
        assert fm.flat


    def test_small_source_solution_is_flat(self):
        from obstaclelab.solver import SolverConfig, solve

        dom = build_domain(2, 1 / 16, 1.0)
        spec = ProblemSpec(0.0, pucci("-", 0.5, 1.0), lambda x: -0.02 * quad(x),
                           lambda x: np.full(len(x), 1e-3), lambda x: -0.02 * quad(x) + 0.01)
        rep = solve(spec, dom, SolverConfig())
        assert rep.converged
        assert flatness_measure(rep.solution, sample(spec.obstacle, dom)).flat


class TestNormalisation:
    def test_c1alpha_affine(self):
        dom = build_domain(2, 1 / 16, 1.0)
        w = sample(lambda x: 0.3 * x[:, 0] - 0.4 * x[:, 1], dom)
        # the Taylor quotient vanishes, leaving sup |w| + |Dw|
        assert c1alpha_norm(w, 0.5) == pytest.approx(w.sup_norm() + 0.5, abs=1e-12)

    def test_c1alpha_constant(self):
        dom = build_domain(1, 1 / 16, 1.0)
        assert c1alpha_norm(dom.zeros() - 0.7, 1.0) == pytest.approx(0.7)

    def test_c1alpha_invalid(self):
        with pytest.raises(ValueError):
            c1alpha_norm(build_domain(1, 1 / 8, 1.0).zeros(), 0.0)

    def test_targets(self):
        g = 1.0
        dom = build_domain(2, 1 / 32, 1.0)
        phi = lambda x: 0.8 - quad(x)
        spec = ProblemSpec(g, pucci("-", 0.5, 1.0), phi, lambda x: np.full(len(x), 3.0), lambda x: phi(x) + 0.1,
                           alpha=1.0)
        u = sample(lambda x: phi(x) + 0.1, dom)
        nm = NormalizationMap.from_problem(spec, u, delta0=0.01)
        new, u_hat = nm.apply(spec, u)
        assert u_hat.sup_norm() <= 1.0
        assert new.source_field(dom).sup_norm() <= 0.01
        assert c1alpha_norm(new.obstacle_field(dom), 1.0) <= 0.5

    def test_operator_conjugation(self, rng):
        spec = radial_sharpness(1.0, 0.5, 2).spec
        nm = NormalizationMap(4.0, 0.1)
        new, _ = nm.apply(spec)
        x = rng.uniform(-0.5, 0.5, (6, 2))
        X = random_symmetric(rng, 6, 2)
        assert np.allclose(new.operator(x, X), spec.operator(x, 4.0 * X) / 4.0)
        assert new.source(x) == pytest.approx(spec.source(x) / 16.0)

    def test_invalid(self):
        with pytest.raises(ValueError):
            NormalizationMap(0.0, 0.1)
