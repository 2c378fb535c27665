"""Scaling maps, dyadic iteration quantities and normalisation of problem data."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .grid import GridDomain, GridField, ProblemSpec
from .operators import gradients

SCALING_KINDS = ("smallness", "dyadic", "gradient_block")


@dataclass(frozen=True)
class ScalingMap:
    """A blow-up ``x -> center + tau x`` of one of three kinds.

    ``smallness`` keeps values (``u(center + tau x)``) and rescales operator
    and source; ``dyadic`` and ``gradient_block`` subtract ``u(center)`` and
    divide by ``norm`` (see :func:`dyadic_denominator` and
    :func:`gradient_block_map`).
    """

    tau: float
    center: tuple = (0.0,)
    kind: str = "smallness"
    norm: float = 1.0

    def __post_init__(self):
        if not 0 < self.tau <= 1 and self.kind == "smallness":
            raise ValueError("tau must lie in (0, 1]")
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.kind not in SCALING_KINDS:
            raise ValueError(f"unknown scaling kind {self.kind!r}")
        if self.norm <= 0:
            raise ValueError("norm must be positive")

    def point(self, x: np.ndarray) -> np.ndarray:
        c = np.asarray(self.center, dtype=float)
        return c + self.tau * np.asarray(x, dtype=float)

    def compose(self, inner: "ScalingMap") -> "ScalingMap":
        """``self`` applied to data already rescaled by ``inner``; smallness kind only."""
        if self.kind != "smallness" or inner.kind != "smallness":
            raise ValueError("composition is defined for smallness maps")
        c = inner.point(np.asarray(self.center, dtype=float))
        return ScalingMap(self.tau * inner.tau, tuple(np.atleast_1d(c).tolist()), "smallness")


@dataclass(frozen=True)
class ScaledProblem:
    spec: ProblemSpec
    field: Optional[GridField]


def scale_function(m: ScalingMap, fn: Callable, gamma: float = 0.0, role: str = "value") -> Callable:
    """Rescale a vectorised function.

    ``role`` is ``"value"`` (``u`` or ``phi``), ``"source"`` (multiplied by
    ``tau^(gamma+2)`` for the smallness kind) or ``"solution"`` (for dyadic
    and gradient-block maps: ``(u(c + tau x) - u(c)) / norm``).
    """
    c = np.asarray(m.center, dtype=float)
    if role == "source":
        if m.kind == "smallness":
            factor = m.tau ** (gamma + 2.0)
        else:
            # |Dv|^g F~(D^2 v) with v = (u(c+tau x) - u(c)) / N picks up tau^(g+2) / N^(g+1)
            factor = m.tau ** (gamma + 2.0) / m.norm ** (gamma + 1.0)
        return lambda x: factor * np.asarray(fn(m.point(x)), dtype=float)
    if role == "value" and m.kind == "smallness":
        return lambda x: np.asarray(fn(m.point(x)), dtype=float)
    base = float(np.asarray(fn(c.reshape(1, -1)), dtype=float).reshape(-1)[0])
    return lambda x: (np.asarray(fn(m.point(x)), dtype=float) - base) / m.norm


def _commensurate_nodes(m: ScalingMap, source: GridDomain, target: GridDomain) -> np.ndarray:
    """Source-node numbers of ``center + tau x`` for every target node."""
    pts = m.point(target.coords)
    ratio = m.tau * target.spacing / source.spacing
    if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
        raise ValueError(
            f"tau * h_target / h_source = {ratio:.6g} is not a positive integer; interpolation would be needed"
        )
    idx = np.rint(pts / source.spacing).astype(np.int64)
    if not np.allclose(idx * source.spacing, pts, atol=1e-9 * source.spacing):
        raise ValueError("scaling centre is not a lattice point of the source grid")
    j = idx + source.half_width
    if np.any(j < 0) or np.any(j >= source.lookup.shape[0]):
        raise ValueError("scaled grid leaves the source lattice")
    nodes = source.lookup[tuple(j.T)]
    if np.any(nodes < 0):
        raise ValueError("scaled grid leaves the stored source nodes")
    return nodes


def apply_scaling(m: ScalingMap, spec: ProblemSpec, u: Optional[GridField] = None,
                  fine_domain: Optional[GridDomain] = None) -> ScaledProblem:
    """Transform the problem data (and optionally a grid solution) by ``m``.

    For the smallness kind the operator becomes ``tau^2 F(c + tau x, X / tau^2)``,
    the source ``tau^(gamma+2) f(c + tau x)`` and the obstacle ``phi(c + tau x)``.
    Grid fields are transported by exact node lookup, so ``tau h_fine`` must be
    an integer multiple of the source spacing.
    """
    c = np.asarray(m.center, dtype=float)
    g = spec.gamma
    if m.kind == "smallness":
        op = spec.operator.scaled(m.tau, c)
        obstacle = scale_function(m, spec.obstacle)
        boundary = scale_function(m, spec.boundary)
    else:
        # v = (u(c + tau x) - u(c)) / N solves the equation for tau^2/N F(c + tau x, N X / tau^2)
        op = spec.operator.scaled(m.tau, c).normalized(m.norm)
        obstacle = scale_function(m, spec.obstacle, role="solution")
        boundary = scale_function(m, spec.boundary, role="solution")
    source = scale_function(m, spec.source, g, role="source")
    radius = fine_domain.radius if fine_domain is not None else spec.radius
    new_spec = ProblemSpec(g, op, obstacle, source, boundary, spec.alpha, radius)
    if u is None:
        return ScaledProblem(new_spec, None)
    if fine_domain is None:
        raise ValueError("a target domain is needed to transport a grid field")
    if m.tau * fine_domain.radius + float(np.linalg.norm(c)) > u.domain.radius * (1 + 1e-12):
        raise ValueError("scaled ball leaves the source ball")
    nodes = _commensurate_nodes(m, u.domain, fine_domain)
    vals = u.values[nodes]
    if m.kind != "smallness":
        vals = (vals - u.values[u.domain.node_at(c)]) / m.norm
    return ScaledProblem(new_spec, GridField(fine_domain, vals))


# ---------------------------------------------------------------- dyadic iteration

def dyadic_denominator(k: int, rho: float, beta: float, grad_norm: float) -> float:
    """``rho^(k(1+beta)) + |Du(0)| sum_{j<k} rho^(k + j beta)``."""
    tail = sum(rho ** (k + j * beta) for j in range(k))
    return rho ** (k * (1.0 + beta)) + grad_norm * tail


def m_constant(rho: float, beta: float) -> float:
    """``1 / (rho^(1+beta) (1 - rho^beta))``."""
    return 1.0 / (rho ** (1.0 + beta) * (1.0 - rho**beta))


@dataclass(frozen=True)
class DyadicStep:
    k: int
    radius: float
    denominator: float
    sup_norm: float
    coords: np.ndarray
    values: np.ndarray


def dyadic_sequence(u: GridField, rho: float, beta: float, k_max: int, grad0=None,
                    center=None) -> list[DyadicStep]:
    """``v_k(x) = (u(c + rho^k x) - u(c)) / denominator_k`` on all grid nodes of ``B_{rho^k}(c)``.

    ``coords`` of each step are the blown-up positions ``(x - c) / rho^k``; the
    expectation in the flat regime is ``sup_norm <= 1``.
    """
    if not 0 < rho <= 0.5:
        raise ValueError("rho must lie in (0, 1/2]")
    dom = u.domain
    c = np.zeros(dom.dim) if center is None else np.asarray(center, dtype=float)
    k0 = dom.node_at(c)
    if (rho**k_max) * (dom.radius - np.linalg.norm(c)) < 4 * dom.spacing * (1 - 1e-12):
        raise ValueError(f"k_max = {k_max} is too deep for spacing {dom.spacing}")
    g = gradients(u, [k0])[0] if grad0 is None else np.asarray(grad0, dtype=float)
    gnorm = float(np.linalg.norm(g))
    out = []
    for k in range(k_max + 1):
        r = rho**k
        nodes = dom.nodes_in_ball(c, r)
        den = dyadic_denominator(k, rho, beta, gnorm)
        vals = (u.values[nodes] - u.values[k0]) / den
        out.append(DyadicStep(k, r, den, float(np.max(np.abs(vals))), (dom.coords[nodes] - c) / r, vals))
    return out


def growth_bound_check(u: GridField, rho: float, beta: float, radii, center=None, grad0=None):
    """Pairs ``(sup_{B_r} |u - u(c)|, M r^(1+beta) (1 + |Du(c)| r^-beta))`` per radius."""
    dom = u.domain
    c = np.zeros(dom.dim) if center is None else np.asarray(center, dtype=float)
    k0 = dom.node_at(c)
    g = gradients(u, [k0])[0] if grad0 is None else np.asarray(grad0, dtype=float)
    gnorm = float(np.linalg.norm(g))
    M = m_constant(rho, beta)
    out = []
    for r in radii:
        nodes = dom.nodes_in_ball(c, r)
        lhs = float(np.max(np.abs(u.values[nodes] - u.values[k0])))
        out.append((lhs, M * r ** (1.0 + beta) * (1.0 + gnorm * r ** (-beta))))
    return out


def gradient_block_map(grad_norm: float, beta: float, center) -> ScalingMap:
    """``r0 = |Du(c)|^(1/beta)`` and ``u_{r0} = (u(c + r0 x) - u(c)) / r0^(1+beta)``."""
    if grad_norm <= 0:
        raise ValueError("the gradient-block scaling needs Du(c) != 0")
    r0 = grad_norm ** (1.0 / beta)
    return ScalingMap(r0, tuple(np.atleast_1d(np.asarray(center, dtype=float)).tolist()),
                      "gradient_block", norm=r0 ** (1.0 + beta))


# ---------------------------------------------------------------- flatness

@dataclass(frozen=True)
class FlatnessMeasurement:
    sup_gap: float
    sup_grad_gap: float
    iota: float = 0.1

    @property
    def flat(self) -> bool:
        return max(self.sup_gap, self.sup_grad_gap) <= self.iota


def flatness_measure(u: GridField, phi: GridField, iota: float = 0.1, radius: float = 0.5) -> FlatnessMeasurement:
    """``sup |u - phi|`` and ``sup |D(u - phi)|`` over nodes with ``|x| <= radius``."""
    if u.domain is not phi.domain:
        raise ValueError("u and phi live on different domains")
    dom = u.domain
    nodes = dom.nodes_in_ball(np.zeros(dom.dim), radius)
    w = u - phi
    gap = float(np.max(np.abs(w.values[nodes])))
    dgap = float(np.max(np.linalg.norm(gradients(w, nodes), axis=1)))
    return FlatnessMeasurement(gap, dgap, iota)


# ---------------------------------------------------------------- normalisation

def c1alpha_norm(w: GridField, alpha: float, max_nodes: int = 4000) -> float:
    """Discrete ``||w||_inf + ||Dw||_inf + sup |w(x) - w(y) - Dw(y).(x - y)| / |x - y|^(1+alpha)``.

    Taken over interior nodes; grids with more than ``max_nodes`` interior
    nodes are subsampled with a fixed stride for the pair term.
    """
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    dom = w.domain
    vals = w.interior_values
    Dw = gradients(w)
    step = max(1, dom.n_interior // max_nodes)
    sel = np.arange(0, dom.n_interior, step)
    x = dom.coords[sel]
    v = vals[sel]
    D = Dw[sel]
    worst = 0.0
    for start in range(0, len(sel), 512):
        y = x[start:start + 512]
        diff = x[None, :, :] - y[:, None, :]
        dist = np.sqrt(np.sum(diff * diff, axis=2))
        taylor = v[None, :] - v[start:start + 512, None] - np.einsum("yxn,yn->yx", diff, D[start:start + 512])
        with np.errstate(divide="ignore", invalid="ignore"):
            q = np.where(dist > 0, np.abs(taylor) / dist ** (1.0 + alpha), 0.0)
        worst = max(worst, float(q.max()))
    return float(np.max(np.abs(vals)) + np.max(np.linalg.norm(Dw, axis=1)) + worst)


@dataclass(frozen=True)
class NormalizationMap:
    """Rescale ``u -> u / kappa`` so that ``||u|| <= 1``, ``||phi||_{C^{1,a}} <= 1/2``, ``||f|| <= delta0``."""

    kappa: float
    delta0: float
    gamma: float = 0.0

    def __post_init__(self):
        if self.kappa <= 0 or self.delta0 <= 0:
            raise ValueError("kappa and delta0 must be positive")

    @classmethod
    def from_problem(cls, spec: ProblemSpec, u: GridField, delta0: float,
                     phi_norm: Optional[float] = None) -> "NormalizationMap":
        dom = u.domain
        g = spec.gamma
        if phi_norm is None:
            phi_norm = c1alpha_norm(spec.obstacle_field(dom), spec.alpha)
        f_sup = spec.source_field(dom).sup_norm()
        kappa = u.sup_norm() + (2.0 ** (g + 1.0) * phi_norm ** (g + 1.0) + f_sup / delta0) ** (1.0 / (g + 1.0))
        return cls(kappa, delta0, g)

    def apply(self, spec: ProblemSpec, u: Optional[GridField] = None):
        """Return ``(spec_hat, u_hat)`` with ``F^(x,X) = F(x, kappa X)/kappa``, ``f^ = f / kappa^(g+1)``."""
        k, g = self.kappa, spec.gamma
        new = ProblemSpec(
            g,
            spec.operator.normalized(k),
            lambda x: np.asarray(spec.obstacle(x), dtype=float) / k,
            lambda x: np.asarray(spec.source(x), dtype=float) / k ** (g + 1.0),
            lambda x: np.asarray(spec.boundary(x), dtype=float) / k,
            spec.alpha,
            spec.radius,
        )
        return new, (None if u is None else GridField(u.domain, u.values / k))
