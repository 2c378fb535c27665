"""Named problem instances with their exact solutions where one is known."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .grid import ProblemSpec
from .oracles import HarmonicObstacle2D, QuadraticObstacle1D, RadialSharpness
from .operators import EllipticOperator, trace_operator


@dataclass(frozen=True)
class Fixture:
    name: str
    spec: ProblemSpec
    exact: Optional[Callable] = None
    note: str = ""


def _r2(x):
    x = np.asarray(x, dtype=float)
    return np.sum(x * x, axis=-1)


def radial_sharpness(gamma: float = 1.0, r_contact: float = 0.5, dim: int = 2,
                     boundary_shift: float = 0.0) -> Fixture:
    """Exact radial family; ``boundary_shift`` lowers ``g`` by a constant (no exact solution then)."""
    orc = RadialSharpness(gamma, r_contact, dim)
    spec = orc.problem()
    if boundary_shift:
        spec = ProblemSpec(gamma, spec.operator, spec.obstacle, spec.source,
                           lambda x: orc.value(x) - boundary_shift, alpha=1.0)
    return Fixture("radial_sharpness", spec, None if boundary_shift else orc.value,
                   f"gamma={gamma}, r={r_contact}, n={dim}")


def obstacle_1d_quadratic(p0: float = 0.5, q: float = 4.0, f: float = 2.0, g: float = 1.0) -> Fixture:
    """``u'' = f`` off contact above ``phi = p0 - q x^2`` on (-1, 1), uniformly elliptic."""
    orc = QuadraticObstacle1D(p0, q, f, g)
    spec = ProblemSpec(
        gamma=0.0,
        operator=trace_operator(),
        obstacle=lambda x: p0 - q * _r2(x),
        source=lambda x: np.full(len(x), float(f)),
        boundary=lambda x: np.full(len(x), float(g)),
    )
    return Fixture("obstacle_1d_quadratic", spec, orc.value, f"phi={p0}-{q}x^2, f={f}, g={g}")


def harmonic_obstacle_2d(p0: float = 0.5, q: float = 4.0) -> Fixture:
    """``f = 0``, ``g = 0``, concave paraboloid obstacle in the unit disc."""
    orc = HarmonicObstacle2D(p0, q)
    spec = ProblemSpec(
        gamma=0.0,
        operator=trace_operator(),
        obstacle=lambda x: p0 - q * _r2(x),
        source=lambda x: np.zeros(len(x)),
        boundary=lambda x: np.zeros(len(x)),
    )
    return Fixture("harmonic_obstacle_2d", spec, orc.value, f"phi={p0}-{q}|x|^2, f=0, g=0")


def strict_supersolution(dim: int = 2, p0: float = 0.5, q: float = 4.0, gamma: float = 0.0) -> Fixture:
    """``f = 0`` with the strict supersolution obstacle ``p0 - q|x|^2``.

    Exact solutions are known for ``gamma = 0`` in one and two dimensions.
    """
    if dim == 2 and gamma == 0:
        fx = harmonic_obstacle_2d(p0, q)
        return Fixture("strict_supersolution", fx.spec, fx.exact, fx.note)
    exact = QuadraticObstacle1D(p0, q, 0.0, 0.0).value if dim == 1 and gamma == 0 else None
    spec = ProblemSpec(
        gamma=gamma,
        operator=trace_operator(),
        obstacle=lambda x: p0 - q * _r2(x),
        source=lambda x: np.zeros(len(x)),
        boundary=lambda x: np.zeros(len(x)),
    )
    return Fixture("strict_supersolution", spec, exact, f"n={dim}, phi={p0}-{q}|x|^2, f=0, g=0")


def homogeneous(gamma: float, boundary: Callable, operator: Optional[EllipticOperator] = None) -> Fixture:
    """``f = 0`` with an obstacle far below the data (the constraint never binds)."""
    spec = ProblemSpec(
        gamma=gamma,
        operator=operator or trace_operator(),
        obstacle=lambda x: np.full(len(x), -10.0),
        source=lambda x: np.zeros(len(x)),
        boundary=boundary,
    )
    return Fixture("homogeneous", spec, None, f"gamma={gamma}, inactive obstacle")


CATALOG = {
    "radial_sharpness": radial_sharpness,
    "obstacle_1d_quadratic": obstacle_1d_quadratic,
    "harmonic_obstacle_2d": harmonic_obstacle_2d,
    "strict_supersolution": strict_supersolution,
}
