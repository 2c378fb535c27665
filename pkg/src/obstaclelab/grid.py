"""Ball-shaped Cartesian grids, grid fields and the problem data model.

Nodes are the lattice points ``i * h`` (``i`` an integer multi-index) inside
the closed ball of radius ``R``.  A ring of lattice points with
``R < |x| <= R + sqrt(n) h`` carries the boundary datum, so every interior
node owns a full central-difference stencil, diagonal (mixed) neighbours
included.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Callable

import numpy as np

ScalarFunction = Callable[[np.ndarray], np.ndarray]


def _exact_fraction(value: float) -> Fraction:
    # decimal-exact: 0.1 means 1/10, not the nearest binary double
    return Fraction(repr(float(value)))


@dataclass(frozen=True, eq=False)
class GridDomain:
    """Lattice discretisation of the closed ball ``B_R`` in ``R^dim``.

    Use :func:`build_domain` rather than the constructor.

    Attributes
    ----------
    dim, spacing, radius : problem geometry.
    index : (N, dim) int array of multi-indices; interior nodes first.
    n_interior : number of nodes inside the ball.
    closed : whether lattice points on the sphere count as interior.
    """

    dim: int
    spacing: float
    radius: float
    index: np.ndarray
    n_interior: int
    half_width: int
    lookup: np.ndarray = field(repr=False)
    closed: bool = True

    @property
    def h(self) -> float:
        return self.spacing

    @property
    def n_nodes(self) -> int:
        return self.index.shape[0]

    @cached_property
    def coords(self) -> np.ndarray:
        c = self.index * self.spacing
        c.flags.writeable = False
        return c

    @property
    def interior(self) -> slice:
        return slice(0, self.n_interior)

    @property
    def ring(self) -> slice:
        return slice(self.n_interior, self.n_nodes)

    @cached_property
    def norms(self) -> np.ndarray:
        return np.sqrt(np.sum(self.coords**2, axis=1))

    def node_at(self, point) -> int:
        """Index of the node with coordinates ``point`` (must be a lattice point)."""
        p = np.asarray(point, dtype=float).reshape(self.dim)
        i = np.rint(p / self.spacing).astype(int)
        if not np.allclose(i * self.spacing, p, atol=1e-9 * max(1.0, self.spacing)):
            raise ValueError(f"{point} is not a lattice point of spacing {self.spacing}")
        return self.node_of_index(i)

    def node_of_index(self, multi_index) -> int:
        i = np.asarray(multi_index, dtype=int) + self.half_width
        if np.any(i < 0) or np.any(i >= self.lookup.shape[0]):
            raise KeyError(f"multi-index {multi_index} outside the stored lattice")
        k = int(self.lookup[tuple(i)])
        if k < 0:
            raise KeyError(f"multi-index {multi_index} is not a stored node")
        return k

    def neighbour(self, nodes: np.ndarray, offset) -> np.ndarray:
        """Node numbers of ``nodes + offset`` (offset in lattice units); -1 if absent."""
        j = self.index[nodes] + np.asarray(offset, dtype=int) + self.half_width
        inside = np.all((j >= 0) & (j < self.lookup.shape[0]), axis=1)
        out = np.full(len(nodes), -1, dtype=np.int64)
        out[inside] = self.lookup[tuple(j[inside].T)]
        return out

    @cached_property
    def axis_neighbours(self) -> tuple[np.ndarray, np.ndarray]:
        """(plus, minus): arrays of shape (n_interior, dim)."""
        nodes = np.arange(self.n_interior)
        eye = np.eye(self.dim, dtype=int)
        plus = np.stack([self.neighbour(nodes, eye[k]) for k in range(self.dim)], axis=1)
        minus = np.stack([self.neighbour(nodes, -eye[k]) for k in range(self.dim)], axis=1)
        return plus, minus

    @cached_property
    def diagonal_neighbours(self) -> dict[tuple[int, int], np.ndarray]:
        """For k < l: array (n_interior, 4) of the ++, +-, -+, -- diagonal neighbours."""
        nodes = np.arange(self.n_interior)
        eye = np.eye(self.dim, dtype=int)
        out = {}
        for k in range(self.dim):
            for l in range(k + 1, self.dim):
                out[(k, l)] = np.stack(
                    [
                        self.neighbour(nodes, eye[k] + eye[l]),
                        self.neighbour(nodes, eye[k] - eye[l]),
                        self.neighbour(nodes, -eye[k] + eye[l]),
                        self.neighbour(nodes, -eye[k] - eye[l]),
                    ],
                    axis=1,
                )
        return out

    @cached_property
    def parity(self) -> np.ndarray:
        """Red/black colouring (0/1) of the interior nodes."""
        return (np.sum(self.index[: self.n_interior], axis=1) % 2).astype(np.int8)

    def nodes_in_ball(self, center, r: float, include_ring: bool = False) -> np.ndarray:
        c = np.asarray(center, dtype=float)
        stop = self.n_nodes if include_ring else self.n_interior
        d = np.sqrt(np.sum((self.coords[:stop] - c) ** 2, axis=1))
        return np.nonzero(d <= r * (1 + 1e-12))[0]

    def zeros(self) -> "GridField":
        return GridField(self, np.zeros(self.n_nodes))

    def __repr__(self) -> str:
        return (
            f"GridDomain(dim={self.dim}, spacing={self.spacing}, radius={self.radius}, "
            f"interior={self.n_interior}, ring={self.n_nodes - self.n_interior})"
        )


def build_domain(dim: int, spacing: float, radius: float = 1.0, closed: bool = True) -> GridDomain:
    """Discretise the ball of the given radius.

    With ``closed=False`` lattice points on the sphere ``|x| = R`` join the
    boundary ring, so the boundary datum is imposed exactly on the sphere.

    Raises
    ------
    ValueError
        For ``dim`` outside {1, 2, 3}, non-positive sizes, or a spacing coarser
        than ``radius / 2`` (no interior node besides the centre on each axis).
    """
    if dim not in (1, 2, 3):
        raise ValueError(f"unsupported dimension {dim}; expected 1, 2 or 3")
    if not (spacing > 0 and radius > 0):
        raise ValueError("spacing and radius must be positive")
    if spacing > radius / 2:
        raise ValueError(
            f"spacing {spacing} too coarse for a stencil on a ball of radius {radius}"
        )
    hq, rq = _exact_fraction(spacing), _exact_fraction(radius)
    # |i|^2 h^2 <= R^2  <=>  |i|^2 <= floor(R^2 / h^2), in exact integer arithmetic
    ratio = (rq * rq) / (hq * hq)
    k_max = math.floor(ratio)
    if not closed and ratio.denominator == 1:
        k_max -= 1
    outer = radius + math.sqrt(dim) * spacing
    M = int(math.ceil(outer / spacing)) + 1

    axes = [np.arange(-M, M + 1)] * dim
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dim)
    sq = np.sum(grid * grid, axis=1)
    interior = sq <= k_max
    dist = np.sqrt(sq.astype(float)) * spacing
    ring = (~interior) & (dist <= outer * (1 + 1e-12))
    index = np.concatenate([grid[interior], grid[ring]]).astype(np.int64)
    index.flags.writeable = False

    lookup = np.full((2 * M + 1,) * dim, -1, dtype=np.int64)
    lookup[tuple((index + M).T)] = np.arange(len(index))
    lookup.flags.writeable = False

    domain = GridDomain(
        dim=dim,
        spacing=float(spacing),
        radius=float(radius),
        index=index,
        n_interior=int(interior.sum()),
        half_width=M,
        lookup=lookup,
        closed=bool(closed),
    )
    _check_stencils(domain)
    return domain


def _check_stencils(domain: GridDomain) -> None:
    plus, minus = domain.axis_neighbours
    complete = (plus >= 0).all() and (minus >= 0).all()
    for nb in domain.diagonal_neighbours.values():
        complete = complete and bool((nb >= 0).all())
    if not complete:
        raise ValueError("stencil incomplete near the boundary")


@dataclass(frozen=True, eq=False)
class GridField:
    """One value per stored node (interior and boundary ring)."""

    domain: GridDomain
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.domain.n_nodes,):
            raise ValueError(f"expected {self.domain.n_nodes} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def interior_values(self) -> np.ndarray:
        return self.values[: self.domain.n_interior]

    def at(self, point) -> float:
        return float(self.values[self.domain.node_at(point)])

    def with_values(self, values) -> "GridField":
        return GridField(self.domain, values)

    def _binary(self, other, op):
        if isinstance(other, GridField):
            if other.domain is not self.domain:
                raise ValueError("fields live on different domains")
            other = other.values
        return GridField(self.domain, op(self.values, other))

    def __add__(self, other):
        return self._binary(other, np.add)

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __mul__(self, other):
        return self._binary(other, np.multiply)

    __radd__ = __add__
    __rmul__ = __mul__

    def __neg__(self):
        return GridField(self.domain, -self.values)

    def sup_norm(self, interior_only: bool = True) -> float:
        v = self.interior_values if interior_only else self.values
        return float(np.max(np.abs(v)))


def sample(function: ScalarFunction, domain: GridDomain) -> GridField:
    """Evaluate ``function`` (vectorised over an (N, dim) coordinate array) at every node."""
    values = np.asarray(function(domain.coords), dtype=float)
    if values.ndim == 0:
        values = np.full(domain.n_nodes, float(values))
    values = np.broadcast_to(values, (domain.n_nodes,))
    if not np.all(np.isfinite(values)):
        bad = int(np.nonzero(~np.isfinite(values))[0][0])
        raise ValueError(f"non-finite value at node {domain.coords[bad]}")
    return GridField(domain, values)


def _affine_values(domain: GridDomain, reference, nodes: np.ndarray) -> np.ndarray:
    if reference is None:
        return np.zeros(len(nodes))
    if callable(reference):
        return np.asarray(reference(domain.coords[nodes]), dtype=float) * np.ones(len(nodes))
    value, slope, base = reference
    return value + (domain.coords[nodes] - np.asarray(base, dtype=float)) @ np.asarray(slope, dtype=float)


def sup_over_ball(field: GridField, center, r: float, reference=None) -> tuple[float, int]:
    """``max |field - reference|`` over interior nodes within distance ``r`` of ``center``.

    ``reference`` is None (zero), a callable, or a tuple ``(value, slope, base)``
    describing ``value + slope . (x - base)``.  Returns the maximum and the
    node attaining it.
    """
    dom = field.domain
    if r < dom.spacing:
        raise ValueError(f"radius {r} below grid spacing {dom.spacing}")
    nodes = dom.nodes_in_ball(center, r)
    if len(nodes) == 0:
        raise ValueError("empty ball")
    gap = np.abs(field.values[nodes] - _affine_values(dom, reference, nodes))
    k = int(np.argmax(gap))
    return float(gap[k]), int(nodes[k])


def sphere_nodes(domain: GridDomain, center, r: float) -> np.ndarray:
    """Interior nodes in the annulus ``r - h/2 < |x - center| <= r + h/2``."""
    c = np.asarray(center, dtype=float)
    d = np.sqrt(np.sum((domain.coords[: domain.n_interior] - c) ** 2, axis=1))
    h = domain.spacing
    return np.nonzero((d > r - h / 2) & (d <= r + h / 2))[0]


def sup_over_sphere(field: GridField, center, r: float) -> float:
    """Max of ``field`` over the discrete sphere of radius ``r`` about ``center``."""
    if r < field.domain.spacing:
        raise ValueError(f"radius {r} below grid spacing {field.domain.spacing}")
    nodes = sphere_nodes(field.domain, center, r)
    if len(nodes) == 0:
        raise ValueError(f"discrete sphere of radius {r} contains no nodes")
    return float(np.max(field.values[nodes]))


@dataclass(frozen=True)
class ProblemSpec:
    """An instance ``|Du|^gamma F(x, D^2u) = f chi_{u > phi}``, ``u >= phi``, ``u = g``.

    ``obstacle``, ``source`` and ``boundary`` are vectorised callables on
    (N, dim) coordinate arrays.  ``boundary`` is evaluated on the ring nodes.
    """

    gamma: float
    operator: object
    obstacle: ScalarFunction
    source: ScalarFunction
    boundary: ScalarFunction
    alpha: float = 1.0
    radius: float = 1.0

    def __post_init__(self):
        if not self.gamma >= 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if not 0 < self.alpha <= 1:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")

    def beta(self) -> float:
        return min(self.alpha, 1.0 / (self.gamma + 1.0))

    def validate(self, domain: GridDomain) -> None:
        """Check ``g > phi`` on every boundary-ring node."""
        ring = domain.coords[domain.ring]
        g = np.broadcast_to(np.asarray(self.boundary(ring), dtype=float), (len(ring),))
        phi = np.broadcast_to(np.asarray(self.obstacle(ring), dtype=float), (len(ring),))
        if not np.all(g > phi):
            worst = int(np.argmin(g - phi))
            raise ValueError(
                f"boundary datum must dominate the obstacle: g - phi = {g[worst] - phi[worst]:.3g} "
                f"at {ring[worst]}"
            )

    def source_field(self, domain: GridDomain) -> GridField:
        return sample(self.source, domain)

    def obstacle_field(self, domain: GridDomain) -> GridField:
        return sample(self.obstacle, domain)

    def initial_field(self, domain: GridDomain) -> GridField:
        """Obstacle in the interior, boundary datum on the ring."""
        phi = sample(self.obstacle, domain).values.copy()
        g = np.broadcast_to(np.asarray(self.boundary(domain.coords[domain.ring]), dtype=float),
                            (domain.n_nodes - domain.n_interior,))
        phi[domain.ring] = g
        return GridField(domain, phi)
