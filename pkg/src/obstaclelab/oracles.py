"""Closed-form solutions and comparison functions used as ground truth."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .grid import GridDomain, ProblemSpec, sample
from .operators import degenerate_factor, gradients, hessians, trace_operator


def beta_of(gamma: float, alpha: float) -> float:
    """Sharp regularity exponent ``min(alpha, 1/(gamma+1))``."""
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    return min(alpha, 1.0 / (gamma + 1.0))


def _norm(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.sqrt(np.sum(x * x, axis=-1)) if x.ndim >= 1 else np.abs(x)


@dataclass(frozen=True)
class RadialSharpness:
    """``v(x) = (|x| - r)_+^((gamma+2)/(gamma+1))`` and its source term.

    ``v`` solves ``|Dv|^gamma Delta v = f`` off the ball of radius ``r``; on
    that ball ``v = 0`` and the source takes the constant value
    ``(gamma+2)^(gamma+1) / (gamma+1)^(gamma+2)``.
    """

    gamma: float
    r_contact: float
    dim: int

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if not 0 < self.r_contact < 1:
            raise ValueError("r_contact must lie in (0, 1)")
        if self.dim not in (1, 2, 3):
            raise ValueError("dim must be 1, 2 or 3")

    @property
    def exponent(self) -> float:
        return (self.gamma + 2.0) / (self.gamma + 1.0)

    def value(self, x):
        s = np.clip(_norm(x) - self.r_contact, 0.0, None)
        return s**self.exponent

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        rho = _norm(x)
        s = np.clip(rho - self.r_contact, 0.0, None)
        mag = self.exponent * s ** (self.exponent - 1.0)
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = np.where(rho[..., None] > 0, x / np.where(rho > 0, rho, 1.0)[..., None], 0.0)
        return mag[..., None] * unit

    def source(self, x):
        g = self.gamma
        rho = _norm(x)
        a = self.exponent
        outside = a ** (g + 1.0) * (1.0 / (1.0 + g) + (self.dim - 1) * (1.0 - self.r_contact / np.where(rho > 0, rho, 1.0)))
        inside = (g + 2.0) ** (g + 1.0) / (g + 1.0) ** (g + 2.0)
        return np.where(rho > self.r_contact, outside, inside)

    def boundary_value(self) -> float:
        return (1.0 - self.r_contact) ** self.exponent

    def problem(self, radius: float = 1.0) -> ProblemSpec:
        """Obstacle ``0``, source as above, boundary datum ``v`` itself (extended to the ring)."""
        return ProblemSpec(
            gamma=self.gamma,
            operator=trace_operator(),
            obstacle=lambda x: np.zeros(len(x)),
            source=self.source,
            boundary=self.value,
            alpha=1.0,
            radius=radius,
        )


def verify_radial_is_solution(oracle: RadialSharpness, domain: GridDomain, grad_floor: float = 0.0,
                              collar: float | None = None) -> float:
    """Sup of ``wrapper(Dv, D^2v) - f chi_{v > 0}`` over interior nodes at distance > collar from the contact sphere."""
    if domain.dim != oracle.dim:
        raise ValueError("oracle and domain dimensions differ")
    collar = 4 * domain.spacing if collar is None else collar
    if collar < 2 * domain.spacing:
        raise ValueError("collar must be at least 2h")
    v = sample(oracle.value, domain)
    grad = gradients(v)
    A = degenerate_factor(grad, oracle.gamma, grad_floor)
    lap = np.trace(hessians(v), axis1=1, axis2=2)
    x = domain.coords[: domain.n_interior]
    rho = _norm(x)
    # the equation carries f chi_{v > 0}; inside the contact ball both sides vanish
    res = A * lap - oracle.source(x) * (rho > oracle.r_contact)
    keep = np.abs(rho - oracle.r_contact) > collar
    return float(np.max(np.abs(res[keep])))


@dataclass(frozen=True)
class ComparisonXi:
    """Barrier ``coef |x - x0|^((gamma+2)/(gamma+1)) + phi(x0) / r^((gamma+2)/(gamma+1))``.

    ``r`` rescales the base term; with ``r = 1`` the shift is ``phi(x0)``.
    """

    m_inf: float
    lambda_cap: float
    dim: int
    gamma: float
    base_value: float = 0.0
    r: float = 1.0

    def __post_init__(self):
        if self.m_inf <= 0:
            raise ValueError("m_inf must be positive")
        if self.lambda_cap <= 0 or self.r <= 0:
            raise ValueError("lambda_cap and r must be positive")


def xi_coefficient(c: ComparisonXi) -> float:
    g, n, Lam, m = c.gamma, c.dim, c.lambda_cap, c.m_inf
    return (m * (g + 1.0) ** (g + 2.0) / (n * (g + 1.0) * Lam * (g + 2.0) ** (g + 1.0))) ** (1.0 / (g + 1.0))


def xi_value(c: ComparisonXi, x, x0=None):
    a = (c.gamma + 2.0) / (c.gamma + 1.0)
    x = np.asarray(x, dtype=float)
    d = _norm(x if x0 is None else x - np.asarray(x0, dtype=float))
    return xi_coefficient(c) * d**a + c.base_value / c.r**a


# ---------------------------------------------------------------- 1D / radial obstacle oracles

@dataclass(frozen=True)
class QuadraticObstacle1D:
    """Exact solution of ``u'' = f`` off contact, ``u >= phi = p0 - q x^2`` on (-1, 1), ``u(+-1) = g``.

    Contact is ``[-a, a]``; off contact ``u = phi(a) + phi'(a)(|x| - a) + f (|x| - a)^2 / 2``
    with ``a`` fixed by ``u(1) = g``.  Valid for ``f > -2q`` (the obstacle is a strict
    supersolution when ``-2q < 0 <= f``).
    """

    p0: float
    q: float
    f: float
    g: float

    @property
    def contact_half_width(self) -> float:
        p0, q, f, g = self.p0, self.q, self.f, self.g

        def mismatch(a):
            s = 1.0 - a
            return p0 - q * a * a - 2.0 * q * a * s + 0.5 * f * s * s - g

        if mismatch(0.0) * mismatch(1.0) > 0:
            raise ValueError("no contact interval matches the boundary datum")
        return brentq(mismatch, 0.0, 1.0, xtol=1e-15)

    def value(self, x):
        x = np.asarray(x, dtype=float).reshape(-1)
        a = self.contact_half_width
        s = np.abs(x)
        phi = self.p0 - self.q * x * x
        off = self.p0 - self.q * a * a - 2.0 * self.q * a * (s - a) + 0.5 * self.f * (s - a) ** 2
        return np.where(s <= a, phi, off)


@dataclass(frozen=True)
class HarmonicObstacle2D:
    """Radial obstacle solution in 2D with ``f = 0``, ``phi = p0 - q|x|^2``, ``g = 0`` on ``|x| = 1``.

    Off the contact disc ``u = c log|x|`` with ``c = -2 q a^2`` (C^1 matching),
    and ``a`` solves ``-2 q a^2 log a = p0 - q a^2``.
    """

    p0: float
    q: float

    @property
    def contact_radius(self) -> float:
        p0, q = self.p0, self.q
        return brentq(lambda a: -2.0 * q * a * a * math.log(a) - (p0 - q * a * a), 1e-9, 1.0 - 1e-12, xtol=1e-15)

    def value(self, x):
        a = self.contact_radius
        rho = _norm(x)
        c = -2.0 * self.q * a * a
        with np.errstate(divide="ignore"):
            off = c * np.log(np.where(rho > 0, rho, 1.0))
        return np.where(rho <= a, self.p0 - self.q * rho * rho, off)
