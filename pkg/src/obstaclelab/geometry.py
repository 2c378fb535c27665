"""Free-boundary extraction and growth, non-degeneracy and porosity measurements."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage, stats

from .grid import GridDomain, GridField, sphere_nodes, sup_over_ball, sup_over_sphere
from .operators import gradients


class EmptyFreeBoundaryError(ValueError):
    """The contact set is empty, so there is no free boundary to measure."""


class FitError(ValueError):
    pass


@dataclass
class FreeBoundaryReport:
    contact_nodes: np.ndarray
    fb_nodes: np.ndarray
    tol_contact: float
    fitted_exponents: dict = field(default_factory=dict)
    nondeg_ratios: list = field(default_factory=list)
    porosity_hat: Optional[float] = None
    boxdim_hat: Optional[float] = None


def _check_same(u: GridField, phi: GridField) -> None:
    if u.domain is not phi.domain:
        raise ValueError("u and phi live on different domains")


def extract_free_boundary(u: GridField, phi: GridField, tol_contact: Optional[float] = None) -> FreeBoundaryReport:
    """Contact nodes ``u - phi <= tol`` and those with a non-contact axis neighbour.

    Ring nodes count as non-contact.  Raises :class:`EmptyFreeBoundaryError`
    when nothing touches the obstacle.
    """
    _check_same(u, phi)
    dom = u.domain
    tol = dom.spacing**2 if tol_contact is None else tol_contact
    gap = u.interior_values - phi.interior_values
    contact = gap <= tol
    contact_nodes = np.nonzero(contact)[0]
    if len(contact_nodes) == 0:
        raise EmptyFreeBoundaryError("contact set is empty")
    is_contact = np.zeros(dom.n_nodes, dtype=bool)
    is_contact[contact_nodes] = True
    plus, minus = dom.axis_neighbours
    nb = np.concatenate([plus, minus], axis=1)[contact_nodes]
    fb = contact_nodes[~np.all(is_contact[nb], axis=1)]
    return FreeBoundaryReport(contact_nodes=contact_nodes, fb_nodes=fb, tol_contact=tol)


@dataclass(frozen=True)
class FitWindow:
    """Dyadic radii ``r_max / 2^k >= r_min``; values below ``floor_multiple h^2`` are dropped."""

    r_min: float
    r_max: float
    floor_multiple: float = 10.0

    def radii(self) -> np.ndarray:
        out = []
        r = self.r_max
        while r >= self.r_min * (1 - 1e-12):
            out.append(r)
            r /= 2.0
        return np.array(out)

    def check(self, domain: GridDomain, x0) -> None:
        h = domain.spacing
        if self.r_min < 4 * h * (1 - 1e-12):
            raise FitError(f"r_min {self.r_min} below 4h = {4 * h}")
        dist = domain.radius - float(np.linalg.norm(x0))
        if self.r_max > dist / 2 * (1 + 1e-12):
            raise FitError(f"r_max {self.r_max} exceeds half the distance {dist:.4g} to the sphere")
        if len(self.radii()) < 4:
            raise FitError("window holds fewer than 4 dyadic radii")


def default_window(domain: GridDomain, x0, floor_multiple: float = 10.0) -> FitWindow:
    """Largest dyadic window admitted at ``x0``."""
    h = domain.spacing
    dist = domain.radius - float(np.linalg.norm(x0))
    r_max = 2.0 ** np.floor(np.log2(dist / 2))
    return FitWindow(r_min=4 * h, r_max=float(r_max), floor_multiple=floor_multiple)


@dataclass(frozen=True)
class PowerFit:
    slope: float
    intercept: float
    halfwidth: float
    radii: np.ndarray
    values: np.ndarray


def _fit(radii: np.ndarray, values: np.ndarray, floor: float) -> PowerFit:
    keep = values >= floor
    r, s = radii[keep], values[keep]
    if len(r) < 4:
        raise FitError(f"only {len(r)} radii above the discretisation floor {floor:.3g}")
    res = stats.linregress(np.log(r), np.log(s))
    half = stats.t.ppf(0.975, len(r) - 2) * res.stderr
    return PowerFit(float(res.slope), float(res.intercept), float(half), r, s)


def _node(domain: GridDomain, x0) -> int:
    return int(x0) if np.ndim(x0) == 0 else domain.node_at(x0)


def _gradient_at(field: GridField, node: int) -> np.ndarray:
    return gradients(field, [node])[0]


def growth_profile(u: GridField, phi: GridField, x0, window: FitWindow, gradient_source: str = "phi") -> np.ndarray:
    """``sup_{B_r(x0)} |u - u(x0) - Du(x0).(x - x0)|`` over the window radii."""
    _check_same(u, phi)
    dom = u.domain
    k = _node(dom, x0)
    centre = dom.coords[k]
    window.check(dom, centre)
    if gradient_source not in ("phi", "u"):
        raise ValueError("gradient_source must be 'phi' or 'u'")
    slope = _gradient_at(phi if gradient_source == "phi" else u, k)
    ref = (u.values[k], slope, centre)
    return np.array([sup_over_ball(u, centre, r, ref)[0] for r in window.radii()])


def growth_exponent_at(u: GridField, phi: GridField, x0, window: FitWindow,
                       gradient_source: str = "phi") -> PowerFit:
    """Fit ``log S(r)`` against ``log r``; the slope estimates ``1 + beta``."""
    S = growth_profile(u, phi, x0, window, gradient_source)
    return _fit(window.radii(), S, window.floor_multiple * u.domain.spacing**2)


def detach_profile(u: GridField, phi: GridField, x0, window: FitWindow) -> np.ndarray:
    _check_same(u, phi)
    dom = u.domain
    k = _node(dom, x0)
    centre = dom.coords[k]
    window.check(dom, centre)
    out = []
    for r in window.radii():
        nodes = dom.nodes_in_ball(centre, r)
        out.append(float(np.max(u.values[nodes] - phi.values[nodes])))
    return np.array(out)


def detach_rate_at(u: GridField, phi: GridField, x0, window: FitWindow) -> PowerFit:
    """Fit of ``sup_{B_r(x0)} (u - phi)``; the slope estimates ``1 + beta``."""
    S = detach_profile(u, phi, x0, window)
    return _fit(window.radii(), S, window.floor_multiple * u.domain.spacing**2)


def gradient_profile(u: GridField, x0, window: FitWindow) -> np.ndarray:
    dom = u.domain
    k = _node(dom, x0)
    centre = dom.coords[k]
    window.check(dom, centre)
    Du = gradients(u)
    out = []
    for r in window.radii():
        nodes = dom.nodes_in_ball(centre, r)
        out.append(float(np.max(np.linalg.norm(Du[nodes] - Du[k], axis=1))))
    return np.array(out)


def gradient_growth_at(u: GridField, x0, window: FitWindow) -> PowerFit:
    """Fit of ``sup_{B_r(x0)} |Du - Du(x0)|``; the slope estimates ``beta``."""
    S = gradient_profile(u, x0, window)
    return _fit(window.radii(), S, window.floor_multiple * u.domain.spacing**2)


@dataclass(frozen=True)
class NondegeneracyProfile:
    radii: np.ndarray
    ratios: np.ndarray
    exponent: float

    @property
    def c_hat(self) -> float:
        return float(np.min(self.ratios))

    @property
    def degenerate(self) -> bool:
        return not self.c_hat > 1e-12

    @property
    def spread(self) -> float:
        """``max ratio / min ratio`` (infinite for a degenerate profile)."""
        return float(np.max(self.ratios) / self.c_hat) if not self.degenerate else np.inf


def nondegeneracy_profile(u: GridField, phi: GridField, x0, radii: Sequence[float],
                          gamma: Optional[float] = None, exponent: Optional[float] = None,
                          pointwise: bool = False) -> NondegeneracyProfile:
    """``(sup_{dB_r(x0)} u - phi(x0)) / r^exponent`` per radius.

    ``exponent`` defaults to ``1 + 1/(gamma+1)``; pass 2 for the quadratic
    profile away from the free boundary, usually together with
    ``pointwise=True``, which replaces ``u - phi(x0)`` by ``u(x) - phi(x)``.
    """
    _check_same(u, phi)
    if exponent is None:
        if gamma is None:
            raise ValueError("give gamma or an explicit exponent")
        exponent = 1.0 + 1.0 / (gamma + 1.0)
    dom = u.domain
    k = _node(dom, x0)
    centre = dom.coords[k]
    base = phi.values[k]
    radii = np.asarray(radii, dtype=float)
    if pointwise:
        gap = GridField(dom, u.values - phi.values)
        ratios = np.array([sup_over_sphere(gap, centre, r) / r**exponent for r in radii])
    else:
        ratios = np.array([(sup_over_sphere(u, centre, r) - base) / r**exponent for r in radii])
    return NondegeneracyProfile(radii, ratios, float(exponent))


def _lattice_mask(domain: GridDomain, nodes: np.ndarray) -> np.ndarray:
    mask = np.zeros(domain.lookup.shape, dtype=bool)
    mask[tuple((domain.index[nodes] + domain.half_width).T)] = True
    return mask


def porosity_estimate(fb_nodes: np.ndarray, domain: GridDomain, sample_radii: Sequence[float],
                      max_centres: int = 256) -> float:
    """Lower estimate of the porosity constant of the node set ``fb_nodes``.

    For each sampled set point ``x`` and radius ``r`` the largest ``rho`` with
    ``B_rho(y) subset B_r(x)`` avoiding the set is found over lattice centres
    ``y`` using the Euclidean distance transform; the minimum of ``rho / r``
    is returned.  Radii below ``4h`` are skipped.
    """
    fb_nodes = np.asarray(fb_nodes, dtype=np.int64)
    if len(fb_nodes) == 0:
        raise ValueError("free boundary is empty")
    h = domain.spacing
    radii = [r for r in sample_radii if r >= 4 * h * (1 - 1e-12)]
    if not radii:
        raise ValueError("no sample radius at or above 4h")
    dist = ndimage.distance_transform_edt(~_lattice_mask(domain, fb_nodes)) * h
    M = domain.half_width
    axes = [np.arange(-M, M + 1) * h] * domain.dim
    lattice = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, domain.dim)
    dflat = dist.reshape(-1)
    step = max(1, len(fb_nodes) // max_centres)
    worst = np.inf
    for k in fb_nodes[::step]:
        x = domain.coords[k]
        d = np.sqrt(np.sum((lattice - x) ** 2, axis=1))
        for r in radii:
            inside = d <= r
            rho = np.max(np.minimum(dflat[inside], r - d[inside]))
            worst = min(worst, rho / r)
    return float(worst)


def box_counts(fb_nodes: np.ndarray, domain: GridDomain, scales: Sequence[float],
               restrict_radius: Optional[float] = 0.5) -> np.ndarray:
    h = domain.spacing
    idx = domain.index[np.asarray(fb_nodes, dtype=np.int64)]
    if restrict_radius is not None:
        idx = idx[np.sqrt(np.sum(idx.astype(float) ** 2, axis=1)) * h <= restrict_radius * (1 + 1e-12)]
    counts = []
    for s in scales:
        m = s / h
        if abs(m - round(m)) > 1e-9 or round(m) < 1:
            raise ValueError(f"box size {s} is not a multiple of h = {h}")
        boxes = np.floor_divide(idx + domain.half_width, int(round(m)))
        counts.append(len(np.unique(boxes, axis=0)) if len(boxes) else 0)
    return np.array(counts)


def box_dimension(fb_nodes: np.ndarray, domain: GridDomain, scales: Sequence[float],
                  restrict_radius: Optional[float] = 0.5) -> float:
    """Slope of ``log N(s)`` against ``log(1/s)`` on ``fb_nodes`` within ``restrict_radius``."""
    scales = np.asarray(scales, dtype=float)
    if len(scales) < 4:
        raise FitError("box counting needs at least 4 scales")
    N = box_counts(fb_nodes, domain, scales, restrict_radius)
    if np.any(N == 0):
        raise FitError("no free-boundary nodes inside the counting region")
    slope, _ = np.polyfit(np.log(1.0 / scales), np.log(N), 1)
    return float(slope)


def dyadic_scales(domain: GridDomain, count: int = 5, largest: float = 0.25) -> list[float]:
    """``count`` dyadic box sizes from ``largest`` down, all multiples of h."""
    h = domain.spacing
    out = []
    s = largest
    while len(out) < count and s >= h * (1 - 1e-12):
        m = round(s / h)
        if abs(s / h - m) < 1e-9:
            out.append(m * h)
        s /= 2.0
    return out
