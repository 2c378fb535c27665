"""Penalised and projected solvers for the degenerate obstacle problem.

The discrete residual at an interior node is

    G_i(v) = (|D_h v|^2 + floor^2)^(gamma/2) F(x_i, D_h^2 v) - rhs_i,

with ``rhs = f Phi_eps(v0 - phi) + sign * eps`` for the penalised equation.
``G_i`` is nonincreasing in the centre value ``v_i`` (the central gradient
does not see ``v_i``; the Hessian shifts by ``-2 v_i / h^2`` times the
identity), which is what every local solve below relies on.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .grid import GridDomain, GridField, ProblemSpec
from .operators import (
    EllipticOperator,
    degenerate_factor,
    gradients,
    hessians,
    shifted_evaluator,
)

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    pass


# residual tolerance multiplier for the warm-start stages of a schedule
STAGE_SLACK = 100.0


# ---------------------------------------------------------------- penalty

def smoothstep(t):
    """``6t^5 - 15t^4 + 10t^3`` on [0, 1], clamped to 0 below and 1 above."""
    t = np.clip(t, 0.0, 1.0)
    return t * t * t * (t * (6.0 * t - 15.0) + 10.0)


def smoothstep_derivative(t):
    t = np.clip(t, 0.0, 1.0)
    return 30.0 * t * t * (t - 1.0) ** 2


@dataclass(frozen=True)
class PenaltyProfile:
    """Smooth Heaviside ``Phi_eps(s) = Phi(s / eps)`` plus the shift ``sign * eps``."""

    epsilon: float
    sign: int = 1

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")

    def __call__(self, s):
        return smoothstep(np.asarray(s, dtype=float) / self.epsilon)

    def derivative(self, s):
        return smoothstep_derivative(np.asarray(s, dtype=float) / self.epsilon) / self.epsilon

    @property
    def shift(self) -> float:
        return self.sign * self.epsilon


def phi_eps(profile: PenaltyProfile, s):
    out = profile(s)
    return float(out) if np.ndim(out) == 0 else out


def source_sign(f_values: np.ndarray) -> int:
    """+1 if ``inf f > 0``, -1 if ``sup f < 0``; raises for sign-changing sources."""
    if np.min(f_values) > 0:
        return 1
    if np.max(f_values) < 0:
        return -1
    raise ValueError(
        "the penalised backend needs a source of one sign (inf f > 0 or sup f < 0); "
        "use backend='projection'"
    )


# ---------------------------------------------------------------- config / report

@dataclass(frozen=True)
class SolverConfig:
    """Solver parameters.

    ``epsilon_schedule=None`` picks the decade schedule of
    :func:`default_schedule`.  ``tol_inner`` bounds the residual divided by
    ``A`` the degenerate factor clipped to ``[h, 1]``.
    ``inner_method`` is ``"sor"`` (nonlinear red-black SOR with exact local
    solves) or ``"explicit"`` (damped pseudo-time march).  ``outer_mode``
    ``"coupled"`` evaluates the penalty at the current iterate inside each
    local solve; ``"frozen"`` runs the literal fixed-point map on the frozen
    argument with relaxation ``outer_relaxation``.
    """

    epsilon_schedule: Optional[Sequence[float]] = None
    grad_floor: Optional[float] = None
    dt_safety: float = 0.9
    tol_inner: float = 1e-6
    tol_outer: float = 1e-6
    max_inner: int = 20000
    max_outer: int = 200
    backend: str = "penalized"
    inner_method: str = "sor"
    outer_mode: str = "coupled"
    outer_relaxation: float = 1.0
    omega: Optional[float] = None

    def __post_init__(self):
        if self.epsilon_schedule is not None:
            eps = list(self.epsilon_schedule)
            if not eps or any(e <= 0 or e >= 1 for e in eps):
                raise ValueError("epsilon_schedule entries must lie in (0, 1)")
            if any(b >= a for a, b in zip(eps, eps[1:])):
                raise ValueError("epsilon_schedule must be strictly decreasing")
            object.__setattr__(self, "epsilon_schedule", tuple(float(e) for e in eps))
        if self.tol_inner <= 0 or self.tol_outer <= 0:
            raise ValueError("tolerances must be positive")
        if not 0 < self.dt_safety <= 1:
            raise ValueError("dt_safety must lie in (0, 1]")
        if self.backend not in ("penalized", "projection"):
            raise ValueError(f"unknown backend {self.backend!r}")
        if self.inner_method not in ("sor", "explicit"):
            raise ValueError(f"unknown inner method {self.inner_method!r}")
        if self.outer_mode not in ("coupled", "frozen"):
            raise ValueError(f"unknown outer mode {self.outer_mode!r}")
        if not 0 < self.outer_relaxation <= 1:
            raise ValueError("outer_relaxation must lie in (0, 1]")
        if self.omega is not None and not 0 < self.omega < 2:
            raise ValueError("omega must lie in (0, 2)")
        if self.max_inner < 1 or self.max_outer < 1:
            raise ValueError("iteration caps must be positive")

    def floor_for(self, domain: GridDomain) -> float:
        return domain.spacing if self.grad_floor is None else self.grad_floor

    def schedule_for(self, domain: GridDomain, gamma: float) -> tuple[float, ...]:
        if self.epsilon_schedule is not None:
            return self.epsilon_schedule
        return default_schedule(domain.spacing, gamma, self.tol_inner)


def default_schedule(h: float, gamma: float, tol: float = 1e-6) -> tuple[float, ...]:
    """Decades from 0.1 down to ``min(h^max(2, gamma+1), tol * h^gamma)``.

    The ``+-eps`` shift pushes the discrete solution across the obstacle by
    roughly ``eps / h^gamma`` in contact zones (the wrapper is floored at
    ``h^gamma`` there), so the last stage is tied to the residual tolerance.
    """
    target = min(0.05, h ** max(2.0, gamma + 1.0), tol * h**gamma)
    eps = [0.1]
    while eps[-1] / 10.0 > target:
        eps.append(eps[-1] / 10.0)
    if eps[-1] > target:
        eps.append(target)
    return tuple(eps)


@dataclass
class SolverReport:
    solution: GridField
    residual_history: list
    outer_gaps: list
    epsilon_used: Optional[float]
    converged: bool
    wall_iterations: int
    stage_solutions: list = field(default_factory=list)
    message: str = ""

    @property
    def final_residual(self) -> float:
        return self.residual_history[-1] if self.residual_history else math.nan


# ---------------------------------------------------------------- residuals

@dataclass(frozen=True)
class _RawField:
    """Unchecked stand-in for GridField inside hot loops."""

    domain: GridDomain
    values: np.ndarray


class _Problem:
    """Per-run cache of the sampled data and stencil geometry."""

    def __init__(self, spec: ProblemSpec, domain: GridDomain, config: SolverConfig):
        self.spec = spec
        self.domain = domain
        self.config = config
        self.op: EllipticOperator = spec.operator
        self.gamma = float(spec.gamma)
        self.floor = config.floor_for(domain)
        self.x = domain.coords[: domain.n_interior]
        self.f = spec.source_field(domain).interior_values.copy()
        self.phi = spec.obstacle_field(domain).interior_values.copy()
        self.h2 = domain.spacing**2
        self.red = np.nonzero(domain.parity == 0)[0]
        self.black = np.nonzero(domain.parity == 1)[0]
        self.omega_estimate: Optional[float] = None
        if self.op.lam is not None:
            self.slope_floor = 2.0 * domain.dim * self.op.lam / self.h2
        else:
            self.slope_floor = None

    def residual_scale(self, A: np.ndarray) -> np.ndarray:
        return np.clip(A, self.domain.spacing, 1.0)

    def operator_parts(self, v: np.ndarray, nodes: np.ndarray):
        """Degenerate factor and the shifted evaluator at ``nodes``."""
        u = _RawField(self.domain, v)
        grad = gradients(u, nodes)
        X = hessians(u, nodes)
        centre = v[nodes]
        X += (2.0 * centre / self.h2)[:, None, None] * np.eye(self.domain.dim)
        A = degenerate_factor(grad, self.gamma, self.floor)
        g = grad if self.op.needs_gradient else None
        return A, shifted_evaluator(self.op, self.x[nodes], X, g)

    def lhs(self, v: np.ndarray, with_factor: bool = False):
        u = _RawField(self.domain, v)
        grad = gradients(u)
        A = degenerate_factor(grad, self.gamma, self.floor)
        X = hessians(u)
        g = grad if self.op.needs_gradient else None
        if g is not None:
            norm = np.linalg.norm(g, axis=1)
            g = np.where(norm[:, None] > 0, g, 0.0)
            F = shifted_evaluator(self.op, self.x, X, g)(0.0)
        else:
            F = self.op(self.x, X)
        return (A * F, A) if with_factor else A * F


def residual_field(spec: ProblemSpec, domain: GridDomain, u: GridField, profile=None,
                   tol_contact: Optional[float] = None, grad_floor: Optional[float] = None,
                   frozen: Optional[GridField] = None) -> GridField:
    """Nodewise ``wrapper(Du, D^2u) - rhs`` on interior nodes (ring entries are 0).

    With ``profile=None`` the right-hand side is ``f chi_{u > phi + tol_contact}``;
    otherwise it is the penalised ``f Phi_eps(frozen - phi) + sign eps`` with
    ``frozen`` defaulting to ``u``.
    """
    floor = 0.0 if grad_floor is None else grad_floor
    cfg = SolverConfig(grad_floor=floor)
    prob = _Problem(spec, domain, cfg)
    lhs = prob.lhs(u.values)
    if profile is None:
        tc = domain.spacing**2 if tol_contact is None else tol_contact
        rhs = prob.f * (u.interior_values > prob.phi + tc)
    else:
        v0 = u if frozen is None else frozen
        rhs = prob.f * profile(v0.interior_values - prob.phi) + profile.shift
    out = np.zeros(domain.n_nodes)
    out[: domain.n_interior] = lhs - rhs
    return GridField(domain, out)


# ---------------------------------------------------------------- local solves

def _local_root(G, t0: np.ndarray, G0: np.ndarray, slope_floor: np.ndarray, tol: float,
                max_iter: int = 60) -> np.ndarray:
    """Solve ``G(t, idx) = 0`` for a batch of nonincreasing scalar functions.

    ``slope_floor`` is a lower bound on ``-G'`` used to size the initial
    bracket; the bracket is doubled until it straddles the root, then refined
    by Illinois regula falsi.
    """
    n = len(t0)
    t = t0.copy()
    tol = np.broadcast_to(np.asarray(tol, dtype=float), (n,))
    done = np.abs(G0) <= tol
    if done.all():
        return t
    idx = np.nonzero(~done)[0]
    g0 = G0[idx]
    step = np.abs(g0) / slope_floor[idx]
    direction = np.sign(g0)
    a = t0[idx].copy()
    ga = g0.copy()
    b = a + direction * step
    gb = G(b, idx)
    for _ in range(200):
        bad = np.sign(gb) == direction
        bad &= gb != 0
        if not bad.any():
            break
        a[bad], ga[bad] = b[bad], gb[bad]
        step[bad] *= 2.0
        b[bad] = a[bad] + direction[bad] * step[bad]
        gb[bad] = G(b[bad], idx[bad])
    else:
        raise SolverError("local root bracket did not close")
    # Illinois on [a, b] with sign(ga) = direction, sign(gb) = -direction or gb = 0
    side = np.zeros(len(idx), dtype=np.int8)
    c = b.copy()
    tol = tol[idx]
    active = np.abs(gb) > tol
    for _ in range(max_iter):
        if not active.any():
            break
        k = np.nonzero(active)[0]
        denom = gb[k] - ga[k]
        safe = np.where(denom != 0, denom, 1.0)
        c_k = np.where(denom != 0, b[k] - gb[k] * (b[k] - a[k]) / safe, 0.5 * (a[k] + b[k]))
        gc = G(c_k, idx[k])
        c[k] = c_k
        same_a = np.sign(gc) == np.sign(ga[k])
        # replace a where gc has a's sign, else b
        ka, kb = k[same_a], k[~same_a]
        a[ka], ga[ka] = c_k[same_a], gc[same_a]
        gb[ka] *= np.where(side[ka] == 1, 0.5, 1.0)
        side[ka] = 1
        b[kb], gb[kb] = c_k[~same_a], gc[~same_a]
        ga[kb] *= np.where(side[kb] == -1, 0.5, 1.0)
        side[kb] = -1
        width = np.abs(b[k] - a[k])
        active[k] = (np.abs(gc) > tol[k]) & (width > 1e-15 * (1.0 + np.abs(c_k)))
    t[idx] = c
    return t


# first Dirichlet eigenvalue of the Laplacian on the unit ball, by dimension
_BALL_EIGENVALUE = {1: (math.pi / 2) ** 2, 2: 2.404825557695773 ** 2, 3: math.pi ** 2}


def _laplacian_gs_factor(domain: GridDomain) -> float:
    """Red-black Gauss-Seidel contraction of the 5-point Laplacian on the ball."""
    lam = _BALL_EIGENVALUE.get(domain.dim, math.pi ** 2) / domain.radius ** 2
    rho_jacobi = max(1.0 - domain.spacing ** 2 * lam / (2 * domain.dim), 0.0)
    return rho_jacobi ** 2


def _sor_sweeps(prob: _Problem, v: np.ndarray, rhs_fn, tol: float, max_sweeps: int,
                omega: Optional[float], clamp: bool, history: list) -> tuple[np.ndarray, bool, int]:
    """Red-black nonlinear SOR.  ``rhs_fn(t, nodes)`` gives the right-hand side.

    Without a fixed ``omega`` the first sweeps run plain Gauss-Seidel to
    estimate its contraction factor ``rho`` from successive update sizes, then
    switch to ``omega = 2 / (1 + sqrt(1 - rho))``; the estimate is reused by
    later calls on the same problem.
    """
    estimating = omega is None and prob.omega_estimate is None
    w = omega if omega is not None else (prob.omega_estimate or 1.0)
    best = math.inf
    grow = stall = 0
    it = 0
    res = _sup_residual(prob, v, rhs_fn, clamp)
    history.append(res)
    if res <= tol:
        return v, True, 0
    local_tol = 0.01 * tol
    ratios: list = []
    prev_du = None
    for it in range(1, max_sweeps + 1):
        du = 0.0
        for nodes in (prob.red, prob.black):
            A, Fs = prob.operator_parts(v, nodes)
            t0 = v[nodes]

            def G(t, idx, A=A, Fs=Fs, nodes=nodes):
                return A[idx] * Fs(2.0 * t / prob.h2, idx) - rhs_fn(t, nodes[idx])

            all_idx = np.arange(len(nodes))
            G0 = G(t0, all_idx)
            if prob.slope_floor is not None:
                sf = np.maximum(A * prob.slope_floor, 1e-300)
            else:
                d = 1e-6 * (1.0 + np.abs(t0))
                sf = np.maximum(np.abs(G0 - G(t0 + d, all_idx)) / d, 1e-12 / prob.h2)
            t = _local_root(G, t0, G0, sf, local_tol * prob.residual_scale(A))
            new = t0 + w * (t - t0)
            if clamp:
                new = np.maximum(new, prob.phi[nodes])
            du = max(du, float(np.max(np.abs(new - t0))))
            v[nodes] = new
        res = _sup_residual(prob, v, rhs_fn, clamp)
        history.append(res)
        if not math.isfinite(res):
            raise SolverError("non-finite residual")
        if res <= tol:
            return v, True, it
        if estimating:
            if prev_du:
                ratios.append(du / prev_du)
            prev_du = du
            settled = len(ratios) >= 40 and abs(ratios[-1] - ratios[-10]) < 1e-4
            if settled or len(ratios) >= 120:
                # short estimates undershoot badly on fine grids, so never go
                # below the Laplacian's factor on the same ball
                rho = max(float(np.max(ratios[-10:])), _laplacian_gs_factor(prob.domain))
                rho = min(rho, 1.0 - 1e-9)
                w = 2.0 / (1.0 + math.sqrt(1.0 - rho))
                prob.omega_estimate = w
                estimating = False
                log.debug("Gauss-Seidel factor %.5f, switching to omega %.4f", rho, w)
            continue
        if res < 0.999 * best:
            best, grow, stall = res, 0, 0
            continue
        best = min(best, res)
        if omega is None and w > 1.0:
            stall += 1
            grow += res > 10.0 * best
            # over-relaxed sweeps have transients lasting about 1 / (2 - w); past
            # that, growth or a plateau (a limit cycle near the contact set)
            # means the relaxation is too aggressive
            window = max(20, int(5.0 / (2.0 - w)))
            if grow >= window or stall >= 4 * window:
                w = max(1.0, 1.0 + 0.8 * (w - 1.0))
                prob.omega_estimate = w
                grow = stall = 0
                log.debug("reducing SOR relaxation to %.4f", w)
    return v, False, it


def _sup_residual(prob: _Problem, v: np.ndarray, rhs_fn, clamp: bool) -> float:
    """Sup of the residual divided by ``min(A, 1)``, ``A`` the degenerate factor.

    Where the factor is small an absolute test would accept Hessian errors of
    size ``tol / A``; the scaled form also bounds the plain residual by ``tol``.
    The divisor is floored at ``h`` because below that the Hessian's roundoff
    (about ``1e-16 / h^2``) would dominate.
    """
    lhs, A = prob.lhs(v, with_factor=True)
    r = (lhs - rhs_fn(v[: prob.domain.n_interior], np.arange(prob.domain.n_interior))) / prob.residual_scale(A)
    if clamp:
        # complementarity: min(u - phi, -r) = 0
        gap = v[: prob.domain.n_interior] - prob.phi
        r = np.minimum(gap, -r)
    return float(np.max(np.abs(r)))


def _explicit_march(prob: _Problem, v: np.ndarray, rhs_fn, tol: float, max_steps: int,
                    clamp: bool, history: list) -> tuple[np.ndarray, bool, int]:
    """Damped pseudo-time march ``v <- v + dt G(v)`` with a nodewise CFL step."""
    n = prob.domain.dim
    Lam = prob.op.Lambda_bound
    n_int = prob.domain.n_interior
    all_nodes = np.arange(n_int)
    for it in range(max_steps + 1):
        u = _RawField(prob.domain, v)
        A = degenerate_factor(gradients(u), prob.gamma, prob.floor)
        r = prob.lhs(v) - rhs_fn(v[:n_int], all_nodes)
        scaled = r / prob.residual_scale(A)
        rep = np.minimum(v[:n_int] - prob.phi, -scaled) if clamp else scaled
        res = float(np.max(np.abs(rep)))
        history.append(res)
        if not math.isfinite(res):
            raise SolverError("non-finite residual")
        if res <= tol:
            return v, True, it
        if it == max_steps:
            break
        dt = prob.config.dt_safety * prob.h2 / (n * Lam * (A + 1.0))
        new = v[:n_int] + dt * r
        if clamp:
            new = np.maximum(new, prob.phi)
        v[:n_int] = new
    return v, False, max_steps


def _run_inner(prob: _Problem, v: np.ndarray, rhs_fn, clamp: bool, history: list,
               tol: Optional[float] = None):
    cfg = prob.config
    tol = cfg.tol_inner if tol is None else tol
    if cfg.inner_method == "sor":
        return _sor_sweeps(prob, v, rhs_fn, tol, cfg.max_inner, cfg.omega, clamp, history)
    return _explicit_march(prob, v, rhs_fn, tol, cfg.max_inner, clamp, history)


# ---------------------------------------------------------------- public solvers

def _start(spec: ProblemSpec, domain: GridDomain, initial: Optional[GridField]) -> np.ndarray:
    spec.validate(domain)
    v = spec.initial_field(domain).values.copy()
    if initial is not None:
        if initial.domain is not domain:
            raise ValueError("initial field lives on another domain")
        v[: domain.n_interior] = initial.interior_values
    return v


def inner_solve(spec: ProblemSpec, domain: GridDomain, frozen: GridField, profile: PenaltyProfile,
                config: SolverConfig, initial: Optional[GridField] = None,
                history: Optional[list] = None) -> tuple[GridField, bool, int]:
    """Solve the penalised equation with the penalty argument frozen at ``frozen``.

    Returns ``(v, converged, iterations)``; on non-convergence ``v`` is the
    last iterate.
    """
    prob = _Problem(spec, domain, config)
    rhs_const = prob.f * profile(frozen.interior_values - prob.phi) + profile.shift
    v = _start(spec, domain, initial if initial is not None else frozen)
    hist = [] if history is None else history
    v, ok, its = _run_inner(prob, v, lambda t, nodes: rhs_const[nodes], False, hist)
    return GridField(domain, v), ok, its


def _coupled_rhs(prob: _Problem, profile: PenaltyProfile):
    f, phi, shift = prob.f, prob.phi, profile.shift
    return lambda t, nodes: f[nodes] * profile(t - phi[nodes]) + shift


def outer_fixed_point(spec: ProblemSpec, domain: GridDomain, config: SolverConfig,
                      profile: Optional[PenaltyProfile] = None,
                      initial: Optional[GridField] = None) -> SolverReport:
    """Penalised solve along the epsilon schedule, warm-starting each stage.

    If ``profile`` is given only its epsilon is used (a one-stage schedule).
    """
    if config.backend == "projection":
        return projection_solve(spec, domain, config, initial)
    prob = _Problem(spec, domain, config)
    sign = source_sign(prob.f)
    if profile is not None:
        schedule = (profile.epsilon,)
    else:
        schedule = config.schedule_for(domain, prob.gamma)
    mode = config.outer_mode
    if mode == "coupled" and sign < 0:
        # the coupled local equation is monotone only when f Phi_eps is nondecreasing
        mode = "frozen"
    v = _start(spec, domain, initial)
    history: list = []
    stages = []
    gaps: list = []
    total = 0
    converged = False
    message = ""
    for stage, eps in enumerate(schedule):
        prof = PenaltyProfile(eps, sign)
        final = stage == len(schedule) - 1
        message = ""
        if mode == "coupled":
            # intermediate stages only provide warm starts
            tol = config.tol_inner if final else config.tol_inner * STAGE_SLACK
            v, ok, its = _run_inner(prob, v, _coupled_rhs(prob, prof), False, history, tol)
            total += its
            stage_gaps = []
            converged = ok
            if final:
                # one application of the frozen map certifies the fixed point
                rhs_const = prob.f * prof(v[: domain.n_interior] - prob.phi) + prof.shift
                w, ok2, its2 = _run_inner(prob, v.copy(), lambda t, nodes: rhs_const[nodes], False, [])
                total += its2
                gap = float(np.max(np.abs(w - v)))
                stage_gaps = [gap]
                converged = ok and ok2 and gap <= config.tol_outer
            if not converged:
                message = f"stage eps={eps:g}: inner converged={ok}, outer gaps {stage_gaps}"
        else:
            v, converged, its, stage_gaps, message = _frozen_stage(prob, v, prof, history)
            total += its
        gaps.extend(stage_gaps)
        stages.append((eps, GridField(domain, v.copy())))
        log.info("eps=%g converged=%s residual=%.3g", eps, converged, history[-1])
    return SolverReport(
        solution=GridField(domain, v),
        residual_history=history,
        outer_gaps=gaps,
        epsilon_used=schedule[-1],
        converged=converged,
        wall_iterations=total,
        stage_solutions=stages,
        message=message,
    )


def _frozen_stage(prob: _Problem, v: np.ndarray, prof: PenaltyProfile, history: list):
    cfg = prob.config
    n_int = prob.domain.n_interior
    theta = cfg.outer_relaxation
    gaps: list = []
    total = 0
    best = math.inf
    stalled = 0
    for j in range(cfg.max_outer):
        rhs_const = prob.f * prof(v[:n_int] - prob.phi) + prof.shift
        w, ok, its = _run_inner(prob, v.copy(), lambda t, nodes: rhs_const[nodes], False, history)
        total += its
        gap = float(np.max(np.abs(w - v)))
        gaps.append(gap)
        v = (1.0 - theta) * v + theta * w
        if gap <= cfg.tol_outer and ok:
            return v, True, total, gaps, ""
        if gap < best:
            best, stalled = gap, 0
        else:
            stalled += 1
            if stalled >= 10:
                return v, False, total, gaps, f"outer iteration stagnated at gap {best:.3g}"
    return v, False, total, gaps, "max_outer reached"


def projection_solve(spec: ProblemSpec, domain: GridDomain, config: SolverConfig,
                     initial: Optional[GridField] = None) -> SolverReport:
    """Projected iteration for ``min(u - phi, f - wrapper(Du, D^2u)) = 0``."""
    prob = _Problem(spec, domain, config)
    v = _start(spec, domain, initial)
    v[: domain.n_interior] = np.maximum(v[: domain.n_interior], prob.phi)
    history: list = []
    f = prob.f
    v, ok, its = _run_inner(prob, v, lambda t, nodes: f[nodes], True, history)
    return SolverReport(
        solution=GridField(domain, v),
        residual_history=history,
        outer_gaps=[],
        epsilon_used=None,
        converged=ok,
        wall_iterations=its,
        message="" if ok else "projection iteration hit max_inner",
    )


def solve(spec: ProblemSpec, domain: GridDomain, config: Optional[SolverConfig] = None,
          initial: Optional[GridField] = None) -> SolverReport:
    """Dispatch on ``config.backend``."""
    config = config or SolverConfig()
    if config.backend == "projection":
        return projection_solve(spec, domain, config, initial)
    return outer_fixed_point(spec, domain, config, initial=initial)
