"""Elliptic operators F(x, X), Pucci extremal operators and discrete derivatives.

All evaluators are vectorised: points have shape (N, n), matrices (N, n, n)
and gradients (N, n).  A single point/matrix is accepted and promoted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .grid import GridDomain, GridField

KINDS = (
    "trace",
    "pucci_minus",
    "pucci_plus",
    "bellman",
    "isaacs",
    "p_laplacian_normalized",
    "m_momentum",
    "special_lagrangian_perturbed",
    "recession_of",
)

# Isaacs operators are admitted only for a small ellipticity aperture 1 - lambda/Lambda
ISAACS_APERTURE = 0.1


# ---------------------------------------------------------------- derivatives

@dataclass(frozen=True)
class HessianSample:
    grad: np.ndarray
    hess: np.ndarray
    eigenvalues: np.ndarray


def gradients(field: GridField, nodes=None) -> np.ndarray:
    """Central-difference gradient at interior nodes (all by default), shape (N, n)."""
    dom = field.domain
    plus, minus = dom.axis_neighbours
    if nodes is not None:
        plus, minus = plus[nodes], minus[nodes]
    u = field.values
    return (u[plus] - u[minus]) / (2.0 * dom.spacing)


def hessians(field: GridField, nodes=None) -> np.ndarray:
    """Second central differences at interior nodes (all by default), shape (N, n, n).

    Mixed entries use the four-point diagonal formula, so the result is exactly
    symmetric.
    """
    dom = field.domain
    u = field.values
    h2 = dom.spacing**2
    plus, minus = dom.axis_neighbours
    centre = u[: dom.n_interior]
    diag = dom.diagonal_neighbours
    if nodes is not None:
        plus, minus, centre = plus[nodes], minus[nodes], centre[nodes]
        diag = {key: nb[nodes] for key, nb in diag.items()}
    n = dom.dim
    H = np.empty((len(centre), n, n))
    for k in range(n):
        H[:, k, k] = (u[plus[:, k]] - 2.0 * centre + u[minus[:, k]]) / h2
    for (k, l), nb in diag.items():
        m = (u[nb[:, 0]] - u[nb[:, 1]] - u[nb[:, 2]] + u[nb[:, 3]]) / (4.0 * h2)
        H[:, k, l] = m
        H[:, l, k] = m
    return H


def _interior_node(field: GridField, node) -> int:
    dom = field.domain
    k = int(node) if np.ndim(node) == 0 else dom.node_at(node)
    if not 0 <= k < dom.n_interior:
        raise ValueError("derivatives are only defined at interior nodes")
    return k


def discrete_gradient(field: GridField, node) -> np.ndarray:
    """Central-difference gradient at one interior node (index or coordinates)."""
    k = _interior_node(field, node)
    dom = field.domain
    plus, minus = dom.axis_neighbours
    return (field.values[plus[k]] - field.values[minus[k]]) / (2.0 * dom.spacing)


def discrete_hessian(field: GridField, node) -> HessianSample:
    k = _interior_node(field, node)
    H = hessians(field, [k])[0]
    return HessianSample(grad=discrete_gradient(field, k), hess=H, eigenvalues=sym_eigenvalues(H))


# ---------------------------------------------------------------- eigenvalues

def sym_eigenvalues(X: np.ndarray) -> np.ndarray:
    """Ascending eigenvalues of symmetric 1x1, 2x2 or 3x3 matrices in closed form."""
    X = np.asarray(X, dtype=float)
    single = X.ndim == 2
    if single:
        X = X[None]
    n = X.shape[-1]
    if n == 1:
        ev = X[:, :, 0].copy()
    elif n == 2:
        a, b, c = X[:, 0, 0], X[:, 0, 1], X[:, 1, 1]
        mean = 0.5 * (a + c)
        rad = np.hypot(0.5 * (a - c), b)
        ev = np.stack([mean - rad, mean + rad], axis=1)
    elif n == 3:
        ev = _eig3(X)
    else:
        raise ValueError("closed-form eigenvalues only for n <= 3")
    return ev[0] if single else ev


def _eig3(X: np.ndarray) -> np.ndarray:
    # trigonometric solution of the characteristic cubic, then one Newton polish
    q = np.trace(X, axis1=1, axis2=2) / 3.0
    off = X[:, 0, 1] ** 2 + X[:, 0, 2] ** 2 + X[:, 1, 2] ** 2
    diag = (X[:, 0, 0] - q) ** 2 + (X[:, 1, 1] - q) ** 2 + (X[:, 2, 2] - q) ** 2
    p = np.sqrt((diag + 2.0 * off) / 6.0)
    safe = p > 0
    B = (X - q[:, None, None] * np.eye(3)) / np.where(safe, p, 1.0)[:, None, None]
    r = np.clip(np.linalg.det(B) / 2.0, -1.0, 1.0)
    phi = np.arccos(r) / 3.0
    e3 = q + 2 * p * np.cos(phi)
    e1 = q + 2 * p * np.cos(phi + 2 * np.pi / 3)
    e2 = 3 * q - e1 - e3
    ev = np.sort(np.stack([e1, e2, e3], axis=1), axis=1)
    c2 = -np.trace(X, axis1=1, axis2=2)
    c1 = 0.5 * (np.trace(X, axis1=1, axis2=2) ** 2 - np.trace(X @ X, axis1=1, axis2=2))
    c0 = -np.linalg.det(X)
    for _ in range(2):
        pval = ((ev + c2[:, None]) * ev + c1[:, None]) * ev + c0[:, None]
        dval = (3 * ev + 2 * c2[:, None]) * ev + c1[:, None]
        step = np.where(np.abs(dval) > 1e-12 * (1 + np.abs(ev) ** 2), pval / np.where(dval == 0, 1, dval), 0.0)
        ev = ev - step
    return np.sort(ev, axis=1)


def pucci_minus(X, lam: float, Lam: float) -> np.ndarray:
    """``lam * sum(positive eigenvalues) + Lam * sum(negative eigenvalues)``."""
    _check_pair(lam, Lam)
    e = sym_eigenvalues(X)
    return lam * np.sum(np.clip(e, 0, None), axis=-1) + Lam * np.sum(np.clip(e, None, 0), axis=-1)


def pucci_plus(X, lam: float, Lam: float) -> np.ndarray:
    _check_pair(lam, Lam)
    e = sym_eigenvalues(X)
    return Lam * np.sum(np.clip(e, 0, None), axis=-1) + lam * np.sum(np.clip(e, None, 0), axis=-1)


def _check_pair(lam, Lam):
    if not (0 < lam <= Lam):
        raise ValueError(f"need 0 < lambda <= Lambda, got ({lam}, {Lam})")


def _odd_root(y: np.ndarray, m: int) -> np.ndarray:
    return np.sign(y) * np.abs(y) ** (1.0 / m)


# ---------------------------------------------------------------- operators

@dataclass(frozen=True, eq=False)
class EllipticOperator:
    """A fully nonlinear operator ``F(x, X)`` of one of the supported kinds.

    ``lam``/``Lam`` is the declared ellipticity pair (None when the kind has
    none).  ``coeff_modulus`` is ``(C_F, omega)`` for the coefficient
    oscillation bound ``|F(x,X) - F(y,X)| <= C_F omega(|x-y|) ||X||``.
    """

    kind: str
    lam: Optional[float]
    Lam: Optional[float]
    params: dict = field(default_factory=dict)
    coeff_modulus: tuple = (0.0, None)
    convex_declared: Optional[str] = None
    # rescaling F_t(x, X) = factor * F(shift + scale * x, X / factor)
    x_scale: float = 1.0
    x_shift: Optional[tuple] = None
    hess_factor: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown operator kind {self.kind!r}")
        if self.lam is not None:
            _check_pair(self.lam, self.Lam)

    @property
    def needs_gradient(self) -> bool:
        if self.kind == "recession_of":
            return self.params["base"].needs_gradient
        return self.kind == "p_laplacian_normalized"

    @property
    def uniformly_elliptic(self) -> bool:
        return self.lam is not None

    @property
    def Lambda_bound(self) -> float:
        """Upper ellipticity constant used for step-size control."""
        return self.Lam if self.Lam is not None else 1.0

    def __call__(self, x, X, grad=None):
        return evaluate(self, x, X, grad)

    def with_params(self, **kw) -> "EllipticOperator":
        return replace(self, params={**self.params, **kw})

    @property
    def rescaled(self) -> bool:
        return self.x_scale != 1.0 or self.x_shift is not None or self.hess_factor != 1.0

    def unscaled(self) -> "EllipticOperator":
        return replace(self, x_scale=1.0, x_shift=None, hess_factor=1.0)

    def map_points(self, x: np.ndarray) -> np.ndarray:
        shift = 0.0 if self.x_shift is None else np.asarray(self.x_shift, dtype=float)
        return shift + self.x_scale * x

    def normalized(self, kappa: float) -> "EllipticOperator":
        """``kappa^-1 F(x, kappa X)``; same ellipticity pair."""
        if kappa <= 0:
            raise ValueError("kappa must be positive")
        return replace(self, hess_factor=self.hess_factor / kappa)

    def scaled(self, tau: float, center) -> "EllipticOperator":
        """``tau^2 F(center + tau x, X / tau^2)``, composed with any existing rescaling."""
        if tau <= 0:
            raise ValueError("tau must be positive")
        c = np.asarray(center, dtype=float)
        shift = self.map_points(c)
        return replace(self, x_scale=self.x_scale * tau, x_shift=tuple(np.atleast_1d(shift).tolist()),
                       hess_factor=self.hess_factor * tau * tau)


def trace_operator() -> EllipticOperator:
    return EllipticOperator("trace", 1.0, 1.0, convex_declared="linear")


def pucci(sign: str, lam: float, Lam: float) -> EllipticOperator:
    kind = {"-": "pucci_minus", "+": "pucci_plus", "minus": "pucci_minus", "plus": "pucci_plus"}[sign]
    return EllipticOperator(kind, lam, Lam, convex_declared="concave" if kind == "pucci_minus" else "convex")


def _table_pair(mats: Sequence[np.ndarray]):
    spec = [np.linalg.eigvalsh(np.asarray(A, dtype=float)) for A in mats]
    return min(s[0] for s in spec), max(s[-1] for s in spec)


def bellman(table: Sequence, lam: float | None = None, Lam: float | None = None,
            coeff_modulus=(0.0, None)) -> EllipticOperator:
    """``inf_a Tr(A_a(x) X)`` over a finite coefficient table.

    Table entries are constant symmetric matrices or callables mapping an
    (N, n) point array to (N, n, n).  For callables the ellipticity pair must
    be declared.
    """
    table = list(table)
    if lam is None or Lam is None:
        if any(callable(A) for A in table):
            raise ValueError("declare (lam, Lam) for x-dependent coefficient tables")
        lam, Lam = _table_pair(table)
    return EllipticOperator("bellman", lam, Lam, {"table": tuple(table)}, coeff_modulus, "concave")


def isaacs(tables: Sequence[Sequence], lam: float, Lam: float, coeff_modulus=(0.0, None)) -> EllipticOperator:
    """``sup_b inf_a Tr(A_ab(x) X)``; rejected unless ``1 - lam/Lam <= 0.1``."""
    _check_pair(lam, Lam)
    if 1.0 - lam / Lam > ISAACS_APERTURE + 1e-15:
        raise ValueError(
            f"Isaacs operators need a small ellipticity aperture 1 - lambda/Lambda <= {ISAACS_APERTURE}"
        )
    return EllipticOperator("isaacs", lam, Lam, {"tables": tuple(tuple(t) for t in tables)}, coeff_modulus)


def p_laplacian(p: float) -> EllipticOperator:
    if p <= 1:
        raise ValueError("p must exceed 1")
    return EllipticOperator("p_laplacian_normalized", min(p - 1, 1.0), max(p - 1, 1.0), {"p": float(p)})


def m_momentum(m: int, sigma: Sequence[float]) -> EllipticOperator:
    """``sum_j (sigma_j^m + e_j^m)^(1/m) - sum_j sigma_j`` for odd ``m``.

    No ellipticity pair is declared: the slope of ``(s^m + e^m)^(1/m)`` in ``e``
    vanishes at ``e = 0`` and blows up at ``e = -s``.
    """
    if m % 2 != 1 or m < 1:
        raise ValueError(f"m must be odd, got {m}")
    sigma = tuple(float(s) for s in sigma)
    if any(s <= 0 for s in sigma):
        raise ValueError("sigma_j must be positive")
    return EllipticOperator("m_momentum", None, None, {"m": int(m), "sigma": sigma})


def special_lagrangian(h_sigma: Sequence[float]) -> EllipticOperator:
    """``sum_j h_j e_j + arctan(e_j)`` with positive weights ``h_j = h(sigma_j)``."""
    h = tuple(float(v) for v in h_sigma)
    if min(h) <= 0:
        raise ValueError("weights h(sigma_j) must be positive")
    return EllipticOperator("special_lagrangian_perturbed", min(h), max(h) + 1.0, {"h": h})


def recession_of(base: EllipticOperator) -> EllipticOperator:
    return EllipticOperator("recession_of", base.lam, base.Lam, {"base": base}, base.coeff_modulus)


def _promote(x, X, grad):
    X = np.asarray(X, dtype=float)
    single = X.ndim == 2
    if single:
        X = X[None]
    N, n = X.shape[0], X.shape[-1]
    x = np.zeros((N, n)) if x is None else np.broadcast_to(np.asarray(x, dtype=float).reshape(-1, n), (N, n))
    if grad is not None:
        grad = np.broadcast_to(np.asarray(grad, dtype=float).reshape(-1, n), (N, n))
    return x, X, grad, single


def _table_values(A, x, N, n):
    if callable(A):
        return np.broadcast_to(np.asarray(A(x), dtype=float), (N, n, n))
    return np.broadcast_to(np.asarray(A, dtype=float), (N, n, n))


def _linear_trace(A, X):
    return np.einsum("nij,nij->n", A, X)


def evaluate(op: EllipticOperator, x, X, grad=None):
    """``F(x, X)``; ``grad`` is required (and nonzero) for the normalised p-Laplacian."""
    x, X, grad, single = _promote(x, X, grad)
    if op.rescaled:
        out = op.hess_factor * _evaluate(op.unscaled(), op.map_points(x), X / op.hess_factor, grad)
    else:
        out = _evaluate(op, x, X, grad)
    return float(out[0]) if single else out


def _evaluate(op, x, X, grad):
    N, n = X.shape[0], X.shape[-1]
    kind = op.kind
    if kind == "trace":
        return np.trace(X, axis1=1, axis2=2)
    if kind == "pucci_minus":
        return pucci_minus(X, op.lam, op.Lam)
    if kind == "pucci_plus":
        return pucci_plus(X, op.lam, op.Lam)
    if kind == "bellman":
        vals = [_linear_trace(_table_values(A, x, N, n), X) for A in op.params["table"]]
        return np.min(vals, axis=0)
    if kind == "isaacs":
        outer = []
        for table in op.params["tables"]:
            outer.append(np.min([_linear_trace(_table_values(A, x, N, n), X) for A in table], axis=0))
        return np.max(outer, axis=0)
    if kind == "p_laplacian_normalized":
        if grad is None:
            raise ValueError("normalized p-Laplacian needs the gradient direction")
        norm = np.linalg.norm(grad, axis=1)
        if np.any(norm == 0):
            raise ValueError("normalized p-Laplacian is undefined at zero gradient")
        xi = grad / norm[:, None]
        return np.trace(X, axis1=1, axis2=2) + (op.params["p"] - 2.0) * np.einsum("ni,nij,nj->n", xi, X, xi)
    if kind == "m_momentum":
        return _spectral(op, sym_eigenvalues(X))
    if kind == "special_lagrangian_perturbed":
        return _spectral(op, sym_eigenvalues(X))
    if kind == "recession_of":
        return recession_limit(op.params["base"], X, x=x, grad=grad)
    raise AssertionError(kind)


def _spectral(op, e):
    if op.kind == "m_momentum":
        m = op.params["m"]
        s = np.asarray(op.params["sigma"])
        return np.sum(_odd_root(s**m + e**m, m), axis=-1) - s.sum()
    h = np.asarray(op.params["h"])
    return np.sum(h * e + np.arctan(e), axis=-1)


def shifted_evaluator(op: EllipticOperator, x, X0, grad=None) -> Callable[[np.ndarray], np.ndarray]:
    """Return ``s -> F(x, X0 - s I)`` for a batch, reusing eigen-decompositions.

    Used by node-local solves: moving the centre value of a stencil by ``t``
    shifts the discrete Hessian by ``-2t/h^2`` times the identity.
    """
    x, X0, grad, _ = _promote(x, X0, grad)
    if op.rescaled:
        inner = shifted_evaluator(op.unscaled(), op.map_points(x), X0 / op.hess_factor, grad)
        c = op.hess_factor
        return lambda s, idx=None: c * inner(np.asarray(s) / c, idx)
    N, n = X0.shape[0], X0.shape[-1]
    kind = op.kind
    if kind in ("trace",):
        tr = np.trace(X0, axis1=1, axis2=2)
        return lambda s, idx=None: (tr if idx is None else tr[idx]) - n * s
    if kind in ("pucci_minus", "pucci_plus", "m_momentum", "special_lagrangian_perturbed"):
        e = sym_eigenvalues(X0)
        lam, Lam = op.lam, op.Lam

        def f(s, idx=None):
            ee = (e if idx is None else e[idx]) - np.asarray(s)[..., None]
            if kind == "pucci_minus":
                return lam * np.clip(ee, 0, None).sum(-1) + Lam * np.clip(ee, None, 0).sum(-1)
            if kind == "pucci_plus":
                return Lam * np.clip(ee, 0, None).sum(-1) + lam * np.clip(ee, None, 0).sum(-1)
            return _spectral(op, ee)

        return f
    if kind in ("bellman", "isaacs", "p_laplacian_normalized"):
        # linear in X for each policy: Tr(A (X0 - sI)) = Tr(A X0) - s Tr(A)
        if kind == "p_laplacian_normalized":
            norm = np.linalg.norm(grad, axis=1)
            xi = grad / np.where(norm > 0, norm, 1.0)[:, None]
            xi[norm == 0] = 0.0  # callers regularise; zero direction reduces to the trace
            p = op.params["p"]
            base = np.trace(X0, axis1=1, axis2=2) + (p - 2.0) * np.einsum("ni,nij,nj->n", xi, X0, xi)
            slope = n + (p - 2.0) * np.sum(xi * xi, axis=1)
            return lambda s, idx=None: (base if idx is None else base[idx]) - (slope if idx is None else slope[idx]) * s
        tables = [op.params["table"]] if kind == "bellman" else op.params["tables"]
        pairs = []
        for table in tables:
            row = []
            for A in table:
                Av = _table_values(A, x, N, n)
                row.append((_linear_trace(Av, X0), np.trace(Av, axis1=1, axis2=2)))
            pairs.append(row)

        def f(s, idx=None):
            outer = []
            for row in pairs:
                vals = [(a if idx is None else a[idx]) - (b if idx is None else b[idx]) * s for a, b in row]
                outer.append(np.min(vals, axis=0))
            return np.max(outer, axis=0)

        return f
    if kind == "recession_of":
        eye = np.eye(n)
        return lambda s, idx=None: _evaluate(
            op, x if idx is None else x[idx],
            (X0 if idx is None else X0[idx]) - np.asarray(s)[..., None, None] * eye,
            None if grad is None else (grad if idx is None else grad[idx]),
        )
    raise AssertionError(kind)


def degenerate_factor(grad, gamma: float, grad_floor: float = 0.0) -> np.ndarray:
    """``(|grad|^2 + grad_floor^2)^(gamma/2)``; exactly ``|grad|^gamma`` when the floor is 0."""
    g = np.asarray(grad, dtype=float)
    sq = np.sum(g * g, axis=-1) + grad_floor**2
    if gamma == 0:
        return np.ones_like(sq)
    return sq ** (0.5 * gamma)


def degenerate_wrapper(op: EllipticOperator, x, grad, X, gamma: float, grad_floor: float = 0.0):
    """``(|grad|^2 + grad_floor^2)^(gamma/2) F(x, X)``."""
    if gamma < 0 or grad_floor < 0:
        raise ValueError("gamma and grad_floor must be non-negative")
    grad = np.asarray(grad, dtype=float)
    factor = degenerate_factor(grad, gamma, grad_floor)
    if np.all(factor == 0):
        return 0.0 if np.ndim(factor) == 0 else np.zeros_like(factor)
    use_grad = grad if op.needs_gradient else None
    F = evaluate(op, x, X, use_grad)
    return factor * F


# ---------------------------------------------------------------- recession

RECESSION_TAUS = (1e-2, 1e-3, 1e-4)


class RecessionDivergence(ArithmeticError):
    pass


def recession(op: EllipticOperator, tau: float, X, x=None, grad=None):
    """``tau F(x, X / tau)``."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    X = np.asarray(X, dtype=float)
    return tau * evaluate(op, x, X / tau, grad)


def recession_limit(op: EllipticOperator, X, x=None, grad=None, rtol: float = 1e-6):
    """Extrapolate ``tau F(X/tau)`` to ``tau -> 0`` from three samples.

    A Richardson step removing the ``O(tau)`` term is applied to each
    consecutive pair, and a second one removes the ``O(tau^2)`` remainder.
    The second-level value must agree with the finer first-level one to
    ``rtol``; otherwise the samples are not in the asymptotic regime.
    """
    t1, t2, t3 = RECESSION_TAUS
    s1, s2, s3 = (np.asarray(recession(op, t, X, x, grad)) for t in (t1, t2, t3))
    r12 = (t1 * s2 - t2 * s1) / (t1 - t2)
    r23 = (t2 * s3 - t3 * s2) / (t2 - t3)
    q = (t1 * t2) / (t2 * t3)
    limit = (q * r23 - r12) / (q - 1.0)
    scale = 1.0 + np.abs(limit) + np.linalg.norm(np.asarray(X).reshape(np.shape(limit) + (-1,)), axis=-1)
    if np.any(np.abs(limit - r23) > rtol * scale):
        raise RecessionDivergence("recession samples do not settle; limit may not exist")
    return float(limit) if np.ndim(limit) == 0 else limit


def recession_closed_form(op: EllipticOperator, X):
    """Known recession profiles: m-momentum -> trace, special-Lagrangian -> sum h_j e_j."""
    e = sym_eigenvalues(X)
    if op.kind == "m_momentum":
        return np.sum(e, axis=-1)
    if op.kind == "special_lagrangian_perturbed":
        return np.sum(np.asarray(op.params["h"]) * e, axis=-1)
    if op.kind in ("trace", "pucci_minus", "pucci_plus", "bellman", "isaacs"):
        return evaluate(op, None, X)
    raise ValueError(f"no closed-form recession profile for {op.kind}")


# ---------------------------------------------------------------- structure checks

def random_symmetric(rng: np.random.Generator, N: int, n: int, scale: float = 1.0) -> np.ndarray:
    A = rng.normal(scale=scale, size=(N, n, n))
    return 0.5 * (A + np.swapaxes(A, 1, 2))


def sandwich_gaps(op: EllipticOperator, x, X, Y, grad=None):
    """Return ``(F(X)-F(Y) - M^-(X-Y), M^+(X-Y) - (F(X)-F(Y)))``; both >= 0 when the Pucci sandwich holds."""
    if op.lam is None:
        raise ValueError(f"{op.kind} declares no ellipticity pair")
    d = evaluate(op, x, X, grad) - evaluate(op, x, Y, grad)
    return d - pucci_minus(X - Y, op.lam, op.Lam), pucci_plus(X - Y, op.lam, op.Lam) - d


def coefficient_oscillation(op: EllipticOperator, x, y, Xs, grad=None) -> float:
    """Sampled ``sup_X |F(x,X) - F(y,X)| / ||X||`` (operator 2-norm of X)."""
    Xs = np.asarray(Xs, dtype=float)
    N = Xs.shape[0]
    n = Xs.shape[-1]
    xa = np.broadcast_to(np.asarray(x, dtype=float), (N, n))
    ya = np.broadcast_to(np.asarray(y, dtype=float), (N, n))
    num = np.abs(evaluate(op, xa, Xs, grad) - evaluate(op, ya, Xs, grad))
    den = np.max(np.abs(sym_eigenvalues(Xs)), axis=1)
    return float(np.max(num / den))
