"""One-dimensional obstacle problem u'' = f above a concave parabola.

The projection backend stays within 3h^2 of the closed-form solution; the
ratios are irregular because the free-boundary point falls between nodes.
The penalised backend solves a different problem here: the parabola is not a
subsolution of the wrapped operator, so the contact set is not reproduced.
"""

import numpy as np

from obstaclelab.fixtures import obstacle_1d_quadratic
from obstaclelab.grid import build_domain
from obstaclelab.solver import SolverConfig, solve

fx = obstacle_1d_quadratic()
prev = None
for h in (1 / 32, 1 / 64, 1 / 128):
    dom = build_domain(1, h, closed=False)
    n = dom.n_interior
    exact = fx.exact(dom.coords[:n])
    proj = solve(fx.spec, dom, SolverConfig(backend="projection", tol_inner=1e-9))
    err = np.max(np.abs(proj.solution.values[:n] - exact))
    ratio = "" if prev is None else f" (ratio {prev / err:.2f})"
    print(f"h=1/{round(1 / h)}: projection error {err:.3e}{ratio}")
    prev = err

dom = build_domain(1, 1 / 64, closed=False)
pen = solve(fx.spec, dom, SolverConfig())
n = dom.n_interior
print(f"penalised backend at h=1/64: error {np.max(np.abs(pen.solution.values[:n] - fx.exact(dom.coords[:n]))):.3e}")
