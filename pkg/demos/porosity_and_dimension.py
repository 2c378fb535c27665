"""Porosity and box-counting dimension of the free boundary of the radial family."""

from obstaclelab.fixtures import radial_sharpness
from obstaclelab.geometry import box_dimension, dyadic_scales, extract_free_boundary, porosity_estimate
from obstaclelab.grid import build_domain, sample

fx = radial_sharpness(1.0, 0.5, 2)
dom = build_domain(2, 1 / 256)
u, phi = sample(fx.exact, dom), sample(fx.spec.obstacle, dom)
fb = extract_free_boundary(u, phi)
print(f"porosity estimate: {porosity_estimate(fb.fb_nodes, dom, dyadic_scales(dom, 4), max_centres=64):.3f}")
print(f"box dimension of the circle: {box_dimension(fb.fb_nodes, dom, dyadic_scales(dom, 5, 1 / 8), None):.3f}")
