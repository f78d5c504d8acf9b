"""Geodesic polar coordinates and the separability of det g.

Around any point of an isotropic space d/dr ln(r sqrt(det g)) depends on r
only; the conformally deformed plane exp(y - x^2)(dx^2 + dy^2) breaks this.
"""
import math

from equipart import Manifold, PolarPlan, separability_check
from equipart.polar import build_patch, small_r_slope

cases = {
    "flat plane": (Manifold.euclidean(("x", "y")), (0.0, 0.0)),
    "round sphere": (Manifold(("r", "t"), [["1", "0"], ["0", "sin(r)^2"]],
                              domain=f"r > 0 & r < {math.pi!r}"), (math.pi / 2, 0.0)),
    "conformal plane": (Manifold(("x", "y"), [["exp(y - x^2)", "0"], ["0", "exp(y - x^2)"]]),
                        (0.0, 0.0)),
}
for name, (M, c) in cases.items():
    patch = build_patch(M, c, PolarPlan())
    rep = separability_check(M, c, patch=patch)
    slope = small_r_slope(M, c, PolarPlan(directions=4)).mean()
    print(f"{name:<16} {rep.verdict.value:<11} spread {rep.max_residual:.2e}  "
          f"Gauss diag {patch.gauss.max():.1e}  small-r slope {slope:.4f}")
