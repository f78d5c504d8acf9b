"""Which scalar fields have level sets on which (grad f)^2 and Delta f are constant?

Runs the sampled rank test on a few fields in flat space and on the
hyperbolic plane times a line, then shows a failing case with its witness.
"""
from equipart import Manifold, SamplePlan, ScalarField, check_equilibrium

space = Manifold.euclidean(("x", "y", "z"), box={c: (-1, 1) for c in "xyz"})
for expr in ("x", "x^2 + y^2", "x^2 + y^2 + z^2", "x^2 + 2*y^2"):
    rep = check_equilibrium(space, expr)
    print(f"R^3  {expr:<18} {rep.verdict.value:<11} max residual {rep.max_residual:.2e}")

h2xr = Manifold(("x", "y", "z"),
                [["4/(2 - x^2 - y^2)^2", "0", "0"], ["0", "4/(2 - x^2 - y^2)^2", "0"],
                 ["0", "0", "1"]],
                domain="x^2 + y^2 < 2", box={"x": (-2, 2), "y": (-2, 2), "z": (0, 1)})
singular = ScalarField(h2xr, "(x^2 + y^2 - 2)/y", domain="y^2 > 0.0025")
for f in ("x^2 + y^2", "z", singular, "x + z^2"):
    rep = check_equilibrium(h2xr, f, SamplePlan(samples=1000))
    label = f if isinstance(f, str) else "(x^2 + y^2 - 2)/y"
    print(f"H2xR {label:<18} {rep.verdict.value:<11} witness {rep.witness}")
