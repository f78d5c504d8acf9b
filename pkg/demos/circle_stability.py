"""Circles of revolution in warped planes dr^2 + f(r)^2 dtheta^2.

The sign of f'^2 - f f'' - 1 decides whether the translation-like mode of a
circle lowers its length at fixed enclosed area.
"""
import math

from equipart import WarpedPlane, first_variation_check, ritore_criterion, second_variation_mode

for w in (WarpedPlane("r", 0.5, 2.0, "flat"), WarpedPlane("sin(r)", 0.1, 3.0, "sphere"),
          WarpedPlane("r*(1 + r^2)", 0.5, 2.0, "r(1+r^2)")):
    rep, table = ritore_criterion(w)
    r0 = 1.0
    q = second_variation_mode(w, r0, 1)
    crit = first_variation_check(w, r0)
    print(f"{w.name:<9} {rep.verdict.value:<16} c range [{table[:, 1].min():.3f}, "
          f"{table[:, 1].max():.3f}]  Q(k=1, r0=1) = {q:+.6f}  critical: {crit.verdict.value}")
print("expected Q for r(1+r^2):", -1.5 * math.pi)
