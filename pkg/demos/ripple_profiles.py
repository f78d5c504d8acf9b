"""Regions and profiles of f = cos(r) on the flat plane.

Critical circles r = k pi split the disc into annuli; inside each annulus the
Laplacian is a single-valued function of f, but a different one per annulus.
"""
import math

from equipart import Manifold, SamplePlan, ScalarField, detect_regions, extract_profiles

b = 3 * math.pi
plane = Manifold.euclidean(("x", "y"), domain=f"x^2 + y^2 < {b * b!r}",
                           box={"x": (-b, b), "y": (-b, b)})
f = ScalarField(plane, "cos(sqrt(x^2+y^2))")
dec = detect_regions(plane, f, SamplePlan(samples=2000))
print("critical values:", [round(c, 9) for c in dec.critical_values])
for prof in extract_profiles(plane, f, decomposition=dec):
    mid = prof.bins[len(prof.bins) // 2]
    print(f"region {prof.region_id}: {len(prof.bins)} bins, {prof.verdict.value}, "
          f"max spread {prof.max_spread:.1e}, at f={mid.f:+.3f} Delta f={mid.laplacian:+.4f}")
