"""Isometries of the hyperbolic plane times a line, and the invariants they cut out.

Two Killing fields whose orbits have codimension one foliate the space; the
joint invariant of the pair should then pass the equilibrium test.
"""
from equipart import KillingAlgebra, SamplePlan, check_killing_induced_equilibrium
from equipart.manifest import resolve_manifest

m = resolve_manifest("h2xr")
M, X = m.manifolds["h2xr"], m.vfields
pairs = [(("X3", "X4"), "f1"), (("X1", "X4"), "f3"), (("X1", "X2"), "f2"),
         (("X3", "X4"), "f2")]
for names, fname in pairs:
    rep = check_killing_induced_equilibrium(KillingAlgebra(M, [X[n] for n in names]),
                                            m.fields[fname], SamplePlan(samples=800))
    legs = " ".join(f"{k}={v.verdict.value}" for k, v in rep.legs.items())
    print(f"{'+'.join(names)} with {fname}: {rep.verdict.value:<11} {legs}")
