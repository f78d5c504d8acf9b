"""Killing fields, their brackets and rank, and the foliation they induce.

The composite check tests whether a family of Killing fields of generic
orbit dimension ``n - 1`` with a joint invariant ``f`` makes ``f`` an
equilibrium function.  It reports four legs separately: Killing equation,
rank, invariance of ``f``, and the equilibrium test itself.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import root

from . import expr as ex
from .equilibrium import CONSISTENT_NOTE, SamplePlan, check_equilibrium, map_chunks, sample_domain
from .geometry import (GeometryError, Manifold, ScalarField, VectorField, _field_of,
                       _geometry_at, christoffel_from, shoot)
from .reports import CheckReport, Verdict

__all__ = [
    "KillingAlgebra", "killing_residual", "lie_bracket", "pointwise_rank",
    "invariance_residual", "check_killing_induced_equilibrium", "flow",
    "geodesic_distance", "RANK_RTOL",
]

RANK_RTOL = 1e-7
RANK_DEFICIENT_MAX = 0.01          # allowed fraction of rank-deficient samples

CLOSED_SUBGROUP_NOTE = ("unchecked hypothesis: the fields are assumed to generate a closed "
                        "subgroup of the isometry group")
RED_FLAG_NOTE = ("RED FLAG: Killing, rank and invariance legs pass but the equilibrium leg "
                 "fails")
CONVERSE_2D_NOTE = ("in dimension 2 the converse (equilibrium partition => Killing field) "
                    "is not tested")


def _vector_values(X: VectorField, pts: np.ndarray) -> np.ndarray:
    vals = ex.evaluate_many(list(X.components), X.manifold.env(pts))
    return np.stack(vals, axis=-1)


def _jacobian_values(X: VectorField, pts: np.ndarray) -> np.ndarray:
    n = X.manifold.dim
    flat = [X.jacobian_exprs[i][j] for i in range(n) for j in range(n)]
    vals = np.stack(ex.evaluate_many(flat, X.manifold.env(pts)), axis=-1)
    return vals.reshape(len(pts), n, n)


def _killing_batch(X: VectorField, pts: np.ndarray, check: bool = True) -> np.ndarray:
    M = X.manifold
    g, ginv, dg = _geometry_at(M, pts, check)
    Xv = _vector_values(X, pts)
    J = _jacobian_values(X, pts)                       # J[n, c, a] = d_a X^c
    xi = np.einsum("nbc,nc->nb", g, Xv)
    # d_a xi_b = d_a g_bc X^c + g_bc d_a X^c
    dxi = np.einsum("nabc,nc->nab", dg, Xv) + np.einsum("nbc,nca->nab", g, J)
    gam = christoffel_from(ginv, dg)
    K = dxi + np.swapaxes(dxi, 1, 2) - 2.0 * np.einsum("ncab,nc->nab", gam, xi)
    scale = 1.0 + np.abs(g).max(axis=(1, 2)) * np.abs(Xv).max(axis=1)
    return np.abs(K).max(axis=(1, 2)) / scale


def killing_residual(M: Manifold, X: VectorField, p):
    """Normalized violation of Killing's equation ``xi_{a;b} + xi_{b;a} = 0``.

    ``max |K_ab| / (1 + max|g_ab| * max|X^i|)`` with ``xi`` the lowered field.
    """
    if X.manifold is not M:
        raise GeometryError("vector field belongs to a different manifold")
    pts, single = M.points(p)
    r = _killing_batch(X, pts)
    return float(r[0]) if single else r


def lie_bracket(X: VectorField, Y: VectorField) -> VectorField:
    """``[X, Y]^i = X^j d_j Y^i - Y^j d_j X^i``, symbolic."""
    M = X.manifold
    if Y.manifold is not M:
        raise GeometryError("bracket of fields on different manifolds")
    comps = []
    for i in range(M.dim):
        acc: ex.Expression = ex.ZERO
        for j in range(M.dim):
            acc = ex.add(acc, ex.mul(X.components[j], Y.jacobian_exprs[i][j]))
            acc = ex.sub(acc, ex.mul(Y.components[j], X.jacobian_exprs[i][j]))
        comps.append(ex.simplify(acc))
    name = f"[{X.name},{Y.name}]" if X.name and Y.name else ""
    return VectorField(M, tuple(comps), name)


def _ranks(values: np.ndarray, rtol: float) -> np.ndarray:
    """Numerical rank of each ``(p, n)`` matrix in a stack."""
    s = np.linalg.svd(values, compute_uv=False)
    top = s[:, :1]
    return np.where(top[:, 0] > 0.0, np.sum(s >= rtol * top, axis=1), 0)


def pointwise_rank(M: Manifold, fields: Sequence[VectorField], p, *, rtol: float = RANK_RTOL):
    """Rank of the span of the fields at ``p`` (singular values >= ``rtol * s_max``)."""
    pts, single = M.points(p)
    M.require_domain(pts)
    mats = np.stack([_vector_values(X, pts) for X in fields], axis=1)
    r = _ranks(mats, rtol)
    return int(r[0]) if single else r


def _invariance_batch(f: ScalarField, X: VectorField, pts: np.ndarray) -> np.ndarray:
    M = f.manifold
    g, ginv, _ = _geometry_at(M, pts, check=False)
    df = np.stack(ex.evaluate_many(list(f.partials), M.env(pts)), axis=-1)
    Xv = _vector_values(X, pts)
    xf = np.einsum("ni,ni->n", Xv, df)
    nx = np.sqrt(np.einsum("ni,nij,nj->n", Xv, g, Xv))
    nd = np.sqrt(np.einsum("ni,nij,nj->n", df, ginv, df))
    return np.abs(xf) / (1.0 + nx * nd)


def invariance_residual(f: ScalarField, X: VectorField, p):
    """``|X(f)| / (1 + |X|_g |df|_g)``; zero when ``f`` is constant along ``X``."""
    M = f.manifold
    if X.manifold is not M:
        raise GeometryError("field and vector field live on different manifolds")
    pts, single = M.points(p)
    M.require_domain(pts)
    r = _invariance_batch(f, X, pts)
    return float(r[0]) if single else r


@dataclass(frozen=True)
class KillingAlgebra:
    """Candidate Killing fields whose orbits should foliate in codimension one."""

    manifold: Manifold
    fields: tuple[VectorField, ...]
    expected_rank: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "fields", tuple(self.fields))
        if self.expected_rank is None:
            object.__setattr__(self, "expected_rank", self.manifold.dim - 1)
        if len(self.fields) < self.expected_rank:
            raise ValueError(f"need at least {self.expected_rank} fields, "
                             f"got {len(self.fields)}")
        for X in self.fields:
            if X.manifold is not self.manifold:
                raise GeometryError(f"field {X.name or X} is on another manifold")


def _point(M: Manifold, x: np.ndarray) -> dict[str, float]:
    return {c: float(v) for c, v in zip(M.coords, x)}


def _max_leg(M: Manifold, pts: np.ndarray, resid: np.ndarray, tol: float,
             sub: dict[str, float]) -> CheckReport:
    k = int(np.argmax(resid))
    worst = float(resid[k])
    if worst <= tol:
        return CheckReport(Verdict.CONSISTENT, worst, tol, len(pts), 0, None, sub)
    return CheckReport(Verdict.REFUTED, worst, tol, len(pts), 0, _point(M, pts[k]), sub)


def check_killing_induced_equilibrium(algebra: KillingAlgebra, f,
                                      plan: SamplePlan = SamplePlan()) -> CheckReport:
    """Composite report with legs ``killing``, ``rank``, ``invariance``, ``equilibrium``.

    The first three legs are the hypotheses, the last is the conclusion.  The
    overall verdict is REFUTED if any leg is, else INCONCLUSIVE if any leg is,
    else CONSISTENT.
    """
    M = algebra.manifold
    f = _field_of(M, f)
    pts = sample_domain(M, plan, f)
    fields = algebra.fields
    labels = [X.name or f"X{k + 1}" for k, X in enumerate(fields)]

    kill = map_chunks(lambda c: np.stack([_killing_batch(X, c) for X in fields], axis=1),
                      pts, plan.threads)
    leg_a = _max_leg(M, pts, kill.max(axis=1), plan.tol,
                     {lab: float(kill[:, k].max()) for k, lab in enumerate(labels)})

    ranks = map_chunks(lambda c: _ranks(np.stack([_vector_values(X, c) for X in fields],
                                                 axis=1), RANK_RTOL), pts, plan.threads)
    short = ranks != algebra.expected_rank
    frac = float(np.count_nonzero(short)) / len(pts)
    rank_tol = RANK_DEFICIENT_MAX
    note = (f"rank {algebra.expected_rank} at {len(pts) - int(short.sum())} of "
            f"{len(pts)} samples",)
    if frac <= rank_tol:
        leg_b = CheckReport(Verdict.CONSISTENT, frac, rank_tol, len(pts), 0, None, {}, note)
    else:
        leg_b = CheckReport(Verdict.REFUTED, frac, rank_tol, len(pts), 0,
                            _point(M, pts[int(np.argmax(short))]), {}, note)

    inv = map_chunks(lambda c: np.stack([_invariance_batch(f, X, c) for X in fields],
                                        axis=1), pts, plan.threads)
    leg_c = _max_leg(M, pts, inv.max(axis=1), plan.tol,
                     {lab: float(inv[:, k].max()) for k, lab in enumerate(labels)})

    leg_d = check_equilibrium(M, f, plan)

    legs = {"killing": leg_a, "rank": leg_b, "invariance": leg_c, "equilibrium": leg_d}
    verdicts = [leg.verdict for leg in legs.values()]
    if Verdict.REFUTED in verdicts:
        verdict = Verdict.REFUTED
    elif Verdict.INCONCLUSIVE in verdicts:
        verdict = Verdict.INCONCLUSIVE
    else:
        verdict = Verdict.CONSISTENT
    notes = [CLOSED_SUBGROUP_NOTE]
    failed = [name for name, leg in legs.items() if not leg.passed]
    hyp_failed = [n for n in failed if n != "equilibrium"]
    if hyp_failed:
        notes.append("hypothesis failed: " + ", ".join(hyp_failed))
    elif "equilibrium" in failed:
        notes.append(RED_FLAG_NOTE)
    if verdict is Verdict.CONSISTENT:
        notes.append(CONSISTENT_NOTE)
    if M.dim == 2:
        notes.append(CONVERSE_2D_NOTE)
    witness = None
    for name in failed:
        if legs[name].witness is not None:
            witness = legs[name].witness
            break
    worst = max(leg_a.max_residual, leg_c.max_residual, leg_d.max_residual)
    return CheckReport(verdict, worst, plan.tol, len(pts), leg_d.excluded, witness,
                       {"killing": leg_a.max_residual, "rank_deficient_fraction": frac,
                        "invariance": leg_c.max_residual,
                        "equilibrium": leg_d.max_residual},
                       tuple(notes), legs)


# -- independent cross-checks -------------------------------------------------

def flow(X: VectorField, pts, t: float, steps: int = 100) -> np.ndarray:
    """Flow the points along ``X`` for time ``t`` with fixed-step RK4."""
    x = np.array(X.manifold.points(pts)[0], dtype=float)
    h = t / steps
    for _ in range(steps):
        k1 = _vector_values(X, x)
        k2 = _vector_values(X, x + 0.5 * h * k1)
        k3 = _vector_values(X, x + 0.5 * h * k2)
        k4 = _vector_values(X, x + h * k3)
        x = x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return x


def geodesic_distance(M: Manifold, p, q, *, steps: int = 200, xtol: float = 1e-12) -> float:
    """Length of the geodesic from ``p`` to ``q`` found by shooting.

    Solves ``exp_p(v) = q`` for ``v`` with a root finder, starting from the
    coordinate difference; meaningful for nearby points only.
    """
    p = np.asarray(M.points(p)[0][0], dtype=float)
    q = np.asarray(M.points(q)[0][0], dtype=float)

    n = M.dim

    def miss(v):
        # base ray plus n forward-perturbed rays in one batch for the Jacobian
        d = 1e-7 * max(1.0, float(np.max(np.abs(v))))
        v0 = np.vstack([v, v + d * np.eye(n)])
        xs, _, done = shoot(M, np.repeat(p[None], n + 1, axis=0), v0, 1.0 / steps, steps)
        if np.any(done < steps):
            return np.full(n, 1e6), np.eye(n)
        end = xs[-1]
        return end[0] - q, ((end[1:] - end[0]) / d).T

    sol = root(miss, q - p, jac=True, method="hybr", options={"xtol": xtol})
    if not sol.success or np.max(np.abs(miss(sol.x)[0])) > 1e-9:
        raise GeometryError(f"geodesic shooting did not converge: {sol.message}")
    g, _ = M.metric_arrays(p[None])
    return float(np.sqrt(sol.x @ g[0] @ sol.x))
