"""Geodesic polar coordinates around a point, built numerically.

Rays ``r -> exp_P(r v(theta))`` are integrated with RK4.  The pullback
metric ``G = J^T g J`` comes from central differences of the ray endpoints
in ``r`` and in the direction angles.  The separability test asks whether
``s = d/dr ln(r sqrt(det G))`` is independent of the direction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .equilibrium import CONSISTENT_NOTE, check_tabulated_levels
from .geometry import (GeometryError, Manifold, OutsideDomainError, integrate_geodesic,
                       rk4_step, shoot)
from .reports import CheckReport, Verdict

__all__ = [
    "PolarPlan", "PolarPatch", "build_patch", "exp_map", "polar_det",
    "separability_check", "half_r2_check", "tabulated_half_r2_check", "small_r_slope",
    "TOL_POLAR", "GAUSS_TOL",
]

TOL_POLAR = 1e-3
GAUSS_TOL = 1e-4


@dataclass(frozen=True)
class PolarPlan:
    r_max: float = 1.0
    radii: int = 20
    directions: int = 16
    steps_per_unit: int = 1000
    tol: float = TOL_POLAR
    delta: float | None = None          # finite-difference step, default 1e-4 * r_max

    def with_(self, **kw) -> "PolarPlan":
        return replace(self, **kw)


def _unit_directions(angles: np.ndarray) -> np.ndarray:
    """Unit vectors of R^n for direction angles of shape ``(K, n - 1)``."""
    if angles.shape[1] == 1:
        t = angles[:, 0]
        return np.stack([np.cos(t), np.sin(t)], axis=1)
    a, b = angles[:, 0], angles[:, 1]
    return np.stack([np.sin(a) * np.cos(b), np.sin(a) * np.sin(b), np.cos(a)], axis=1)


def _direction_grid(n: int, count: int) -> np.ndarray:
    if n == 2:
        return (2.0 * math.pi * np.arange(count) / count)[:, None]
    # polar angles away from the poles of the parameterization
    rows = max(1, int(round(math.sqrt(count))))
    cols = math.ceil(count / rows)
    polar = math.pi * np.arange(1, rows + 1) / (rows + 1)
    azim = 2.0 * math.pi * np.arange(cols) / cols
    grid = np.array([(p, a) for p in polar for a in azim])
    return grid[:count]


def _orthonormal_frame(M: Manifold, center: np.ndarray) -> np.ndarray:
    """Columns form a ``g``-orthonormal basis at ``center``."""
    g, _ = M.metric_arrays(center[None])
    M.check_metric(g)
    L = np.linalg.cholesky(g[0])
    return np.linalg.inv(L).T


def _check_dim(M: Manifold):
    if M.dim not in (2, 3):
        raise GeometryError(f"polar patches support dimension 2 or 3, not {M.dim}")


class _Rays:
    """A batch of geodesics from one point, queryable at any radius."""

    def __init__(self, M: Manifold, center: np.ndarray, dirs: np.ndarray, r_top: float,
                 steps_per_unit: int):
        self.M = M
        self.steps = max(1, math.ceil(r_top * steps_per_unit))
        self.h = r_top / self.steps
        x0 = np.repeat(center[None], len(dirs), axis=0)
        self.xs, self.vs, self.done = shoot(M, x0, dirs, self.h, self.steps)

    def at(self, r: float) -> np.ndarray:
        """Positions of every ray at radius ``r`` (NaN where the ray stopped)."""
        k = min(int(r / self.h), self.steps - 1)
        rest = r - k * self.h
        x, v = self.xs[k], self.vs[k]
        ok = np.all(np.isfinite(x), axis=1)
        out = np.full_like(x, np.nan)
        if ok.any():
            out[ok], _ = rk4_step(self.M, x[ok], v[ok], np.full(int(ok.sum()), rest))
        out[self.done < k + 1] = np.nan
        return out


def _pullback(M: Manifold, center: np.ndarray, frame: np.ndarray, angles: np.ndarray,
              radii: np.ndarray, delta: float, steps_per_unit: int):
    """``G[R, K, n, n]`` and ``det J[R, K]`` for the given radii and angles."""
    n = M.dim
    K = len(angles)
    shifted = [angles]
    for a in range(n - 1):
        for sgn in (1.0, -1.0):
            s = angles.copy()
            s[:, a] += sgn * delta
            shifted.append(s)
    all_angles = np.concatenate(shifted)
    dirs = _unit_directions(all_angles) @ frame.T
    rays = _Rays(M, center, dirs, float(np.max(radii)) + delta, steps_per_unit)
    G = np.full((len(radii), K, n, n), np.nan)
    detJ = np.full((len(radii), K), np.nan)
    for i, r in enumerate(radii):
        mid = rays.at(r)
        plus = rays.at(r + delta)[:K]
        minus = rays.at(r - delta)[:K]
        J = np.empty((K, n, n))
        J[:, :, 0] = (plus - minus) / (2 * delta)
        for a in range(n - 1):
            p = mid[K * (1 + 2 * a):K * (2 + 2 * a)]
            m = mid[K * (2 + 2 * a):K * (3 + 2 * a)]
            J[:, :, 1 + a] = (p - m) / (2 * delta)
        base = mid[:K]
        good = np.all(np.isfinite(J), axis=(1, 2)) & np.all(np.isfinite(base), axis=1)
        if good.any():
            g, _ = M.metric_arrays(base[good])
            Jg = J[good]
            G[i, good] = np.einsum("nia,nij,njb->nab", Jg, g, Jg)
            detJ[i, good] = np.linalg.det(Jg)
    return G, detJ


@dataclass(frozen=True)
class PolarPatch:
    """Tabulated polar coordinates ``(r, theta)`` around ``center``.

    Tables are indexed ``[radius, direction]``.  ``s`` is
    ``d/dr ln(r sqrt(det G))``; ``injective[k]`` is False when the Jacobian
    determinant changes sign or degenerates along ray ``k``.
    """

    manifold: Manifold
    center: np.ndarray
    frame: np.ndarray
    r_max: float
    delta: float
    radii: np.ndarray
    angles: np.ndarray
    directions: np.ndarray
    det: np.ndarray
    gauss: np.ndarray                   # |G_rr - 1|
    det_jacobian: np.ndarray
    injective: np.ndarray
    s: np.ndarray = field(repr=False)
    grr_inverse: np.ndarray = field(repr=False)

    @property
    def first_conjugate_radius(self) -> float | None:
        """Smallest radius at which some ray loses injectivity, if any."""
        sign = np.sign(self.det_jacobian[0])
        bad = ~np.isfinite(self.det_jacobian) | (np.sign(self.det_jacobian) != sign)
        rows = np.flatnonzero(bad.any(axis=1))
        return float(self.radii[rows[0]]) if rows.size else None


def build_patch(M: Manifold, center, plan: PolarPlan = PolarPlan(), *,
                radii: np.ndarray | None = None) -> PolarPatch:
    """Shoot the direction grid from ``center`` and tabulate the pullback metric."""
    _check_dim(M)
    c, _ = M.points(center)
    M.require_domain(c)
    c = c[0]
    frame = _orthonormal_frame(M, c)
    r_max = plan.r_max
    radii = (r_max * np.arange(1, plan.radii + 1) / plan.radii if radii is None
             else np.asarray(radii, dtype=float))
    r_max = float(radii.max())
    delta = plan.delta if plan.delta is not None else 1e-4 * r_max
    angles = _direction_grid(M.dim, plan.directions)
    # the r-derivative of ln det uses a wider stencil than the Jacobian
    dr = min(1e-3 * r_max, 0.5 * float(radii.min()))
    stacked = np.concatenate([radii - dr, radii, radii + dr])
    G, detJ = _pullback(M, c, frame, angles, stacked, delta, plan.steps_per_unit)
    R = len(radii)
    det_all = np.linalg.det(np.where(np.isfinite(G), G, 0.0))
    det_all[~np.all(np.isfinite(G), axis=(2, 3))] = np.nan
    with np.errstate(all="ignore"):
        # det G ~ r^(2(n-1)) near the center: difference only the smooth remainder
        n = M.dim
        smooth = 0.5 * np.log(det_all) - (n - 1) * np.log(stacked[:, None])
        s = n / radii[:, None] + (smooth[2 * R:] - smooth[:R]) / (2 * dr)
        Gm = G[R:2 * R]
        grr_inv = np.full((R, len(angles)), np.nan)
        fin = np.all(np.isfinite(Gm), axis=(2, 3)) & (det_all[R:2 * R] > 0)
        grr_inv[fin] = np.linalg.inv(Gm[fin])[:, 0, 0]
    detJ_mid = detJ[R:2 * R]
    sign0 = np.sign(detJ_mid[0])
    injective = np.all(np.isfinite(detJ_mid) & (np.sign(detJ_mid) == sign0), axis=0)
    injective &= sign0 != 0
    return PolarPatch(M, c, frame, r_max, delta, radii, angles,
                      _unit_directions(angles) @ frame.T, det_all[R:2 * R],
                      np.abs(Gm[:, :, 0, 0] - 1.0), detJ_mid, injective, s, grr_inv)


def exp_map(M: Manifold, P, direction, r: float, steps: int | None = None) -> np.ndarray:
    """``exp_P(r v)`` for a direction ``v`` (normalized to unit length)."""
    steps = steps or max(1, math.ceil(1000 * r))
    path = integrate_geodesic(M, P, direction, r, steps, richardson=False)
    if path.exited:
        raise OutsideDomainError("geodesic left the domain before reaching radius r")
    return path.endpoint


def polar_det(M: Manifold, patch: PolarPatch | PolarPlan, r: float, theta, *,
              center=None) -> float:
    """``det G`` at polar coordinates ``(r, theta)``.

    ``patch`` supplies center, frame and step size; a bare plan needs
    ``center``.  ``theta`` is one angle for n = 2 and two for n = 3.
    """
    if isinstance(patch, PolarPlan):
        if center is None:
            raise ValueError("polar_det with a plan needs a center")
        c, _ = M.points(center)
        c = c[0]
        frame = _orthonormal_frame(M, c)
        delta = patch.delta if patch.delta is not None else 1e-4 * patch.r_max
        spu = patch.steps_per_unit
    else:
        c, frame, delta, spu = patch.center, patch.frame, patch.delta, 1000
    _check_dim(M)
    ang = np.atleast_1d(np.asarray(theta, dtype=float))[None, :]
    if ang.shape[1] != M.dim - 1:
        raise ValueError(f"need {M.dim - 1} angle(s)")
    G, detJ = _pullback(M, c, frame, ang, np.array([float(r)]), delta, spu)
    if not np.isfinite(detJ[0, 0]) or detJ[0, 0] == 0.0:
        raise GeometryError("degenerate polar Jacobian (conjugate point or domain exit)")
    return float(np.linalg.det(G[0, 0]))


def _gauss_note(patch: PolarPatch) -> tuple[float, tuple[str, ...]]:
    worst = float(np.nanmax(patch.gauss)) if np.isfinite(patch.gauss).any() else math.inf
    return worst, (f"Gauss lemma diagnostic max |G_rr - 1| = {worst:.3g}",)


def _inconclusive(patch: PolarPatch, tol: float, stat: float, sub, reason: str) -> CheckReport:
    n = patch.det.size
    return CheckReport(Verdict.INCONCLUSIVE, stat, tol, n, n, None, sub, (reason,))


def _theta_spread(q: np.ndarray) -> np.ndarray:
    return np.ptp(q, axis=1) / (1.0 + np.abs(q.mean(axis=1)))


def _polar_witness(patch: PolarPatch, row: np.ndarray) -> dict[str, float]:
    i = int(np.argmax(row))
    return {"r": float(patch.radii[i])}


def separability_check(M: Manifold, P, plan: PolarPlan = PolarPlan(), *,
                       patch: PolarPatch | None = None) -> CheckReport:
    """Test that ``d/dr ln(r sqrt(det G))`` depends on ``r`` only.

    Statistic: max over radii of ``(max_theta s - min_theta s) / (1 + |mean_theta s|)``.
    Conjugate points or a failing Gauss-lemma diagnostic make the result
    INCONCLUSIVE since the tabulated coordinates are then not trustworthy.
    """
    patch = patch or build_patch(M, P, plan)
    gauss, gnote = _gauss_note(patch)
    sub = {"gauss": gauss}
    if not patch.injective.all():
        return _inconclusive(patch, plan.tol, math.nan, sub,
                             f"degenerate Jacobian along {int((~patch.injective).sum())} "
                             "ray(s): r_max is past a conjugate point or a ray left the domain")
    spread = _theta_spread(patch.s)
    stat = float(spread.max())
    sub["s_theta_spread"] = stat
    if gauss > GAUSS_TOL:
        return _inconclusive(patch, plan.tol, stat, sub,
                             f"Gauss lemma diagnostic {gauss:.3g} above {GAUSS_TOL:g}")
    if stat <= plan.tol:
        return CheckReport(Verdict.CONSISTENT, stat, plan.tol, patch.det.size, 0, None, sub,
                           gnote + (CONSISTENT_NOTE,))
    return CheckReport(Verdict.REFUTED, stat, plan.tol, patch.det.size, 0,
                       _polar_witness(patch, spread), sub, gnote)


def half_r2_check(M: Manifold, P, plan: PolarPlan = PolarPlan(), *,
                  patch: PolarPatch | None = None) -> CheckReport:
    """Test that ``f = r^2 / 2`` is an equilibrium function of the patch.

    ``(grad f)^2 = r^2 G^{rr}`` must equal ``2 f`` within ``1e-4`` (a numeric
    Gauss-lemma check; failure gives INCONCLUSIVE), and ``Delta f = r s``
    must not depend on the direction beyond ``plan.tol``.
    """
    patch = patch or build_patch(M, P, plan)
    r = patch.radii[:, None]
    gn = r ** 2 * patch.grr_inverse
    gn_dev = float(np.nanmax(np.abs(gn - r ** 2) / (1.0 + r ** 2)))
    lap = r * patch.s
    sub = {"gradnormsq_minus_2f": gn_dev}
    if not patch.injective.all():
        return _inconclusive(patch, plan.tol, math.nan, sub,
                             "degenerate Jacobian: r_max is past a conjugate point")
    spread = _theta_spread(lap)
    stat = float(spread.max())
    sub["laplacian_theta_spread"] = stat
    if not gn_dev <= GAUSS_TOL:
        return _inconclusive(patch, plan.tol, stat, sub,
                             f"(grad f)^2 differs from 2f by {gn_dev:.3g}")
    if stat <= plan.tol:
        return CheckReport(Verdict.CONSISTENT, stat, plan.tol, patch.det.size, 0, None, sub,
                           (CONSISTENT_NOTE,))
    return CheckReport(Verdict.REFUTED, stat, plan.tol, patch.det.size, 0,
                       _polar_witness(patch, spread), sub)


def tabulated_half_r2_check(patch: PolarPatch, tol: float = TOL_POLAR) -> CheckReport:
    """Run the fibrewise test on the tabulated ``r^2 / 2`` (rows = geodesic spheres)."""
    r = patch.radii[:, None]
    quantities = {"gradnormsq": r ** 2 * patch.grr_inverse, "laplacian": r * patch.s}
    return check_tabulated_levels(0.5 * patch.radii ** 2, quantities, tol,
                                  [{"r": float(x)} for x in patch.radii])


def small_r_slope(M: Manifold, P, plan: PolarPlan = PolarPlan(), *,
                  r_lo: float = 0.01, r_hi: float = 0.05, points: int = 9) -> np.ndarray:
    """Per-direction slope of ``log det G`` against ``log r`` on ``[r_lo, r_hi]``."""
    radii = np.geomspace(r_lo, r_hi, points)
    patch = build_patch(M, P, plan.with_(r_max=r_hi, delta=None), radii=radii)
    x = np.log(radii)
    y = np.log(patch.det)
    return np.polyfit(x, y, 1)[0]
