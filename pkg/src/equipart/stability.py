"""Circles of revolution in warped planes ``dr^2 + f(r)^2 dtheta^2``.

The circle ``r = r0`` has geodesic curvature ``kappa = f'/f`` and the
surface has Gauss curvature ``K = -f''/f``.  Under volume-preserving
normal variations the second variation of length for ``u = cos(k theta)``
is ``(pi / f) (k^2 - c)`` with ``c = f'^2 - f f''``, so the translation-like
mode ``k = 1`` is unstable exactly when ``c > 1``.

Sign convention for variations: the perturbed curve is ``r = r0 - eps u``,
i.e. positive ``u`` moves against ``grad r``.  With ``H = div(nu) / (n - 1)``
for ``nu = grad r / |grad r|`` this makes ``A'(0) = -(n - 1) H int u dS``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np
from numpy.polynomial import legendre

from . import expr as ex
from .geometry import Manifold
from .reports import CheckReport, Verdict

__all__ = [
    "WarpedPlane", "ritore_criterion", "criterion_value", "second_variation_mode",
    "first_variation_check", "sphere_first_variation_check", "QuadratureError",
]

FIRST_VARIATION_RTOL = 1e-6
CONTROL_RTOL = 1e-4


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class WarpedPlane:
    """Metric ``dr^2 + f(r)^2 dtheta^2`` for ``r_min < r < r_max``."""

    f: ex.Expression
    r_min: float
    r_max: float
    name: str = ""

    def __post_init__(self):
        if isinstance(self.f, str):
            object.__setattr__(self, "f", ex.parse(self.f, ("r",)))
        extra = ex.variables(self.f) - {"r"}
        if extra:
            raise ValueError(f"warping function may only use r, found {sorted(extra)}")
        if not 0.0 <= self.r_min < self.r_max:
            raise ValueError("warped plane needs 0 <= r_min < r_max")
        grid = np.linspace(self.r_min, self.r_max, 257)
        if self.r_min == 0.0:
            grid = grid[1:]
        vals = self.f_values(grid)[0]
        if not np.all(vals > 0):
            bad = float(grid[np.argmax(~(vals > 0))])
            raise ValueError(f"warping function is not positive at r = {bad!r}")

    @cached_property
    def df(self) -> ex.Expression:
        return ex.differentiate(self.f, "r")

    @cached_property
    def ddf(self) -> ex.Expression:
        return ex.differentiate(self.df, "r")

    @cached_property
    def criterion_expr(self) -> ex.Expression:
        """``f'^2 - f f''``."""
        return ex.sub(ex.mul(self.df, self.df), ex.mul(self.f, self.ddf))

    def f_values(self, r) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        r = np.atleast_1d(np.asarray(r, dtype=float))
        return tuple(ex.evaluate_many([self.f, self.df, self.ddf], {"r": r}))

    def manifold(self, theta: str = "theta") -> Manifold:
        metric = [[ex.ONE, ex.ZERO], [ex.ZERO, ex.mul(self.f, self.f)]]
        lo, hi = repr(float(self.r_min)), repr(float(self.r_max))
        return Manifold(("r", theta), metric, domain=f"r > {lo} & r < {hi}",
                        box={"r": (self.r_min, self.r_max), theta: (-math.pi, math.pi)},
                        name=self.name)


def criterion_value(w: WarpedPlane, r) -> float | np.ndarray:
    """``c(r) = f'(r)^2 - f(r) f''(r)`` from the symbolic derivatives."""
    v = ex.evaluate_many(w.criterion_expr, {"r": np.atleast_1d(np.asarray(r, float))})
    return float(v[0]) if np.ndim(r) == 0 else v


def ritore_criterion(w: WarpedPlane, samples: int = 31, *, tol: float = 1e-12
                     ) -> tuple[CheckReport, np.ndarray]:
    """Evaluate ``c = f'^2 - f f''`` on a grid of the range.

    Returns the report and a ``(samples, 2)`` table of ``(r, c(r))``.  The
    verdict is UNSTABLE with the worst ``r`` as witness when ``c > 1 + tol``
    somewhere, else STABLE-CANDIDATE.  An open lower end at ``r = 0`` is
    excluded from the grid.
    """
    r = np.linspace(w.r_min, w.r_max, samples)
    if w.r_min == 0.0:
        r = np.linspace(w.r_max / samples, w.r_max, samples)
    c = criterion_value(w, r)
    table = np.column_stack([r, c])
    excess = c - 1.0
    k = int(np.argmax(excess))
    worst = float(excess[k])
    sub = {"c_max": float(c.max()), "c_min": float(c.min())}
    if worst > tol:
        return (CheckReport(Verdict.UNSTABLE, worst, tol, samples, 0, {"r": float(r[k])},
                            sub, ("circles of revolution at the witness radius have a "
                                  "negative second variation",)), table)
    return (CheckReport(Verdict.STABLE_CANDIDATE, worst, tol, samples, 0, None, sub,
                        ("f'^2 - f f'' <= 1 on the grid; stability is not proven",)), table)


def _periodic_trapezoid(values: np.ndarray) -> float:
    # equally spaced nodes on [0, 2 pi); pairwise summation via numpy is fixed-shape
    return float(np.sum(values)) * (2.0 * math.pi / len(values))


def second_variation_mode(w: WarpedPlane, r0: float, k: int, nodes: int = 512) -> float:
    """Second variation of length for ``u = cos(k theta)`` on the circle ``r = r0``.

    Quadrature of ``int (u_s^2 - (K + kappa^2) u^2) ds`` with ``ds = f dtheta``.
    """
    if k < 1:
        raise ValueError("mode number must be at least 1")
    if nodes < 512:
        raise ValueError("use at least 512 quadrature nodes")
    f, df, ddf = (float(v[0]) for v in w.f_values(r0))
    theta = 2.0 * math.pi * np.arange(nodes) / nodes
    u = np.cos(k * theta)
    u_s = -k * np.sin(k * theta) / f
    gauss = -ddf / f
    kappa = df / f
    return _periodic_trapezoid((u_s ** 2 - (gauss + kappa ** 2) * u ** 2) * f)


def _length(w: WarpedPlane, r0: float, eps: float, k: int, nodes: int) -> float:
    theta = 2.0 * math.pi * np.arange(nodes) / nodes
    if k == 0:
        u, du = np.ones(nodes), np.zeros(nodes)
    else:
        u, du = np.cos(k * theta), -k * np.sin(k * theta)
    r = r0 - eps * u
    fr = w.f_values(r)[0]
    return _periodic_trapezoid(np.sqrt((eps * du) ** 2 + fr ** 2))


def _derivative(fn, eps: float) -> float:
    """Central difference at 0, Richardson-combined from steps ``eps`` and ``2 eps``."""
    d1 = (fn(eps) - fn(-eps)) / (2 * eps)
    d2 = (fn(2 * eps) - fn(-2 * eps)) / (4 * eps)
    return (4 * d1 - d2) / 3


def first_variation_check(w: WarpedPlane, r0: float, modes: Sequence[int] = (1, 2, 3), *,
                          eps: float = 1e-4, nodes: int = 512) -> CheckReport:
    """Criticality of the circle ``r = r0`` under ``u = cos(k theta)`` perturbations.

    CONSISTENT iff ``|A'(0)| <= 1e-6 L(0)`` for every mode.  The constant
    mode ``u = 1`` (not volume preserving) is run as a control and must give
    ``A'(0) = -H L(0)`` with ``H = f'/f``; a failed control means the
    quadrature cannot be trusted and gives INCONCLUSIVE.
    """
    L0 = _length(w, r0, 0.0, 0, nodes)
    if abs(_length(w, r0, 0.0, 0, 2 * nodes) - L0) > 1e-12 * L0:
        raise QuadratureError("length quadrature did not converge")
    sub: dict[str, float] = {}
    worst, worst_k = 0.0, None
    for k in modes:
        if k < 1:
            raise ValueError("volume-preserving modes need k >= 1")
        dA = _derivative(lambda e: _length(w, r0, e, k, nodes), eps)
        rel = abs(dA) / L0
        sub[f"k={k}"] = rel
        if rel > worst or worst_k is None:
            worst, worst_k = rel, k
    f, df, _ = (float(v[0]) for v in w.f_values(r0))
    H = df / f
    control = _derivative(lambda e: _length(w, r0, e, 0, nodes), eps)
    expected = -H * L0
    ctrl_err = abs(control - expected) / max(abs(expected), 1e-300)
    sub["control_dA"] = control
    sub["control_expected"] = expected
    sub["control_rel_error"] = ctrl_err
    tol = FIRST_VARIATION_RTOL
    notes = (f"length L(0) = {L0!r}",)
    if not ctrl_err <= CONTROL_RTOL:
        return CheckReport(Verdict.INCONCLUSIVE, worst, tol, len(modes), 0, None, sub,
                           notes + ("constant-mode control disagrees with -H L(0)",))
    if worst <= tol:
        return CheckReport(Verdict.CONSISTENT, worst, tol, len(modes), 0, None, sub, notes)
    return CheckReport(Verdict.REFUTED, worst, tol, len(modes), 0,
                       {"r0": float(r0), "mode": float(worst_k)}, sub, notes)


def _sphere_area(radius: float, eps: float, l: int, nodes: int) -> float:
    """Area of ``rho = radius - eps P_l(cos t)`` (``l = 0`` means ``P_0 = 1``)."""
    x, wts = legendre.leggauss(nodes)                # x = cos t
    coef = np.zeros(l + 1)
    coef[l] = 1.0
    p = legendre.legval(x, coef)
    dp = legendre.legval(x, legendre.legder(coef)) if l > 0 else np.zeros_like(x)
    rho = radius - eps * p
    sin_t = np.sqrt(1.0 - x ** 2)
    rho_t = eps * dp * sin_t                        # d rho / dt = -eps P_l'(x) (-sin t)
    # dA = rho sqrt(rho^2 + rho_t^2) sin t dt dphi, and dx = -sin t dt
    return float(2.0 * math.pi * np.sum(wts * rho * np.sqrt(rho ** 2 + rho_t ** 2)))


def sphere_first_variation_check(radius: float = 1.0, modes: Sequence[int] = (1, 2, 3), *,
                                 eps: float = 1e-4, nodes: int = 512) -> CheckReport:
    """Round sphere in flat space under zonal perturbations ``P_l(cos t)``.

    Same criterion and control as :func:`first_variation_check`, with
    ``n = 3`` so the control must give ``A'(0) = -2 H A(0)``, ``H = 1/radius``.
    """
    A0 = _sphere_area(radius, 0.0, 0, nodes)
    sub: dict[str, float] = {}
    worst, worst_l = 0.0, None
    for l in modes:
        dA = _derivative(lambda e: _sphere_area(radius, e, l, nodes), eps)
        rel = abs(dA) / A0
        sub[f"l={l}"] = rel
        if rel > worst or worst_l is None:
            worst, worst_l = rel, l
    control = _derivative(lambda e: _sphere_area(radius, e, 0, nodes), eps)
    expected = -2.0 * (1.0 / radius) * A0
    ctrl_err = abs(control - expected) / abs(expected)
    sub.update(control_dA=control, control_expected=expected, control_rel_error=ctrl_err)
    tol = FIRST_VARIATION_RTOL
    if not ctrl_err <= CONTROL_RTOL:
        return CheckReport(Verdict.INCONCLUSIVE, worst, tol, len(modes), 0, None, sub,
                           ("constant-mode control disagrees with -2 H A(0)",))
    if worst <= tol:
        return CheckReport(Verdict.CONSISTENT, worst, tol, len(modes), 0, None, sub)
    return CheckReport(Verdict.REFUTED, worst, tol, len(modes), 0,
                       {"radius": float(radius), "mode": float(worst_l)}, sub)
