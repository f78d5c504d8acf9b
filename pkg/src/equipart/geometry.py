"""Riemannian calculus on a single coordinate chart.

Metrics, fields and everything derived from them are kept as symbolic
expressions; numbers appear only when a quantity is evaluated at points.
Functions accept either one point (a mapping ``name -> value`` or a sequence
in coordinate order) or an ``(N, n)`` array of points; single points give
scalar/vector results, arrays give stacked results.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

from . import expr as ex
from .expr import Expression, Predicate

__all__ = [
    "Manifold", "ScalarField", "VectorField", "GeodesicPath",
    "GeometryError", "OutsideDomainError", "MetricError", "NearCriticalError",
    "AccuracyWarning",
    "metric_at", "christoffel_at", "gradient", "grad_norm_sq",
    "laplace_beltrami", "laplace_beltrami_christoffel",
    "mean_curvature_level_set", "level_set_divergence", "gradient_alignment",
    "integrate_geodesic", "wedge_ratio", "EPS_CRIT",
]

EPS_CRIT = 1e-7
MINOR_TOL = 1e-12


class GeometryError(ValueError):
    pass


class OutsideDomainError(GeometryError):
    pass


class MetricError(GeometryError):
    """Metric not positive definite; ``minor`` is the failing leading minor order."""

    def __init__(self, message: str, minor: int):
        self.minor = minor
        super().__init__(message)


class NearCriticalError(GeometryError):
    pass


class AccuracyWarning(UserWarning):
    pass


def _as_expr(e, coords, lets) -> Expression:
    if isinstance(e, Expression):
        return e
    if isinstance(e, (int, float)):
        return ex.Const(e)
    return ex.parse(str(e), coords, lets)


def _det(m: list[list[Expression]]) -> Expression:
    n = len(m)
    if n == 1:
        return m[0][0]
    if n == 2:
        return ex.sub(ex.mul(m[0][0], m[1][1]), ex.mul(m[0][1], m[1][0]))
    total: Expression = ex.ZERO
    for j in range(n):
        if isinstance(m[0][j], ex.Const) and m[0][j].value == 0.0:
            continue
        minor = [row[:j] + row[j + 1:] for row in m[1:]]
        term = ex.mul(m[0][j], _det(minor))
        total = ex.add(total, term) if j % 2 == 0 else ex.sub(total, term)
    return total


def _is_zero(e: Expression) -> bool:
    return isinstance(e, ex.Const) and e.value == 0.0


class Manifold:
    """A chart ``(coords, g_ij, domain)``.

    ``metric`` entries may be expression objects or DSL strings (parsed with
    ``lets`` in scope).  ``box`` optionally maps each coordinate to a default
    sampling interval.
    """

    def __init__(self, coords: Sequence[str], metric, domain: Predicate | str | None = None,
                 lets: Mapping[str, Expression] | None = None,
                 box: Mapping[str, tuple[float, float]] | None = None,
                 name: str = ""):
        self.coords = tuple(coords)
        self.dim = len(self.coords)
        if self.dim < 2:
            raise GeometryError("manifold dimension must be at least 2")
        if len(set(self.coords)) != self.dim:
            raise GeometryError("coordinate names must be distinct")
        self.lets = dict(lets or {})
        rows = [[_as_expr(e, self.coords, self.lets) for e in row] for row in metric]
        if len(rows) != self.dim or any(len(r) != self.dim for r in rows):
            raise GeometryError(f"metric must be {self.dim}x{self.dim}")
        rows = [[ex.simplify(e) for e in row] for row in rows]
        for i in range(self.dim):
            for j in range(i + 1, self.dim):
                if rows[i][j] != rows[j][i]:
                    raise GeometryError(f"metric not symmetric in entries ({i},{j})")
        for row in rows:
            for e in row:
                extra = ex.variables(e) - set(self.coords)
                if extra:
                    raise GeometryError(f"metric uses unknown variables {sorted(extra)}")
        self.metric = tuple(tuple(r) for r in rows)
        if domain is None or isinstance(domain, str):
            domain = ex.parse_predicate(domain or "", self.coords, self.lets)
        self.domain: Predicate = domain
        self.box = dict(box) if box else None
        self.name = name

    @classmethod
    def euclidean(cls, coords: Sequence[str] = ("x", "y"), **kw) -> "Manifold":
        n = len(coords)
        metric = [[ex.ONE if i == j else ex.ZERO for j in range(n)] for i in range(n)]
        return cls(coords, metric, **kw)

    def __repr__(self):
        label = f" {self.name}" if self.name else ""
        return f"<Manifold{label} dim={self.dim} coords={','.join(self.coords)}>"

    # -- symbolic metric algebra ----------------------------------------------

    @cached_property
    def is_diagonal(self) -> bool:
        return all(_is_zero(self.metric[i][j])
                   for i in range(self.dim) for j in range(self.dim) if i != j)

    @cached_property
    def det_expr(self) -> Expression:
        m = [list(r) for r in self.metric]
        if self.is_diagonal:
            out = m[0][0]
            for i in range(1, self.dim):
                out = ex.mul(out, m[i][i])
            return out
        return _det(m)

    @cached_property
    def sqrt_det_expr(self) -> Expression:
        return ex.func("sqrt", self.det_expr)

    @cached_property
    def inverse_exprs(self) -> tuple[tuple[Expression, ...], ...]:
        n = self.dim
        m = [list(r) for r in self.metric]
        if self.is_diagonal:
            return tuple(tuple(ex.div(ex.ONE, m[i][i]) if i == j else ex.ZERO
                               for j in range(n)) for i in range(n))
        det = self.det_expr
        inv = [[ex.ZERO] * n for _ in range(n)]
        for i in range(n):
            for j in range(n):
                minor = [row[:i] + row[i + 1:] for k, row in enumerate(m) if k != j]
                cof = _det(minor) if minor else ex.ONE
                if (i + j) % 2:
                    cof = ex.neg(cof)
                inv[i][j] = ex.div(cof, det)
        return tuple(tuple(r) for r in inv)

    @cached_property
    def metric_derivative_exprs(self) -> tuple:
        """``[l][i][j] -> d g_ij / d x^l``."""
        return tuple(tuple(tuple(ex.differentiate(self.metric[i][j], c)
                                 for j in range(self.dim)) for i in range(self.dim))
                     for c in self.coords)

    @cached_property
    def _metric_fn(self):
        n = self.dim
        flat = [self.metric[i][j] for i in range(n) for j in range(n)]
        flat += [self.metric_derivative_exprs[l][i][j]
                 for l in range(n) for i in range(n) for j in range(n)]
        return ex.compile_exprs(flat, strict=False)

    # -- numeric helpers ------------------------------------------------------

    def points(self, p) -> tuple[np.ndarray, bool]:
        """Normalize ``p`` to an ``(N, n)`` array; also report whether it was single."""
        if isinstance(p, Mapping):
            missing = set(self.coords) - set(p)
            if missing:
                raise GeometryError(f"point does not bind {sorted(missing)}")
            arr = np.array([[float(p[c]) for c in self.coords]])
            return arr, True
        arr = np.asarray(p, dtype=float)
        if arr.ndim == 1:
            if arr.shape[0] != self.dim:
                raise GeometryError(f"point must have {self.dim} coordinates")
            return arr[None, :], True
        if arr.ndim != 2 or arr.shape[1] != self.dim:
            raise GeometryError(f"points must have shape (N, {self.dim})")
        return arr, False

    def env(self, pts: np.ndarray) -> dict[str, np.ndarray]:
        return {c: pts[:, k] for k, c in enumerate(self.coords)}

    def contains(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(pts)
        finite = np.all(np.isfinite(pts), axis=1)
        return finite & self.domain.evaluate_many(self.env(pts))

    def require_domain(self, pts: np.ndarray):
        inside = self.contains(pts)
        if not inside.all():
            bad = pts[np.argmin(inside)]
            raise OutsideDomainError(
                f"point {dict(zip(self.coords, bad.tolist()))} outside domain "
                f"{self.domain.text or '(all)'}")

    def metric_arrays(self, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Metric ``g[N, i, j]`` and derivatives ``dg[N, l, i, j]`` at points."""
        n, N = self.dim, len(pts)
        vals = self._metric_fn(self.env(pts))
        arr = np.empty((n * n + n ** 3, N))
        for k, v in enumerate(vals):
            arr[k] = v
        g = arr[: n * n].T.reshape(N, n, n)
        dg = arr[n * n:].T.reshape(N, n, n, n)
        return g, dg

    def check_metric(self, g: np.ndarray):
        for k in range(1, self.dim + 1):
            minors = np.linalg.det(g[:, :k, :k])
            if not np.all(minors > MINOR_TOL):
                raise MetricError(f"metric not positive definite: leading minor of order "
                                  f"{k} is {minors.min():.3g}", k)


@dataclass(frozen=True, eq=False)
class ScalarField:
    """A scalar field on a manifold; ``domain`` optionally cuts out a singular set."""

    manifold: Manifold
    expr: Expression
    domain: Predicate = field(default_factory=Predicate)
    name: str = ""

    def __post_init__(self):
        if isinstance(self.expr, str):
            object.__setattr__(self, "expr", ex.parse(self.expr, self.manifold.coords,
                                                      self.manifold.lets))
        if isinstance(self.domain, str):
            object.__setattr__(self, "domain", ex.parse_predicate(
                self.domain, self.manifold.coords, self.manifold.lets))
        extra = ex.variables(self.expr) - set(self.manifold.coords)
        if extra:
            raise GeometryError(f"field uses variables {sorted(extra)} not in manifold")

    def contains(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(pts)
        return self.manifold.contains(pts) & self.domain.evaluate_many(self.manifold.env(pts))

    def compose(self, outer: Expression, var: str = "f") -> "ScalarField":
        """``T(f)`` for an expression ``outer`` in one variable named ``var``."""
        return ScalarField(self.manifold, ex.substitute(outer, {var: self.expr}),
                           self.domain, self.name and f"T({self.name})")

    @cached_property
    def partials(self) -> tuple[Expression, ...]:
        return tuple(ex.differentiate(self.expr, c) for c in self.manifold.coords)

    @cached_property
    def hessian_exprs(self) -> tuple[tuple[Expression, ...], ...]:
        return tuple(tuple(ex.differentiate(d, c) for c in self.manifold.coords)
                     for d in self.partials)

    @cached_property
    def gradient_exprs(self) -> tuple[Expression, ...]:
        """Contravariant components ``g^{ij} d_j f``."""
        M = self.manifold
        out = []
        for i in range(M.dim):
            acc: Expression = ex.ZERO
            for j in range(M.dim):
                acc = ex.add(acc, ex.mul(M.inverse_exprs[i][j], self.partials[j]))
            out.append(acc)
        return tuple(out)

    @cached_property
    def grad_norm_sq_expr(self) -> Expression:
        acc: Expression = ex.ZERO
        for j in range(self.manifold.dim):
            acc = ex.add(acc, ex.mul(self.partials[j], self.gradient_exprs[j]))
        return acc

    @cached_property
    def laplacian_expr(self) -> Expression:
        """Divergence form ``|g|^{-1/2} d_i(|g|^{1/2} g^{ij} d_j f)``, fully symbolic."""
        M = self.manifold
        root = M.sqrt_det_expr
        acc: Expression = ex.ZERO
        for i, c in enumerate(M.coords):
            acc = ex.add(acc, ex.differentiate(ex.mul(root, self.gradient_exprs[i]), c))
        return ex.div(acc, root)

    @cached_property
    def unit_normal_divergence_expr(self) -> Expression:
        """``div(grad f / |grad f|)`` as one symbolic expression."""
        M = self.manifold
        root = M.sqrt_det_expr
        norm = ex.func("sqrt", self.grad_norm_sq_expr)
        acc: Expression = ex.ZERO
        for i, c in enumerate(M.coords):
            nu = ex.div(self.gradient_exprs[i], norm)
            acc = ex.add(acc, ex.differentiate(ex.mul(root, nu), c))
        return ex.div(acc, root)

    def values(self, exprs: Sequence[Expression], pts: np.ndarray, strict: bool = True):
        return ex.evaluate_many(list(exprs), self.manifold.env(pts), strict=strict)

    def __call__(self, p):
        pts, single = self.manifold.points(p)
        v = ex.evaluate_many(self.expr, self.manifold.env(pts))
        return float(v[0]) if single else v


@dataclass(frozen=True, eq=False)
class VectorField:
    manifold: Manifold
    components: tuple[Expression, ...]
    name: str = ""

    def __post_init__(self):
        M = self.manifold
        comps = tuple(_as_expr(c, M.coords, M.lets) for c in self.components)
        if len(comps) != M.dim:
            raise GeometryError(f"vector field needs {M.dim} components")
        for c in comps:
            extra = ex.variables(c) - set(M.coords)
            if extra:
                raise GeometryError(f"vector field uses variables {sorted(extra)} "
                                    "not in manifold")
        object.__setattr__(self, "components", tuple(ex.simplify(c) for c in comps))

    @cached_property
    def jacobian_exprs(self) -> tuple[tuple[Expression, ...], ...]:
        """``[i][j] -> d X^i / d x^j``."""
        return tuple(tuple(ex.differentiate(c, v) for v in self.manifold.coords)
                     for c in self.components)

    def __call__(self, p) -> np.ndarray:
        pts, single = self.manifold.points(p)
        vals = np.stack(ex.evaluate_many(list(self.components), self.manifold.env(pts)),
                        axis=-1)
        return vals[0] if single else vals


# -- numeric kernels ----------------------------------------------------------

def christoffel_from(ginv: np.ndarray, dg: np.ndarray) -> np.ndarray:
    """``Gamma[N, k, i, j]`` from ``g^{-1}`` and ``dg[N, l, i, j]``."""
    # lowered[N, l, i, j] = d_i g_jl + d_j g_il - d_l g_ij
    lowered = np.einsum("nijl->nlij", dg) + np.einsum("njil->nlij", dg) - dg
    return 0.5 * np.einsum("nkl,nlij->nkij", ginv, lowered)


def _frame_components(vecs: np.ndarray, gram: np.ndarray) -> np.ndarray:
    """Components of ``vecs`` in an orthonormal frame for the Gram matrix."""
    L = np.linalg.cholesky(gram)
    return np.einsum("nij,ni->nj", L, vecs)


def wedge_ratio(a: np.ndarray, b: np.ndarray, gram: np.ndarray,
                eps_abs: float = 1e-300) -> np.ndarray:
    """``|a ^ b| / (|a| |b| + eps_abs)`` with norms from ``gram``; stacked over N.

    Computed in an orthonormal frame so that nearly parallel inputs give
    residuals at rounding level instead of the square root of it.
    """
    at = _frame_components(a, gram)
    bt = _frame_components(b, gram)
    n = at.shape[1]
    acc = np.zeros(len(at))
    for i in range(n):
        for j in range(i + 1, n):
            acc += (at[:, i] * bt[:, j] - at[:, j] * bt[:, i]) ** 2
    wedge = np.sqrt(acc)
    na = np.linalg.norm(at, axis=1)
    nb = np.linalg.norm(bt, axis=1)
    return wedge / (na * nb + eps_abs)


def _geometry_at(M: Manifold, pts: np.ndarray, check: bool = True):
    if check:
        M.require_domain(pts)
    g, dg = M.metric_arrays(pts)
    if check:
        M.check_metric(g)
    ginv = np.linalg.inv(g)
    return g, ginv, dg


def _field_of(M: Manifold, f) -> ScalarField:
    if isinstance(f, ScalarField):
        if f.manifold is not M:
            raise GeometryError("field belongs to a different manifold")
        return f
    return ScalarField(M, f)


def _shape_out(value: np.ndarray, single: bool):
    if single:
        v = value[0]
        return float(v) if np.ndim(v) == 0 else v
    return value


# -- public operations --------------------------------------------------------

def metric_at(M: Manifold, p):
    """``(g, g^{-1}, det g)`` at a point (or stacked over points)."""
    pts, single = M.points(p)
    g, ginv, _ = _geometry_at(M, pts)
    det = np.linalg.det(g)
    if single:
        return g[0], ginv[0], float(det[0])
    return g, ginv, det


def christoffel_at(M: Manifold, p) -> np.ndarray:
    """``Gamma[k, i, j]`` (upper index first)."""
    pts, single = M.points(p)
    _, ginv, dg = _geometry_at(M, pts)
    gam = christoffel_from(ginv, dg)
    return gam[0] if single else gam


def _df(f: ScalarField, pts: np.ndarray) -> np.ndarray:
    return np.stack(f.values(f.partials, pts), axis=-1)


def gradient(M: Manifold, f, p) -> np.ndarray:
    f = _field_of(M, f)
    pts, single = M.points(p)
    _, ginv, _ = _geometry_at(M, pts)
    grad = np.einsum("nij,nj->ni", ginv, _df(f, pts))
    return grad[0] if single else grad


def grad_norm_sq(M: Manifold, f, p):
    f = _field_of(M, f)
    pts, single = M.points(p)
    _, ginv, _ = _geometry_at(M, pts)
    df = _df(f, pts)
    return _shape_out(np.einsum("ni,nij,nj->n", df, ginv, df), single)


def laplace_beltrami(M: Manifold, f, p):
    """Laplace-Beltrami operator via the symbolic divergence form."""
    f = _field_of(M, f)
    pts, single = M.points(p)
    M.require_domain(pts)
    return _shape_out(f.values([f.laplacian_expr], pts)[0], single)


def laplace_beltrami_christoffel(M: Manifold, f, p):
    """Same operator as ``g^{ij}(d_i d_j f - Gamma^k_ij d_k f)`` (independent path)."""
    f = _field_of(M, f)
    pts, single = M.points(p)
    _, ginv, dg = _geometry_at(M, pts)
    gam = christoffel_from(ginv, dg)
    n = M.dim
    flat = f.values([f.hessian_exprs[i][j] for i in range(n) for j in range(n)], pts)
    hess = np.stack(flat, axis=-1).reshape(len(pts), n, n)
    df = _df(f, pts)
    cov = hess - np.einsum("nkij,nk->nij", gam, df)
    return _shape_out(np.einsum("nij,nij->n", ginv, cov), single)


def _require_regular(M: Manifold, f: ScalarField, pts: np.ndarray, eps_crit: float):
    _, ginv, _ = _geometry_at(M, pts)
    df = _df(f, pts)
    norm = np.sqrt(np.einsum("ni,nij,nj->n", df, ginv, df))
    if np.any(norm <= eps_crit):
        k = int(np.argmin(norm))
        raise NearCriticalError(
            f"|grad f| = {norm[k]:.3g} <= {eps_crit:g} at "
            f"{dict(zip(M.coords, pts[k].tolist()))}; level set is not regular there")
    return norm


def level_set_divergence(M: Manifold, f, p, *, eps_crit: float = EPS_CRIT):
    """``div(grad f / |grad f|)`` without the ``1/(n-1)`` normalization."""
    f = _field_of(M, f)
    pts, single = M.points(p)
    _require_regular(M, f, pts, eps_crit)
    return _shape_out(f.values([f.unit_normal_divergence_expr], pts)[0], single)


def mean_curvature_level_set(M: Manifold, f, p, *, eps_crit: float = EPS_CRIT,
                             method: str = "divergence"):
    """Mean curvature ``H = div(grad f/|grad f|) / (n-1)`` of the level set through p.

    ``method="expansion"`` instead uses
    ``(Delta f / |grad f| - grad f . grad |grad f| / |grad f|^2) / (n-1)``.
    Refuses (:class:`NearCriticalError`) where ``|grad f| <= eps_crit``.
    """
    f = _field_of(M, f)
    pts, single = M.points(p)
    norm = _require_regular(M, f, pts, eps_crit)
    n = M.dim
    if method == "divergence":
        div = f.values([f.unit_normal_divergence_expr], pts)[0]
    elif method == "expansion":
        A = f.grad_norm_sq_expr
        exprs = [f.laplacian_expr] + [ex.differentiate(A, c) for c in M.coords]
        exprs += list(f.gradient_exprs)
        vals = f.values(exprs, pts)
        lap = vals[0]
        dA = np.stack(vals[1:1 + n], axis=-1)
        grad = np.stack(vals[1 + n:], axis=-1)
        # d_j |grad f| = d_j A / (2 |grad f|)
        directional = np.einsum("ni,ni->n", grad, dA) / (2.0 * norm)
        div = lap / norm - directional / norm ** 2
    else:
        raise ValueError(f"unknown method {method!r}")
    return _shape_out(div / (n - 1), single)


def gradient_alignment(M: Manifold, f, p, *, eps_crit: float = EPS_CRIT):
    """Sine of the angle between ``D_{grad f} grad f`` and ``grad f`` (0 if parallel)."""
    f = _field_of(M, f)
    pts, single = M.points(p)
    _require_regular(M, f, pts, eps_crit)
    g, ginv, dg = _geometry_at(M, pts)
    gam = christoffel_from(ginv, dg)
    n = M.dim
    exprs = list(f.gradient_exprs)
    exprs += [ex.differentiate(f.gradient_exprs[k], c) for k in range(n) for c in M.coords]
    vals = f.values(exprs, pts)
    V = np.stack(vals[:n], axis=-1)
    dV = np.stack(vals[n:], axis=-1).reshape(len(pts), n, n)  # [N, k, i] = d_i V^k
    W = np.einsum("ni,nki->nk", V, dV) + np.einsum("nkij,ni,nj->nk", gam, V, V)
    return _shape_out(wedge_ratio(V, W, g), single)


# -- geodesics ----------------------------------------------------------------

def _geodesic_accel(M: Manifold, x: np.ndarray, v: np.ndarray) -> np.ndarray:
    g, dg = M.metric_arrays(x)
    gam = christoffel_from(np.linalg.inv(g), dg)
    return -np.einsum("nkij,ni,nj->nk", gam, v, v)


def rk4_step(M: Manifold, x: np.ndarray, v: np.ndarray, h):
    """One classical RK4 step of the geodesic equation; ``h`` may be per-row."""
    h = np.asarray(h, dtype=float)
    hh = h[:, None] if h.ndim == 1 else h
    k1x, k1v = v, _geodesic_accel(M, x, v)
    k2x = v + 0.5 * hh * k1v
    k2v = _geodesic_accel(M, x + 0.5 * hh * k1x, k2x)
    k3x = v + 0.5 * hh * k2v
    k3v = _geodesic_accel(M, x + 0.5 * hh * k2x, k3x)
    k4x = v + hh * k3v
    k4v = _geodesic_accel(M, x + hh * k3x, k4x)
    x_new = x + hh / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
    v_new = v + hh / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
    return x_new, v_new


def shoot(M: Manifold, x0: np.ndarray, v0: np.ndarray, h: float, steps: int):
    """Integrate a batch of geodesics with fixed step ``h``.

    Returns positions and velocities of shape ``(steps + 1, K, n)`` and the
    number of completed steps per ray; a ray stops when it leaves the domain
    (its later entries are NaN).
    """
    x = np.array(x0, dtype=float)
    v = np.array(v0, dtype=float)
    K = len(x)
    xs = np.full((steps + 1, K, M.dim), np.nan)
    vs = np.full_like(xs, np.nan)
    xs[0], vs[0] = x, v
    done = np.full(K, steps)
    alive = np.ones(K, dtype=bool)
    for s in range(1, steps + 1):
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        xn, vn = rk4_step(M, x[idx], v[idx], h)
        ok = M.contains(xn) & np.all(np.isfinite(vn), axis=1)
        if not ok.all():
            lost = idx[~ok]
            done[lost] = s - 1
            alive[lost] = False
        keep = idx[ok]
        x[keep], v[keep] = xn[ok], vn[ok]
        xs[s, keep], vs[s, keep] = xn[ok], vn[ok]
    return xs, vs, done


@dataclass
class GeodesicPath:
    points: np.ndarray       # (steps + 1, n)
    velocities: np.ndarray   # (steps + 1, n)
    speed_drift: float       # max |(|v|_g) - 1|
    error_estimate: float    # |endpoint(N) - endpoint(2N)|, Richardson-scaled
    exited: bool
    accurate: bool

    @property
    def endpoint(self) -> np.ndarray:
        return self.points[-1]


def _unit(M: Manifold, p: np.ndarray, v: np.ndarray) -> np.ndarray:
    g, _ = M.metric_arrays(p[None, :])
    speed = math.sqrt(float(v @ g[0] @ v))
    if speed == 0.0:
        raise GeometryError("initial velocity is zero")
    return v / speed


def integrate_geodesic(M: Manifold, p, v, length: float, steps: int = 1000,
                       *, richardson: bool = True) -> GeodesicPath:
    """Unit-speed geodesic from ``p`` in direction ``v`` by fixed-step RK4.

    The path is truncated (``exited=True``) if it leaves the domain.  With
    ``richardson`` the integration is repeated at half the step to estimate
    the endpoint error.
    """
    pts, _ = M.points(p)
    M.require_domain(pts)
    x0 = pts[0]
    v0 = _unit(M, x0, np.asarray(v, dtype=float))
    h = length / steps
    xs, vs, done = shoot(M, x0[None], v0[None], h, steps)
    last = int(done[0])
    exited = last < steps
    xs, vs = xs[: last + 1, 0], vs[: last + 1, 0]
    g, _ = M.metric_arrays(xs)
    speeds = np.sqrt(np.einsum("ni,nij,nj->n", vs, g, vs))
    drift = float(np.max(np.abs(speeds - 1.0)))
    err = float("nan")
    if richardson and not exited:
        xs2, _, done2 = shoot(M, x0[None], v0[None], h / 2, 2 * steps)
        if done2[0] == 2 * steps:
            err = float(np.max(np.abs(xs2[-1, 0] - xs[-1]))) * 16.0 / 15.0
    accurate = drift <= 1e-4
    if not accurate:
        warnings.warn(f"geodesic speed drift {drift:.3g} exceeds 1e-4", AccuracyWarning,
                      stacklevel=2)
    return GeodesicPath(xs, vs, drift, err, exited, accurate)
