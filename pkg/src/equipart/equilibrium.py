"""Equilibrium-function checks: fibrewise dependence, regions, profiles.

A field ``f`` is tested through the rank condition on differentials: ``df``
must be parallel to both ``d((grad f)^2)`` and ``d(Delta f)`` at every sampled
point.  The residual at a point is the normalized wedge ``|da ^ db| /
(|da| |db|)`` measured with the metric on covectors.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree
from scipy.stats import qmc

from . import expr as ex
from .geometry import EPS_CRIT, Manifold, ScalarField, _field_of, wedge_ratio
from .reports import CheckReport, Verdict

__all__ = [
    "SamplePlan", "SamplingError", "Region", "RegionDecomposition", "ProfileBin",
    "RegionProfile",
    "sample_domain", "dependence_residual", "check_equilibrium", "detect_regions",
    "extract_profiles", "check_tabulated_levels", "map_chunks",
]

CHUNK = 512
CONSISTENT_NOTE = ("CONSISTENT = no counterexample above tolerance at the sampled "
                   "points; not a proof of the fibrewise condition")


class SamplingError(RuntimeError):
    pass


@dataclass(frozen=True)
class SamplePlan:
    """Deterministic sampling plan.  ``box`` defaults to the manifold's box."""

    samples: int = 2000
    seed: int = 42
    box: Mapping[str, tuple[float, float]] | None = None
    eps_crit: float = EPS_CRIT
    max_rounds: int = 64
    tol: float = 1e-8
    eps_abs: float = 1e-300
    threads: int = 1

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError("a sample plan needs at least one sample")

    def with_(self, **kw) -> "SamplePlan":
        return replace(self, **kw)


def map_chunks(fn: Callable[[np.ndarray], np.ndarray], pts: np.ndarray,
               threads: int = 1) -> np.ndarray:
    """Apply ``fn`` to fixed-size chunks of ``pts`` and concatenate in order.

    Chunk boundaries do not depend on ``threads``, so results are bitwise
    identical for any worker count.
    """
    chunks = [pts[i:i + CHUNK] for i in range(0, len(pts), CHUNK)]
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(fn, chunks))
    else:
        parts = [fn(c) for c in chunks]
    return np.concatenate(parts, axis=0) if parts else np.empty((0,))


def _box_bounds(M: Manifold, plan: SamplePlan) -> tuple[np.ndarray, np.ndarray]:
    box = plan.box or M.box
    if box is None:
        raise SamplingError("no sampling box: give one in the plan or on the manifold")
    missing = set(M.coords) - set(box)
    if missing:
        raise SamplingError(f"sampling box lacks coordinates {sorted(missing)}")
    lo = np.array([float(box[c][0]) for c in M.coords])
    hi = np.array([float(box[c][1]) for c in M.coords])
    if np.any(hi <= lo):
        raise SamplingError("sampling box has an empty side")
    return lo, hi


def sample_domain(M: Manifold, plan: SamplePlan, f: ScalarField | None = None) -> np.ndarray:
    """``plan.samples`` points of the domain (and of ``f``'s domain cut, if any).

    Scrambled Halton points in the box, filtered by the domain predicate; the
    sequence is a deterministic function of (seed, box, samples).
    """
    lo, hi = _box_bounds(M, plan)
    sampler = qmc.Halton(d=M.dim, scramble=True, seed=plan.seed)
    contains = f.contains if f is not None else M.contains
    batch = max(plan.samples, 64)
    accepted: list[np.ndarray] = []
    count = 0
    for _ in range(plan.max_rounds):
        u = sampler.random(batch)
        pts = lo + u * (hi - lo)
        ok = pts[contains(pts)]
        accepted.append(ok)
        count += len(ok)
        if count >= plan.samples:
            return np.concatenate(accepted)[: plan.samples]
    if count == 0:
        raise SamplingError("sampling box does not intersect the domain")
    raise SamplingError(f"rejection budget exhausted: {count} of {plan.samples} points "
                        f"after {plan.max_rounds} rounds (domain too thin in box)")


def _covector_gram(M: Manifold, pts: np.ndarray) -> np.ndarray:
    g, _ = M.metric_arrays(pts)
    M.check_metric(g)
    return np.linalg.inv(g)


def dependence_residual(M: Manifold, a, b, p, *, eps_abs: float = 1e-300):
    """``|da ^ db| / (|da| |db| + eps_abs)`` at ``p``: 0 iff the differentials are parallel.

    A vanishing differential gives 0 (the guard keeps the ratio finite); callers
    decide separately whether such points count as excluded.
    """
    a, b = _field_of(M, a), _field_of(M, b)
    pts, single = M.points(p)
    M.require_domain(pts)
    da = np.stack(a.values(a.partials, pts), axis=-1)
    db = np.stack(b.values(b.partials, pts), axis=-1)
    res = wedge_ratio(da, db, _covector_gram(M, pts), eps_abs)
    return float(res[0]) if single else res


def _equilibrium_kernel(M: Manifold, f: ScalarField, eps_abs: float):
    """Per-chunk evaluator returning columns (|df|, res_gradnormsq, res_laplacian)."""
    n = M.dim
    A, B = f.grad_norm_sq_expr, f.laplacian_expr
    exprs = list(f.partials)
    exprs += [ex.differentiate(A, c) for c in M.coords]
    exprs += [ex.differentiate(B, c) for c in M.coords]
    compiled = ex.compile_exprs(exprs, strict=True)

    def run(pts: np.ndarray) -> np.ndarray:
        vals = compiled(M.env(pts))
        cols = np.empty((len(pts), 3 * n))
        for k, v in enumerate(vals):
            cols[:, k] = v
        df, dA, dB = cols[:, :n], cols[:, n:2 * n], cols[:, 2 * n:]
        gram = _covector_gram(M, pts)
        norm = np.sqrt(np.einsum("ni,nij,nj->n", df, gram, df))
        out = np.empty((len(pts), 3))
        out[:, 0] = norm
        out[:, 1] = wedge_ratio(df, dA, gram, eps_abs)
        out[:, 2] = wedge_ratio(df, dB, gram, eps_abs)
        return out

    return run


def _point(M: Manifold, x: np.ndarray) -> dict[str, float]:
    return {c: float(v) for c, v in zip(M.coords, x)}


def check_equilibrium(M: Manifold, f, plan: SamplePlan = SamplePlan()) -> CheckReport:
    """Sample the domain and test whether ``(grad f)^2`` and ``Delta f`` depend on ``f``.

    Points with ``|df| <= eps_crit`` are excluded; more than half excluded
    gives INCONCLUSIVE.  The witness of a REFUTED report is the sample with
    the largest residual (first one on ties), so the verdict does not depend on
    evaluation order.
    """
    f = _field_of(M, f)
    pts = sample_domain(M, plan, f)
    cols = map_chunks(_equilibrium_kernel(M, f, plan.eps_abs), pts, plan.threads)
    norm, r_grad, r_lap = cols[:, 0], cols[:, 1], cols[:, 2]
    excluded = norm <= plan.eps_crit
    used = int(np.count_nonzero(~excluded))
    resid = np.where(excluded, -np.inf, np.maximum(r_grad, r_lap))
    sub = {
        "gradnormsq": float(np.max(r_grad[~excluded])) if used else 0.0,
        "laplacian": float(np.max(r_lap[~excluded])) if used else 0.0,
    }
    max_res = float(np.max(resid)) if used else 0.0
    n_excl = len(pts) - used
    if n_excl > 0.5 * len(pts):
        return CheckReport(Verdict.INCONCLUSIVE, max_res, plan.tol, len(pts), n_excl,
                           None, sub, (f"{n_excl} of {len(pts)} samples within eps_crit "
                                       "of the critical set",))
    if max_res <= plan.tol:
        return CheckReport(Verdict.CONSISTENT, max_res, plan.tol, len(pts), n_excl,
                           None, sub, (CONSISTENT_NOTE,))
    k = int(np.argmax(resid))
    return CheckReport(Verdict.REFUTED, max_res, plan.tol, len(pts), n_excl,
                       _point(M, pts[k]), sub)


# -- region decomposition -----------------------------------------------------

@dataclass(frozen=True)
class Region:
    """Connected set of samples between two consecutive critical values."""

    id: int
    interval: tuple[float, float]
    indices: np.ndarray


@dataclass(frozen=True)
class RegionDecomposition:
    critical_values: tuple[float, ...]
    critical_points: np.ndarray
    points: np.ndarray
    f_values: np.ndarray
    labels: np.ndarray          # region id per sample
    regions: tuple[Region, ...]

    @property
    def intervals(self) -> tuple[tuple[float, float], ...]:
        return tuple(sorted({r.interval for r in self.regions}))


def _newton_critical(M: Manifold, f: ScalarField, seeds: np.ndarray, eps_crit: float,
                     scale: float, iters: int = 60) -> np.ndarray:
    """Refine seeds toward ``df = 0`` with pseudo-inverse Newton steps."""
    n = M.dim
    grad_fn = ex.compile_exprs(list(f.partials), strict=False)
    hess_fn = ex.compile_exprs([f.hessian_exprs[i][j] for i in range(n) for j in range(n)],
                               strict=False)

    def grad(x):
        return np.stack([np.broadcast_to(v, len(x)) for v in grad_fn(M.env(x))], axis=-1)

    def metric_norm(x, d):
        g, _ = M.metric_arrays(x)
        with np.errstate(all="ignore"):
            return np.sqrt(np.abs(np.einsum("ni,nij,nj->n", d, np.linalg.inv(g), d)))

    x = seeds.copy()
    d = grad(x)
    gn = metric_norm(x, d)
    for _ in range(iters):
        active = np.isfinite(gn) & (gn > 1e-3 * eps_crit)
        if not active.any():
            break
        idx = np.flatnonzero(active)
        xa, da = x[idx], d[idx]
        hv = np.stack([np.broadcast_to(v, len(xa)) for v in hess_fn(M.env(xa))], axis=-1)
        H = hv.reshape(len(xa), n, n)
        if not np.all(np.isfinite(H)):
            H = np.nan_to_num(H)
        step = -np.einsum("nij,nj->ni", np.linalg.pinv(H, rcond=1e-10), da)
        length = np.linalg.norm(step, axis=1)
        cap = 0.1 * scale
        step *= np.minimum(1.0, cap / np.maximum(length, 1e-300))[:, None]
        improved = np.zeros(len(idx), dtype=bool)
        for _halving in range(8):
            trial = xa + step
            inside = f.contains(trial)
            dt = np.full_like(da, np.nan)
            if inside.any():
                dt[inside] = grad(trial[inside])
            gt = np.full(len(idx), np.inf)
            if inside.any():
                gt[inside] = metric_norm(trial[inside], dt[inside])
            better = np.isfinite(gt) & (gt < gn[idx]) & ~improved
            sel = idx[better]
            x[sel], d[sel], gn[sel] = trial[better], dt[better], gt[better]
            improved |= better
            if improved.all():
                break
            step[~improved] *= 0.5
        gn[idx[~improved]] = np.where(gn[idx[~improved]] <= eps_crit,
                                      gn[idx[~improved]], np.nan)
    ok = np.isfinite(gn) & (gn <= eps_crit)
    return x[ok]


def _cluster(values: np.ndarray, width: float) -> list[float]:
    if len(values) == 0:
        return []
    v = np.sort(values)
    groups, start = [], 0
    for k in range(1, len(v) + 1):
        if k == len(v) or v[k] - v[k - 1] > width:
            groups.append(float(np.median(v[start:k])))
            start = k
    return groups


def _segment_extreme(fn, a: np.ndarray, b: np.ndarray, t_lo: np.ndarray,
                     t_hi: np.ndarray, sign: float, iters: int = 60) -> np.ndarray:
    """Vectorized golden-section minimum of ``sign * f`` on segment parameters."""
    gr = (math.sqrt(5.0) - 1.0) / 2.0
    lo, hi = t_lo.copy(), t_hi.copy()

    def val(t):
        return sign * fn(a + t[:, None] * (b - a))

    c = hi - gr * (hi - lo)
    d = lo + gr * (hi - lo)
    fc, fd = val(c), val(d)
    for _ in range(iters):
        left = fc < fd
        hi = np.where(left, d, hi)
        lo = np.where(left, lo, c)
        d_new = np.where(left, c, lo + gr * (hi - lo))
        c_new = np.where(left, hi - gr * (hi - lo), d)
        fd_new = np.where(left, fc, np.nan)
        fc_new = np.where(left, np.nan, fd)
        need_c = left
        need_d = ~left
        if need_c.any():
            fc_new[need_c] = val(c_new)[need_c]
        if need_d.any():
            fd_new[need_d] = val(d_new)[need_d]
        c, d, fc, fd = c_new, d_new, fc_new, fd_new
    return sign * np.minimum(fc, fd)


def detect_regions(M: Manifold, f, plan: SamplePlan = SamplePlan(), *,
                   neighbors: int = 8, segment_points: int = 17,
                   seed_fraction: float = 0.15) -> RegionDecomposition:
    """Critical values of ``f`` and the connected regions between them.

    Critical points are found by Newton refinement of the lowest-gradient
    samples (a sampler alone never lands on a measure-zero critical set);
    their values are clustered with width ``1e-3 * (f range)``.  Samples in
    the same open interval of regular values are joined when the chord between
    them stays in the domain and never reaches a critical value; connected
    components of that graph are the regions.
    """
    f = _field_of(M, f)
    if plan.samples < 1000:
        raise ValueError("region detection needs a plan with at least 1000 samples")
    pts = sample_domain(M, plan, f)
    fv = ex.evaluate_many(f.expr, M.env(pts))
    lo, hi = _box_bounds(M, plan)
    scale = float(np.max(hi - lo))
    f_range = float(np.ptp(fv)) or 1.0

    # critical values
    partials = ex.compile_exprs(list(f.partials), strict=False)
    df = np.stack([np.broadcast_to(v, len(pts)) for v in partials(M.env(pts))], axis=-1)
    gram = _covector_gram(M, pts)
    norm = np.sqrt(np.einsum("ni,nij,nj->n", df, gram, df))
    n_seeds = min(len(pts), max(20, int(seed_fraction * len(pts))))
    order = np.argsort(norm, kind="stable")[:n_seeds]
    crit_pts = _newton_critical(M, f, pts[order], plan.eps_crit, scale)
    crit_vals = ex.evaluate_many(f.expr, M.env(crit_pts)) if len(crit_pts) else np.empty(0)
    critical = _cluster(crit_vals, 1e-3 * f_range)

    # intervals of regular values
    fmin, fmax = float(fv.min()), float(fv.max())
    inner = [c for c in critical if fmin < c < fmax]
    below = [c for c in critical if c <= fmin]
    above = [c for c in critical if c >= fmax]
    edges = [below[-1] if below else fmin] + inner + [above[0] if above else fmax]
    interval_of = np.searchsorted(np.array(inner), fv, side="right")
    tau = 1e-9 * f_range

    # neighbour graph in box-normalized coordinates
    unit = (pts - lo) / (hi - lo)
    k = min(neighbors + 1, len(pts))
    _, nbr = cKDTree(unit).query(unit, k=k)
    rows = np.repeat(np.arange(len(pts)), k - 1)
    cols = nbr[:, 1:].ravel()
    same = interval_of[rows] == interval_of[cols]
    rows, cols = rows[same], cols[same]
    keep = rows < cols
    rows, cols = rows[keep], cols[keep]

    f_lenient = ex.compile_exprs([f.expr], strict=False)

    def fval(x):
        return np.broadcast_to(f_lenient(M.env(x))[0], len(x)).astype(float)

    ts = np.linspace(0.0, 1.0, segment_points)
    a, b = pts[rows], pts[cols]
    seg = a[:, None, :] + ts[None, :, None] * (b - a)[:, None, :]
    flat = seg.reshape(-1, M.dim)
    inside = f.contains(flat).reshape(len(rows), segment_points).all(axis=1)
    grid = fval(flat).reshape(len(rows), segment_points)
    iv = interval_of[rows]
    low_bound = np.array(edges)[iv]
    high_bound = np.array(edges)[iv + 1]
    has_low = (iv > 0) | bool(below)
    has_high = (iv < len(inner)) | bool(above)
    valid = inside & np.all(np.isfinite(grid), axis=1)
    band = 0.05 * f_range
    for sign, bound, has in ((1.0, low_bound, has_low), (-1.0, high_bound, has_high)):
        gap = sign * (grid - bound[:, None])
        gmin = gap.min(axis=1)
        valid &= ~has | (gmin > tau)
        near = valid & has & (gmin < band)
        if near.any():
            j = np.argmin(gap[near], axis=1)
            t_lo = ts[np.maximum(j - 1, 0)]
            t_hi = ts[np.minimum(j + 1, segment_points - 1)]
            ext = _segment_extreme(fval, a[near], b[near], t_lo, t_hi, sign)
            valid[np.flatnonzero(near)] &= sign * (ext - bound[near]) > tau
    rows, cols = rows[valid], cols[valid]
    graph = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(pts), len(pts)))
    _, comp = connected_components(graph, directed=False)

    # deterministic region ids: by interval, then by first sample index
    keys = {}
    for idx in range(len(pts)):
        keys.setdefault(comp[idx], (int(interval_of[idx]), idx))
    ordered = sorted(keys, key=lambda c: keys[c])
    relabel = {c: r for r, c in enumerate(ordered)}
    labels = np.array([relabel[c] for c in comp])
    regions = tuple(
        Region(r, (edges[keys[c][0]], edges[keys[c][0] + 1]), np.flatnonzero(labels == r))
        for c, r in relabel.items())
    regions = tuple(sorted(regions, key=lambda reg: reg.id))
    return RegionDecomposition(tuple(critical), crit_pts, pts, fv, labels, regions)


# -- profiles -----------------------------------------------------------------

@dataclass(frozen=True)
class ProfileBin:
    f: float
    gradnormsq: float
    laplacian: float
    spread: float
    count: int
    indices: np.ndarray = field(repr=False, compare=False)


@dataclass(frozen=True)
class RegionProfile:
    """Tabulated ``F(f) = (grad f)^2`` and ``G(f) = Delta f`` on one region."""

    region_id: int
    interval: tuple[float, float]
    bins: tuple[ProfileBin, ...]
    verdict: Verdict
    offending_bin: int | None
    f_values: np.ndarray = field(repr=False, compare=False)
    gradnormsq: np.ndarray = field(repr=False, compare=False)
    laplacian: np.ndarray = field(repr=False, compare=False)
    points: np.ndarray = field(repr=False, compare=False)

    @property
    def max_spread(self) -> float:
        return max((b.spread for b in self.bins), default=0.0)


def _fit_spread(x: np.ndarray, y: np.ndarray) -> float:
    """Max deviation of ``y`` from a local quadratic in ``x``, relative to ``1 + |y|``."""
    m = len(x)
    if m < 2:
        return 0.0
    deg = min(2, m - 1)
    xc = x - x.mean()
    w = np.ptp(xc)
    if w == 0.0:
        dev = np.abs(y - y.mean())
    else:
        coef = np.polyfit(xc / w, y, deg)
        dev = np.abs(y - np.polyval(coef, xc / w))
    return float(dev.max() / (1.0 + np.abs(y).max()))


def extract_profiles(M: Manifold, f, plan: SamplePlan = SamplePlan(), *,
                     profile_tol: float = 1e-2, min_region: int = 10,
                     decomposition: RegionDecomposition | None = None
                     ) -> list[RegionProfile]:
    """Bin each region's samples by ``f`` and tabulate ``(grad f)^2`` and ``Delta f``.

    Each region of at least ``min_region`` samples gets ``ceil(sqrt(m))``
    equal-count bins ordered by ``f`` (``m`` = region size).  A bin's
    spread is the worst deviation of either quantity from a local quadratic in
    ``f``; a spread above ``profile_tol`` means the quantity is not a single
    valued function of ``f`` there and marks the region REFUTED.
    """
    f = _field_of(M, f)
    dec = decomposition or detect_regions(M, f, plan)
    pts = dec.points
    A, B = ex.evaluate_many([f.grad_norm_sq_expr, f.laplacian_expr], M.env(pts))
    out = []
    for reg in dec.regions:
        idx = reg.indices
        if len(idx) < min_region:
            continue
        fr, Ar, Br = dec.f_values[idx], A[idx], B[idx]
        nb = math.ceil(math.sqrt(len(idx)))
        # equal-count bins: ranks by f, ties broken by sample order
        rank = np.empty(len(idx), dtype=int)
        rank[np.argsort(fr, kind="stable")] = np.arange(len(idx))
        which = rank * nb // len(idx)
        bins = []
        offending = None
        for k in range(nb):
            sel = np.flatnonzero(which == k)
            if sel.size == 0:
                continue
            spread = max(_fit_spread(fr[sel], Ar[sel]), _fit_spread(fr[sel], Br[sel]))
            if spread > profile_tol and offending is None:
                offending = len(bins)
            bins.append(ProfileBin(float(fr[sel].mean()), float(Ar[sel].mean()),
                                   float(Br[sel].mean()), spread, int(sel.size), idx[sel]))
        verdict = Verdict.CONSISTENT if offending is None else Verdict.REFUTED
        out.append(RegionProfile(reg.id, reg.interval, tuple(bins), verdict, offending,
                                 fr, Ar, Br, pts[idx]))
    return out


def check_tabulated_levels(levels: np.ndarray, quantities: Mapping[str, np.ndarray],
                           tol: float, witnesses: Sequence[Mapping[str, float]] | None = None
                           ) -> CheckReport:
    """Fibrewise test on tabulated data whose rows are level sets.

    ``quantities[name]`` has shape ``(len(levels), m)``; each row must be
    constant.  The statistic per row is ``(max - min) / (1 + |mean|)``.
    """
    sub = {}
    worst, worst_row = -1.0, 0
    for name, q in quantities.items():
        q = np.asarray(q, dtype=float)
        stat = np.ptp(q, axis=1) / (1.0 + np.abs(q.mean(axis=1)))
        sub[name] = float(stat.max())
        if sub[name] > worst:
            worst, worst_row = sub[name], int(np.argmax(stat))
    samples = int(np.size(levels))
    if worst <= tol:
        return CheckReport(Verdict.CONSISTENT, worst, tol, samples, 0, None, sub,
                           (CONSISTENT_NOTE,))
    witness = (dict(witnesses[worst_row]) if witnesses is not None
               else {"level": float(np.asarray(levels)[worst_row])})
    return CheckReport(Verdict.REFUTED, worst, tol, samples, 0, witness, sub)
