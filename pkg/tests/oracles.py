"""Independent reference computations used by the tests.

Nothing here calls the symbolic differentiator or the library's geometry
kernels: derivatives are finite differences of plain Python callables and
metric quantities are written out by hand.
"""
import math

import numpy as np


def central_diff(fn, p, i, h):
    q1, q2 = list(p), list(p)
    q1[i] += h
    q2[i] -= h
    return (fn(q1) - fn(q2)) / (2 * h)


def metric_fn(M):
    """Plain callable x -> g(x) using only expression evaluation."""
    from equipart import expr as ex

    def g(x):
        env = {c: float(v) for c, v in zip(M.coords, x)}
        return np.array([[ex.evaluate(e, env) for e in row] for row in M.metric])
    return g


def fd_christoffel(M, x, h=1e-5):
    """Christoffel symbols from finite differences of the metric."""
    g = metric_fn(M)
    n = M.dim
    dg = np.array([(g(_shift(x, l, h)) - g(_shift(x, l, -h))) / (2 * h) for l in range(n)])
    ginv = np.linalg.inv(g(x))
    gam = np.zeros((n, n, n))
    for k in range(n):
        for i in range(n):
            for j in range(n):
                gam[k, i, j] = 0.5 * sum(ginv[k, l] * (dg[i, j, l] + dg[j, i, l] - dg[l, i, j])
                                         for l in range(n))
    return gam


def fd_laplacian(M, f, x, h=1e-4):
    """Divergence-form Laplacian by nested central differences of plain callables."""
    g = metric_fn(M)
    n = M.dim

    def flux(y, i):
        G = g(y)
        gi = np.linalg.inv(G)
        root = math.sqrt(np.linalg.det(G))
        grad = [central_diff(f, y, j, h) for j in range(n)]
        return root * sum(gi[i, j] * grad[j] for j in range(n))

    root = math.sqrt(np.linalg.det(g(x)))
    return sum((flux(_shift(x, i, h), i) - flux(_shift(x, i, -h), i)) / (2 * h)
               for i in range(n)) / root


def _shift(x, i, h):
    y = np.array(x, dtype=float)
    y[i] += h
    return y


def lie_derivative_metric(M, X, x, h=1e-5):
    """(L_X g)_ab = X^c d_c g_ab + g_cb d_a X^c + g_ac d_b X^c, all by differences."""
    g = metric_fn(M)
    n = M.dim
    Xv = lambda y: np.asarray(X(y), dtype=float)  # noqa: E731
    dg = np.array([(g(_shift(x, c, h)) - g(_shift(x, c, -h))) / (2 * h) for c in range(n)])
    dX = np.array([(Xv(_shift(x, a, h)) - Xv(_shift(x, a, -h))) / (2 * h) for a in range(n)])
    G = g(x)
    X0 = Xv(x)
    return (np.einsum("c,cab->ab", X0, dg) + np.einsum("cb,ac->ab", G, dX)
            + np.einsum("ac,bc->ab", G, dX))


def ripple_laplacian(f, i):
    """Closed-form Laplacian of cos(r) as a function of f on the i-th annulus."""
    s = (-1) ** i
    return -f - s * np.sqrt(1 - f ** 2) / (i * math.pi + np.arccos(s * f))


def hyperbolic_product_distance(p, q):
    """Distance in the disc model ds^2 = (dx^2+dy^2)/F^2 times a line, F = (2-x^2-y^2)/2.

    With u = x/sqrt(2) the metric is half of 4 du^2/(1-|u|^2)^2, so hyperbolic
    distances of the unit disc scale by 1/sqrt(2).
    """
    a = np.asarray(p[:2]) / math.sqrt(2)
    b = np.asarray(q[:2]) / math.sqrt(2)
    num = 2 * np.sum((a - b) ** 2)
    den = (1 - np.sum(a ** 2)) * (1 - np.sum(b ** 2))
    dh = math.acosh(1 + num / den) / math.sqrt(2)
    return math.hypot(dh, q[2] - p[2])
