"""Independent oracles the tests check the library against.

Everything here recomputes quantities from first principles (finite
differences, dense linear algebra, exhaustive enumeration, coordinate
descent) without touching the incremental code paths under test.
"""

import itertools
from math import comb

import numpy as np

from drlp import (
    ReluNetwork,
    evaluate,
    subjective_arguments,
    subjective_value,
)


def fd_gradient(net, s, x):
    """Gradient on the region of s by central differences.

    The pattern-fixed network value is affine in x, so any step size is
    exact up to roundoff.
    """
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = 0.5
        g[i] = subjective_value(net, s, x + e) - subjective_value(net, s, x - e)
    return g


def fd_oriented_normal(net, s, c, x):
    """Oriented normal of unit c via differences of its argument."""
    l, j = c
    x = np.asarray(x, dtype=np.float64)
    v = np.zeros_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = 0.5
        up = subjective_arguments(net, s, x + e)[l - 1][j - 1]
        dn = subjective_arguments(net, s, x - e)[l - 1][j - 1]
        v[i] = up - dn
    return v if s.get(c) == 1 else -v


def normals_matrix(net, s, owners):
    """Columns = oriented normals of the owners, from the definition."""
    from drlp import oriented_normal

    return np.stack([oriented_normal(net, s, c) for c in owners], axis=1)


def brute_pseudoinverse(net, s, owners):
    """Moore-Penrose left inverse of the stacked normals, dense route."""
    return np.linalg.pinv(normals_matrix(net, s, owners), rcond=1e-13)


def brute_advance(net, x, v, s, ignore=(), pairs=None, zero_tol=1e-9):
    """Reference line search: per-unit rates from two full forward passes.

    Arguments are affine along the ray, so the rate is an exact
    difference.  Returns (t, neuron) or (inf, None), with the same
    candidate rule and tie handling the fast path promises.
    """
    x = np.asarray(x, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    ignore = {tuple(c) for c in ignore}
    if pairs is not None:
        ignore |= {b for _, b in pairs.pairs}
    a0 = subjective_arguments(net, s, x)
    a1 = subjective_arguments(net, s, x + v)
    cands = []
    for l in range(1, net.depth + 1):
        for j in range(1, net.relu_widths[l - 1] + 1):
            if (l, j) in ignore:
                continue
            alpha = a0[l - 1][j - 1]
            beta = a1[l - 1][j - 1] - alpha
            if abs(beta) <= zero_tol:
                continue
            bit = s.get((l, j))
            if (bit == 1 and beta < 0.0) or (bit == 0 and beta > 0.0):
                cands.append((-alpha / beta, (l, j)))
    if not cands:
        return float("inf"), None
    t_min = min(t for t, _ in cands)
    window = 1e-12 * (1.0 + abs(t_min))
    best = min(c for t, c in cands if t <= t_min + window)
    t_best = next(t for t, c in cands if c == best)
    return t_best, best


def probe_min(net, x, radius=1e-4, samples=1000, seed=0, extra=None):
    """Smallest objective value over uniform ball samples around x."""
    rng = np.random.Generator(np.random.Philox(seed))
    x = np.asarray(x, dtype=np.float64)
    n = len(x)
    best = np.inf
    for _ in range(samples):
        d = rng.standard_normal(n)
        d *= radius * rng.uniform() ** (1.0 / n) / np.linalg.norm(d)
        val = evaluate(net, x + d)
        if extra is not None:
            val += extra(x + d)
        best = min(best, val)
    return best


def cd_lasso(x_mat, y, lam, iters=20000, tol=1e-14):
    """Coordinate descent for |y - X t|^2 + lam * |t|_1 (soft thresholding)."""
    x_mat = np.asarray(x_mat, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, p = x_mat.shape
    norms = np.sum(x_mat * x_mat, axis=0)
    theta = np.zeros(p)
    r = y.copy()
    for _ in range(iters):
        delta = 0.0
        for j in range(p):
            old = theta[j]
            rho = x_mat[:, j] @ r + norms[j] * old
            new = np.sign(rho) * max(abs(rho) - lam / 2.0, 0.0) / norms[j]
            if new != old:
                r -= x_mat[:, j] * (new - old)
                theta[j] = new
                delta = max(delta, abs(new - old))
        if delta < tol:
            break
    return theta


def lad_enumerate(design, y, alpha=0.5):
    """Global quantile-loss optimum by trying every interpolating subset.

    Some optimal parameter vector makes p residuals zero (design in
    general position), so scanning all C(n, p) square solves finds the
    global value exactly.
    """
    design = np.asarray(design, dtype=np.float64)
    n, p = design.shape
    best = np.inf
    for rows in itertools.combinations(range(n), p):
        sub = design[list(rows)]
        if abs(np.linalg.det(sub)) < 1e-12:
            continue
        theta = np.linalg.solve(sub, y[list(rows)])
        r = y - design @ theta
        val = float(np.sum(alpha * np.maximum(r, 0.0) + (1 - alpha) * np.maximum(-r, 0.0)))
        best = min(best, val)
    return best


def brute_improved_bound(topology):
    """Region bound by explicit enumeration of all admissible index tuples."""
    n0, widths = topology[0], list(topology[1:])
    total = 0
    for js in itertools.product(*[range(w + 1) for w in widths]):
        ok = True
        for i, j in enumerate(js):
            cap = min([n0] + [widths[k] - js[k] for k in range(i)] + [widths[i]])
            if j > cap:
                ok = False
                break
        if ok:
            total += int(np.prod([comb(w, j) for w, j in zip(widths, js)]))
    return total


def first_layer_wrapper(rows):
    """Network whose unit (1, j) has oriented normal rows[j-1] when all bits are 1.

    Lets the pseudoinverse primitives run against arbitrary column sets.
    """
    rows = np.asarray(rows, dtype=np.float64)
    m = rows.shape[0]
    return ReluNetwork([rows, np.ones((1, m))], [np.zeros(m), np.zeros(1)])
