"""Independent oracles used by the test suite.

Everything here is deliberately written from scratch against the problem
statements (brute-force enumeration, direct quadrature), without importing
solver internals, so the checks stay two-sided.
"""

import itertools
import math

import numpy as np


def riesz_pair_cost(points, config, s):
    total = 0.0
    for a, b in itertools.combinations(range(len(config)), 2):
        r = np.linalg.norm(points[config[a]] - points[config[b]])
        total += r ** (-s)
    return total


def lp_vertex_oracle(points, weights, s, nmax, chunk=150_000):
    """Exact optimum of the grand-canonical transport LP by brute-force
    enumeration of basic feasible solutions (vertices).

    Variables: one weight per distinct-point configuration of size 1..nmax
    plus the vacuum weight.  Constraints: per-point marginals and total
    probability.  Every vertex is a basic solution with at most M+1 basic
    columns, so enumerating all nonsingular (M+1)-column subsets and
    keeping the nonnegative solutions finds the global minimum.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    weights = np.asarray(weights, dtype=float)
    M = weights.size
    configs = []
    for n in range(1, min(nmax, M) + 1):
        configs.extend(itertools.combinations(range(M), n))
    ncol = len(configs) + 1
    A = np.zeros((M + 1, ncol))
    c = np.zeros(ncol)
    for col, cfg in enumerate(configs):
        for i in cfg:
            A[i, col] = 1.0
        A[M, col] = 1.0
        c[col] = riesz_pair_cost(points, cfg, s)
    A[M, -1] = 1.0
    b = np.append(weights, 1.0)
    r = M + 1
    best = math.inf
    combo_iter = itertools.combinations(range(ncol), r)
    while True:
        flat = np.fromiter(
            itertools.chain.from_iterable(itertools.islice(combo_iter, chunk)),
            dtype=np.int64)
        if flat.size == 0:
            break
        idx = flat.reshape(-1, r)
        mats = A[:, idx].transpose(1, 0, 2)  # (batch, rows, r)
        dets = np.abs(np.linalg.det(mats))
        good = dets > 0.5  # integer matrices: nonsingular means |det| >= 1
        if not good.any():
            continue
        rhs = np.broadcast_to(b[:, None], (int(good.sum()), r, 1))
        sols = np.linalg.solve(mats[good], rhs)[:, :, 0]
        feas = np.all(sols >= -1e-9, axis=1)
        if feas.any():
            vals = np.einsum("bj,bj->b", c[idx[good]][feas], sols[feas])
            best = min(best, float(vals.min()))
    return best


def interval_riemann_mean(func, lo, hi, n=200_001):
    """Fine midpoint quadrature of a scalar function over [lo, hi]."""
    x = lo + (hi - lo) * (np.arange(n) + 0.5) / n
    return float(np.mean(func(x)))


def cube_pair_interaction_mc(d, s, n=2 ** 21, seed=12345):
    """Quasi-random estimate of the mean of |x-y|^(-s) over two independent
    uniform points of the unit d-cube."""
    from scipy.stats import qmc
    sob = qmc.Sobol(d=2 * d, scramble=True, seed=seed)
    u = sob.random(n)
    diff = u[:, :d] - u[:, d:]
    r = np.sqrt((diff ** 2).sum(axis=1))
    return float(np.mean(r ** (-s)))


def two_cell_direct_quadrature(center1, center2, w1, w2, h, s, sub=24):
    """Cross term of the direct energy for two uniform 1-d cells by direct
    double quadrature."""
    x = center1 - h / 2 + h * (np.arange(sub) + 0.5) / sub
    y = center2 - h / 2 + h * (np.arange(sub) + 0.5) / sub
    dx = np.abs(x[:, None] - y[None, :])
    dens1 = w1 / h
    dens2 = w2 / h
    return float(np.sum(dens1 * dens2 * dx ** (-s)) * (h / sub) ** 2)
