"""Brute-force oracles used to cross-check the solvers on tiny instances."""

import itertools

import numpy as np


def transport_vertices(a, b):
    """All vertices of the transportation polytope Pi(a, b), as (V, m, n) plans.

    Every basic feasible solution has at most m + n - 1 nonzero cells: pick
    each set of m + n - 1 cells, solve the marginal equations restricted to
    it (one redundant row dropped) and keep nonnegative solutions.
    """
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    m, n = len(a), len(b)
    A = np.zeros((m + n, m * n))
    for i in range(m):
        A[i, i * n:(i + 1) * n] = 1.0
    for j in range(n):
        A[m + j, j::n] = 1.0
    A, rhs = A[:-1], np.concatenate([a, b])[:-1]
    k = m + n - 1

    combos = np.array(list(itertools.combinations(range(m * n), k)), dtype=int)
    bases = A[:, combos].transpose(1, 0, 2)
    regular = np.abs(np.linalg.det(bases)) > 0.5
    combos, bases = combos[regular], bases[regular]
    rhs_batch = np.broadcast_to(rhs, (len(bases), k))[..., None]
    x = np.linalg.solve(bases, rhs_batch)[..., 0]
    feasible = np.all(x >= -1e-12, axis=1)

    plans = np.zeros((int(feasible.sum()), m * n))
    rows = np.arange(plans.shape[0])[:, None]
    plans[rows, combos[feasible]] = np.maximum(x[feasible], 0.0)
    return plans.reshape(-1, m, n)


def brute_force_w2_squared(mu, nu):
    M = np.sum((mu.points[:, None, :] - nu.points[None, :, :]) ** 2, axis=-1)
    plans = transport_vertices(mu.weights, nu.weights)
    costs = np.einsum("vij,ij->v", plans, M)
    best = int(np.argmin(costs))
    return float(costs[best]), plans[best]


def quantile_w2_squared(xs, a, ys, b):
    """W2^2 on the line by integrating |F^-1(u) - G^-1(u)|^2 over u in (0, 1)."""
    xs, a = np.asarray(xs, dtype=float).reshape(-1), np.asarray(a, dtype=float)
    ys, b = np.asarray(ys, dtype=float).reshape(-1), np.asarray(b, dtype=float)
    ox, oy = np.argsort(xs), np.argsort(ys)
    xs, a, ys, b = xs[ox], a[ox], ys[oy], b[oy]
    ca, cb = np.cumsum(a), np.cumsum(b)
    breaks = np.unique(np.clip(np.concatenate([[0.0], ca, cb, [1.0]]), 0.0, 1.0))
    total = 0.0
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        mid = 0.5 * (lo + hi)
        i = min(int(np.searchsorted(ca, mid)), len(xs) - 1)
        j = min(int(np.searchsorted(cb, mid)), len(ys) - 1)
        total += (hi - lo) * (xs[i] - ys[j]) ** 2
    return total


def batch_quantile_w2_squared(grid, W, ys, b):
    """Vectorized quantile W2^2 between sum_i W[r, i] delta_grid_i and a fixed 1-D measure.

    grid must be sorted increasingly; W has one weight vector per row.
    """
    grid = np.asarray(grid, dtype=float).reshape(-1)
    ys, b = np.asarray(ys, dtype=float).reshape(-1), np.asarray(b, dtype=float)
    order = np.argsort(ys)
    ys, b = ys[order], b[order]
    cw = np.cumsum(W, axis=1)
    cb = np.cumsum(b)
    rows = W.shape[0]
    breaks = np.concatenate(
        [np.zeros((rows, 1)), cw, np.broadcast_to(cb, (rows, len(cb))), np.ones((rows, 1))], axis=1
    )
    breaks = np.sort(np.clip(breaks, 0.0, 1.0), axis=1)
    lo, hi = breaks[:, :-1], breaks[:, 1:]
    mid = 0.5 * (lo + hi)
    i = np.minimum((cw[:, None, :] < mid[:, :, None]).sum(axis=2), len(grid) - 1)
    j = np.minimum((cb[None, None, :] < mid[:, :, None]).sum(axis=2), len(ys) - 1)
    return np.sum((hi - lo) * (grid[i] - ys[j]) ** 2, axis=1)


def simplex_lattice(steps, parts=3):
    """All weight vectors with `parts` entries in {0, 1/steps, ..., 1} summing to one."""
    if parts != 3:
        raise ValueError("only the 3-point simplex is enumerated")
    i, j = np.meshgrid(np.arange(steps + 1), np.arange(steps + 1), indexing="ij")
    keep = i + j <= steps
    i, j = i[keep], j[keep]
    return np.stack([i, j, steps - i - j], axis=1) / steps


def glue_dense(P12, P13, w):
    """gamma[i, j, k] = P12[i, j] P13[i, k] / w[i], written out with loops."""
    m, n, p = P12.shape[0], P12.shape[1], P13.shape[1]
    gamma = np.zeros((m, n, p))
    for i in range(m):
        if w[i] <= 0:
            continue
        for j in range(n):
            for k in range(p):
                gamma[i, j, k] = P12[i, j] * P13[i, k] / w[i]
    return gamma
