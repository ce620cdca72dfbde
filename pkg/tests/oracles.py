"""Slow, independent reference implementations used to check the fast code paths."""

import itertools
from fractions import Fraction

import numpy as np


def radical_inverse_exact(index, base, perm=None):
    perm = perm or list(range(base))
    value, scale = Fraction(0), Fraction(1, base)
    while index:
        index, digit = divmod(index, base)
        value += perm[digit] * scale
        scale /= base
    return value


def star_discrepancy_brute(points):
    """Critical-grid supremum with plain Python loops."""
    pts = [tuple(p) for p in np.asarray(points, dtype=float)]
    n, d = len(pts), len(pts[0])
    grids = [sorted({p[j] for p in pts} | {1.0}) for j in range(d)]
    best = 0.0
    for y in itertools.product(*grids):
        vol = 1.0
        for v in y:
            vol *= v
        closed = sum(all(p[j] <= y[j] for j in range(d)) for p in pts)
        opened = sum(all(p[j] < y[j] for j in range(d)) for p in pts)
        best = max(best, closed / n - vol, vol - opened / n)
    return best


def star_discrepancy_grid2(points):
    """Critical-grid supremum, looping over all but the last two axes and
    counting the last two with 2-D cumulative histograms."""
    x = np.asarray(points, dtype=float)
    n, d = x.shape
    grids = [np.unique(np.append(x[:, j], 1.0)) for j in range(d)]
    ga, gb = grids[-2], grids[-1]
    # closed: x <= g  <=>  first grid index >= position of x
    ca = np.searchsorted(ga, x[:, -2], side="left")
    cb = np.searchsorted(gb, x[:, -1], side="left")
    oa = np.searchsorted(ga, x[:, -2], side="right")
    ob = np.searchsorted(gb, x[:, -1], side="right")
    vol2 = np.outer(ga, gb)
    best = 0.0
    for y in itertools.product(*grids[:-2]):
        y = np.array(y)
        inner = np.prod(y) if len(y) else 1.0
        cmask = np.all(x[:, :-2] <= y, axis=1) if len(y) else np.ones(n, bool)
        omask = np.all(x[:, :-2] < y, axis=1) if len(y) else np.ones(n, bool)
        hc = np.zeros((len(ga), len(gb)))
        np.add.at(hc, (ca[cmask], cb[cmask]), 1)
        ho = np.zeros((len(ga) + 1, len(gb) + 1))
        np.add.at(ho, (oa[omask], ob[omask]), 1)
        closed = hc.cumsum(0).cumsum(1)
        opened = ho.cumsum(0).cumsum(1)[:-1, :-1]
        vol = inner * vol2
        best = max(best, float(np.max(closed / n - vol)), float(np.max(vol - opened / n)))
    return best


def fine_grid_sup(points, m=400):
    """Supremum of the local discrepancy over the regular grid {k/m}^d, d <= 2."""
    x = np.asarray(points, dtype=float)
    n, d = x.shape
    if d > 2:
        raise ValueError("fine_grid_sup handles d <= 2")
    ticks = np.arange(m + 1) / m
    closed = [(x[:, j][None, :] <= ticks[:, None]).astype(float) for j in range(d)]
    opened = [(x[:, j][None, :] < ticks[:, None]).astype(float) for j in range(d)]
    if d == 1:
        c, o, vol = closed[0].sum(1), opened[0].sum(1), ticks
    else:
        c, o = closed[0] @ closed[1].T, opened[0] @ opened[1].T
        vol = np.outer(ticks, ticks)
    return float(max(np.max(c / n - vol), np.max(vol - o / n)))


def kriging_predict_dense(X, y, theta, nugget_ratio, Z):
    """Ordinary Kriging mean with a fixed length-scale via dense solves."""
    def corr(A, B):
        d2 = ((A[:, None, :] - B[None, :, :]) ** 2).sum(-1)
        return np.exp(-d2 / (2 * theta**2))

    R = corr(X, X) + nugget_ratio * np.eye(len(X))
    ones = np.ones(len(X))
    Ri_y = np.linalg.solve(R, y)
    Ri_1 = np.linalg.solve(R, ones)
    mu = ones @ Ri_y / (ones @ Ri_1)
    w = np.linalg.solve(R, y - mu)
    return mu + corr(Z, X) @ w
