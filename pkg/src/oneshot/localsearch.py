"""Projected limited-memory BFGS on a box, with finite-difference gradients."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np

from .pointset import Box, DomainError


class SearchError(RuntimeError):
    pass


@dataclass
class SearchOptions:
    memory: int = 10
    fd_step: float = 1e-6  # times the box width per dimension
    gtol: float = 1e-8  # projected-gradient tolerance, times the box width
    max_iter: int = 500
    armijo: float = 1e-4
    max_rejections: int = 20
    keep_trace: bool = False


@dataclass
class SearchOutcome:
    x_hat: np.ndarray
    value_hat: float
    iterations: int
    converged: bool
    evaluations: int = 0
    trace: Optional[List[Tuple[np.ndarray, float]]] = None


def _gradient(objective, x: np.ndarray, h: np.ndarray, box: Box, counter) -> np.ndarray:
    """Central differences, falling back to one-sided steps at the bounds."""
    g = np.zeros_like(x)
    for i in range(x.shape[0]):
        up = x.copy()
        lo = x.copy()
        up[i] = min(x[i] + h[i], box.upper[i])
        lo[i] = max(x[i] - h[i], box.lower[i])
        step = up[i] - lo[i]
        if step <= 0.0:
            continue
        fu, fl = objective(up), objective(lo)
        counter[0] += 2
        g[i] = (fu - fl) / step
    return g


def _projected_gradient(x: np.ndarray, g: np.ndarray, box: Box) -> np.ndarray:
    return np.clip(x - g, box.lower, box.upper) - x


def minimize_bounded(
    objective: Callable[[np.ndarray], float],
    start,
    box: Box,
    opts: Optional[SearchOptions] = None,
) -> SearchOutcome:
    """Minimize ``objective`` over ``box`` starting from ``start``.

    Search directions come from the L-BFGS two-loop recursion restricted to the
    free variables (those not pinned at a bound by the gradient); every trial
    point is projected back onto the box and accepted under the Armijo rule
    along the projected path. The returned value never exceeds the value at
    ``start``.
    """
    opts = opts or SearchOptions()
    x = np.asarray(start, dtype=float).copy()
    if x.shape != (box.d,):
        raise DomainError(f"start has shape {x.shape}, box dimension is {box.d}")
    if not box.contains(x):
        raise DomainError("start point outside the box")
    counter = [0]

    def f(z):
        return float(objective(z))

    fx = f(x)
    counter[0] += 1
    if not math.isfinite(fx):
        raise SearchError("objective is not finite at the start point")

    width = box.width
    h = opts.fd_step * width
    gtol = opts.gtol * float(width.max())
    trace = [(x.copy(), fx)] if opts.keep_trace else None
    pairs: deque = deque(maxlen=opts.memory)
    g = _gradient(f, x, h, box, counter)
    converged = False
    rejections = 0
    it = 0
    while it < opts.max_iter:
        pg = _projected_gradient(x, g, box)
        if np.max(np.abs(pg)) <= gtol:
            converged = True
            break
        # variables sitting on a bound with the gradient pushing outward stay fixed
        at_lower = (x <= box.lower) & (g > 0)
        at_upper = (x >= box.upper) & (g < 0)
        free = ~(at_lower | at_upper)

        q = np.where(free, g, 0.0)
        alphas = []
        for s, y, rho in reversed(pairs):
            a = rho * (s[free] @ q[free])
            alphas.append(a)
            q[free] -= a * y[free]
        if pairs:
            s, y, _ = pairs[-1]
            q *= (s @ y) / (y @ y)
        for (s, y, rho), a in zip(pairs, reversed(alphas)):
            b = rho * (y[free] @ q[free])
            q[free] += (a - b) * s[free]
        direction = -np.where(free, q, 0.0)
        if direction @ g >= 0.0:
            # curvature memory is misleading; fall back to steepest descent
            pairs.clear()
            direction = -np.where(free, g, 0.0)

        step = 1.0
        if not pairs:
            # first step: move at most a tenth of the box along the steepest edge
            scale = np.max(np.abs(direction) / width)
            step = min(1.0, 0.1 / scale) if scale > 0 else 1.0
        accepted = False
        while step > 1e-20:
            x_new = np.clip(x + step * direction, box.lower, box.upper)
            f_new = f(x_new)
            counter[0] += 1
            if not math.isfinite(f_new):
                rejections += 1
                if rejections >= opts.max_rejections:
                    break
                step *= 0.5
                continue
            if f_new <= fx + opts.armijo * (g @ (x_new - x)):
                accepted = True
                break
            step *= 0.5
        if not accepted or rejections >= opts.max_rejections:
            break
        it += 1
        g_new = _gradient(f, x_new, h, box, counter)
        s, y = x_new - x, g_new - g
        sy = s @ y
        if sy > 1e-12 * math.sqrt((s @ s) * (y @ y)):
            pairs.append((s, y, 1.0 / sy))
        stalled = fx - f_new <= 1e-15 * max(1.0, abs(fx)) and np.array_equal(x_new, x)
        x, fx, g = x_new, f_new, g_new
        if trace is not None:
            trace.append((x.copy(), fx))
        if stalled:
            break
    return SearchOutcome(x, fx, it, converged, counter[0], trace)
