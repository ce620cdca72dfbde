"""Star discrepancy: exact grid enumeration, randomized lower bounds, overhead tables.

The supremum over anchored boxes ``[0, y]`` is attained on the critical grid
``prod_j ({x_j^i} u {1})``, approached either from above (closed count,
``x <= y``) or from below (open count, ``x < y``). The exact routine walks that
grid dimension by dimension with incremental membership masks and sweeps the
last coordinate with two pointers, giving ``O(n^d)`` work.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Dict, Mapping, Sequence, Union

import numba
import numpy as np

from .generators import rng_for
from .pointset import DimensionError, PointSet, as_points

DEFAULT_WORK_BUDGET = 5 * 10**8

if "NUMBA_THREADING_LAYER" not in os.environ:
    # the bundled TBB is too old for numba; avoid the noisy fallback warning
    numba.config.THREADING_LAYER = "workqueue"


class WorkBudgetExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class DiscrepancyResult:
    value: float
    exact: bool
    witness_box: np.ndarray
    point_count_open: int
    point_count_closed: int

    def as_dict(self) -> dict:
        return {
            "value": self.value,
            "exact": self.exact,
            "witness_box": [float(v) for v in self.witness_box],
            "point_count_open": self.point_count_open,
            "point_count_closed": self.point_count_closed,
        }


def local_discrepancy(points, y) -> tuple:
    """Return ``(value, open_count, closed_count)`` for the anchored box ``[0, y]``."""
    x = as_points(points)
    y = np.asarray(y, dtype=float)
    n = x.shape[0]
    vol = float(np.prod(y))
    closed = int(np.all(x <= y, axis=1).sum())
    opened = int(np.all(x < y, axis=1).sum())
    return max(closed / n - vol, vol - opened / n), opened, closed


def critical_grid(points) -> list:
    x = as_points(points)
    return [np.unique(np.append(x[:, j], 1.0)) for j in range(x.shape[1])]


def grid_cells(points) -> int:
    return math.prod(len(g) for g in critical_grid(points))


# --- exact kernel ----------------------------------------------------------


@numba.njit(cache=True)
def _sweep_last(x_last, order, closed_in, open_in, grid, glen, vol, n, best):
    """Sweep the last coordinate; returns (best, cc, oc, index) of the best new y or -1."""
    cc = 0
    oc = 0
    pc = 0
    po = 0
    best_idx = -1
    best_cc = 0
    best_oc = 0
    for g in range(glen):
        yv = grid[g]
        while pc < n and x_last[order[pc]] <= yv:
            if closed_in[order[pc]]:
                cc += 1
            pc += 1
        while po < n and x_last[order[po]] < yv:
            if open_in[order[po]]:
                oc += 1
            po += 1
        v = vol * yv
        local = cc / n - v
        other = v - oc / n
        if other > local:
            local = other
        if local > best:
            best = local
            best_idx = g
            best_cc = cc
            best_oc = oc
    return best, best_idx, best_cc, best_oc


@numba.njit(cache=True)
def _refresh(pts, grids, idx, level, closed_in, open_in, vol, n):
    """Recompute membership masks and prefix volume for ``level`` from ``level - 1``."""
    y = grids[level, idx[level]]
    for i in range(n):
        xi = pts[i, level]
        if level == 0:
            closed_in[0, i] = xi <= y
            open_in[0, i] = xi < y
        else:
            closed_in[level, i] = closed_in[level - 1, i] and xi <= y
            open_in[level, i] = open_in[level - 1, i] and xi < y
    if level == 0:
        vol[0] = y
    else:
        vol[level] = vol[level - 1] * y


@numba.njit(cache=True)
def _slab(pts, grids, glen, order, outer, abort_above, stop):
    """Best local discrepancy over the grid slab whose first coordinate index is ``outer``.

    Only used for d >= 2. Returns (value, witness indices, open count, closed count).
    """
    n, d = pts.shape
    last = d - 1
    closed_in = np.zeros((last, n), dtype=np.bool_)
    open_in = np.zeros((last, n), dtype=np.bool_)
    vol = np.zeros(last)
    idx = np.zeros(d, dtype=np.int64)
    idx[0] = outer
    for level in range(last):
        _refresh(pts, grids, idx, level, closed_in, open_in, vol, n)
    x_last = pts[:, last].copy()
    best = -1.0
    wit = idx.copy()
    w_open = 0
    w_closed = 0
    while stop[0] == 0:
        val, g, cc, oc = _sweep_last(
            x_last, order, closed_in[last - 1], open_in[last - 1], grids[last],
            glen[last], vol[last - 1], n, best,
        )
        if g >= 0:
            best = val
            for k in range(last):
                wit[k] = idx[k]
            wit[last] = g
            w_open = oc
            w_closed = cc
            if best > abort_above:
                stop[0] = 1
                break
        # advance the odometer over levels 1..last-1 (level 0 is fixed per slab)
        level = last - 1
        while level >= 1:
            idx[level] += 1
            if idx[level] < glen[level]:
                break
            idx[level] = 0
            level -= 1
        if level < 1:
            break
        for lv in range(level, last):
            _refresh(pts, grids, idx, lv, closed_in, open_in, vol, n)
    return best, wit, w_open, w_closed


@numba.njit(cache=True, parallel=True)
def _all_slabs(pts, grids, glen, order, abort_above):
    d = pts.shape[1]
    m = glen[0]
    values = np.full(m, -1.0)
    wits = np.zeros((m, d), dtype=np.int64)
    opens = np.zeros(m, dtype=np.int64)
    closeds = np.zeros(m, dtype=np.int64)
    # shared early-exit flag; written only once some slab exceeds abort_above
    stop = np.zeros(1, dtype=np.int64)
    for k in numba.prange(m):
        # large first coordinates first: big boxes tend to hold the maximum
        o = m - 1 - k
        v, w, oc, cc = _slab(pts, grids, glen, order, o, abort_above, stop)
        values[o] = v
        wits[o] = w
        opens[o] = oc
        closeds[o] = cc
    return values, wits, opens, closeds


def _exact_1d(x: np.ndarray) -> DiscrepancyResult:
    n = x.shape[0]
    xs = np.sort(x[:, 0])
    grid = np.unique(np.append(xs, 1.0))
    closed = np.searchsorted(xs, grid, side="right")
    opened = np.searchsorted(xs, grid, side="left")
    local = np.maximum(closed / n - grid, grid - opened / n)
    k = int(np.argmax(local))  # first maximum = smallest y
    return DiscrepancyResult(float(local[k]), True, grid[k : k + 1].copy(), int(opened[k]), int(closed[k]))


def star_discrepancy_exact(
    ps: Union[PointSet, np.ndarray],
    work_budget: int = DEFAULT_WORK_BUDGET,
    abort_above: float = math.inf,
) -> DiscrepancyResult:
    """Exact star discrepancy of a design in the unit cube.

    Raises :class:`WorkBudgetExceeded` when the critical grid holds more than
    ``work_budget`` cells; use :func:`star_discrepancy_lower_bound` instead.
    Among boxes attaining the maximum, the lexicographically smallest corner is
    returned as witness.

    With a finite ``abort_above`` the traversal may stop as soon as some box
    exceeds that level; the result is then only a lower bound (``exact=False``)
    but is guaranteed to be larger than ``abort_above``.
    """
    if isinstance(ps, PointSet) and not ps.domain.is_unit():
        raise DimensionError("star discrepancy needs a point set in the unit cube")
    x = np.ascontiguousarray(as_points(ps), dtype=float)
    if np.any(x < 0.0) or np.any(x > 1.0):
        raise ValueError("points must lie in [0, 1]^d")
    n, d = x.shape
    grids = critical_grid(x)
    cells = math.prod(len(g) for g in grids)
    if cells > work_budget:
        raise WorkBudgetExceeded(
            f"critical grid has {cells:.3e} cells (budget {work_budget:.1e}); "
            "use star_discrepancy_lower_bound for a certified lower bound"
        )
    if d == 1:
        res = _exact_1d(x)
        if res.value > abort_above:
            res = DiscrepancyResult(res.value, False, res.witness_box, res.point_count_open, res.point_count_closed)
        return res
    glen = np.array([len(g) for g in grids], dtype=np.int64)
    packed = np.ones((d, glen.max()))
    for j, g in enumerate(grids):
        packed[j, : len(g)] = g
    order = np.argsort(x[:, -1], kind="stable").astype(np.int64)
    values, wits, opens, closeds = _all_slabs(x, packed, glen, order, float(abort_above))
    o = int(np.argmax(values))  # first slab attaining the max keeps lexicographic order
    witness = np.array([packed[j, wits[o, j]] for j in range(d)])
    exact = not values[o] > abort_above
    return DiscrepancyResult(float(values[o]), exact, witness, int(opens[o]), int(closeds[o]))


# --- lower bound -----------------------------------------------------------


def _ascend(x: np.ndarray, y: np.ndarray, grids: list, closed_side: bool, max_rounds: int = 50):
    """Coordinate ascent of one side's local discrepancy over critical-grid values."""
    n, d = x.shape
    y = y.copy()
    inside = (x <= y) if closed_side else (x < y)
    best = -np.inf
    for _ in range(max_rounds):
        improved = False
        for j in range(d):
            others = np.delete(inside, j, axis=1).all(axis=1) if d > 1 else np.ones(n, bool)
            rest_vol = float(np.prod(np.delete(y, j)))
            xs = np.sort(x[others, j])
            g = grids[j]
            if closed_side:
                cnt = np.searchsorted(xs, g, side="right")
                local = cnt / n - rest_vol * g
            else:
                cnt = np.searchsorted(xs, g, side="left")
                local = rest_vol * g - cnt / n
            k = int(np.argmax(local))
            if local[k] > best + 1e-15:
                best = float(local[k])
                y[j] = g[k]
                inside[:, j] = (x[:, j] <= y[j]) if closed_side else (x[:, j] < y[j])
                improved = True
        if not improved:
            break
    return best, y


def star_discrepancy_lower_bound(
    ps: Union[PointSet, np.ndarray],
    trials: int = 10_000,
    seed: int = 0,
    refine: int = 8,
    chunk: int = 512,
) -> DiscrepancyResult:
    """Certified lower bound on D* from random boxes snapped to the critical grid.

    A random corner ``y`` is snapped down to point coordinates (shrinking the
    volume while keeping the closed count) and up to the next grid value
    (growing the volume while keeping the open count). The ``refine`` best
    snapped boxes of each kind are then improved by coordinate ascent over the
    grid. Every candidate is a genuine local discrepancy, so the maximum never
    exceeds D*.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    x = np.ascontiguousarray(as_points(ps), dtype=float)
    n, d = x.shape
    rng = rng_for(seed, 0xD15C)
    coords = [np.unique(x[:, j]) for j in range(d)]
    grids = [np.unique(np.append(c, 1.0)) for c in coords]

    pools = {True: ([], []), False: ([], [])}
    done = 0
    while done < trials:
        m = min(chunk, trials - done)
        y = rng.random((m, d))
        down = np.empty_like(y)
        up = np.empty_like(y)
        for j in range(d):
            k = np.searchsorted(coords[j], y[:, j], side="right") - 1
            down[:, j] = np.where(k >= 0, coords[j][np.maximum(k, 0)], 0.0)
            up[:, j] = grids[j][np.searchsorted(grids[j], y[:, j], side="left")]
        for box, closed_side in ((down, True), (up, False)):
            vol = np.prod(box, axis=1)
            if closed_side:
                cnt = (x[None, :, :] <= box[:, None, :]).all(axis=2).sum(axis=1)
                local = cnt / n - vol
            else:
                cnt = (x[None, :, :] < box[:, None, :]).all(axis=2).sum(axis=1)
                local = vol - cnt / n
            vals, boxes = pools[closed_side]
            vals.extend(local.tolist())
            boxes.extend(box)
        done += m

    best_value, best_box = -1.0, None
    for closed_side, (vals, boxes) in pools.items():
        vals = np.asarray(vals)
        top = np.argsort(-vals, kind="stable")[: max(refine, 1)]
        for i in top:
            value, y = vals[i], boxes[i]
            if refine:
                value, y = _ascend(x, boxes[i], grids, closed_side)
            if value > best_value:
                best_value, best_box = float(value), np.array(y)
    value, opened, closed = local_discrepancy(x, best_box)
    return DiscrepancyResult(float(value), False, best_box, opened, closed)


# --- overhead tables -------------------------------------------------------

DesignLike = Union[PointSet, Sequence[PointSet]]


def overhead_from_values(values: Mapping[str, float]) -> list:
    """Rows ``(name, value, overhead_percent)`` relative to the smallest value."""
    if len(values) < 1:
        raise ValueError("need at least one design")
    best = min(values.values())
    rows = []
    for name, value in values.items():
        overhead = 0.0 if value == best else 100.0 * (value / best - 1.0)
        rows.append((name, float(value), overhead))
    return rows


def overhead_table(
    designs: Mapping[str, DesignLike], method: str = "exact", trials: int = 10_000, seed: int = 0
) -> list:
    """Discrepancy overhead table; sequences of designs (stochastic kinds) are averaged."""
    if len(designs) < 2:
        raise ValueError("overhead table needs at least two designs")
    shapes = set()
    values: Dict[str, float] = {}
    for name, design in designs.items():
        group = [design] if isinstance(design, (PointSet, np.ndarray)) else list(design)
        vals = []
        for ps in group:
            pts = as_points(ps)
            shapes.add(pts.shape)
            if method == "exact":
                vals.append(star_discrepancy_exact(ps).value)
            else:
                vals.append(star_discrepancy_lower_bound(ps, trials, seed).value)
        values[name] = float(np.mean(vals))
    if len(shapes) > 1:
        raise DimensionError(f"designs differ in (n, d): {sorted(shapes)}")
    return overhead_from_values(values)
