"""Regression surrogates: ordinary Kriging, CART regression trees and random forests.

All models share ``predict``/``predict_batch`` and round-trip through
:func:`save_model`/:func:`load_model`.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky

from .generators import rng_for
from .pointset import Box, DimensionError

KINDS = ("kriging", "tree", "forest")
MAX_KRIGING_N = 5000


class FitError(RuntimeError):
    pass


@dataclass
class TrainingSet:
    X: np.ndarray
    y: np.ndarray
    domain: Optional[Box] = None
    fid: str = ""
    design_id: str = ""

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.y = np.asarray(self.y, dtype=float).ravel()
        if self.X.shape[0] != self.y.shape[0]:
            raise DimensionError(f"{self.X.shape[0]} rows but {self.y.shape[0]} responses")
        if not np.all(np.isfinite(self.y)):
            raise FitError("responses must be finite")
        if self.domain is None:
            lo, hi = self.X.min(axis=0), self.X.max(axis=0)
            hi = np.where(hi > lo, hi, lo + 1.0)
            self.domain = Box(lo, hi)
        _, inverse = np.unique(self.X, axis=0, return_inverse=True)
        inverse = inverse.ravel()
        for g in np.unique(inverse[np.bincount(inverse)[inverse] > 1]):
            if np.ptp(self.y[inverse == g]) > 0:
                raise FitError("duplicate design rows with conflicting responses")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def digest(self) -> str:
        h = hashlib.sha256(self.X.tobytes())
        h.update(self.y.tobytes())
        return h.hexdigest()


class SurrogateModel:
    kind = "base"

    def __init__(self, d: int, n: int, seed: Optional[int], digest: str):
        self.d = d
        self.n = n
        self.seed = seed
        self.training_digest = digest

    def _rows(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.d:
            raise DimensionError(f"model expects dimension {self.d}, got {X.shape[1]}")
        return X

    def predict_batch(self, X) -> np.ndarray:
        raise NotImplementedError

    def predict(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if x.ndim != 1:
            raise DimensionError("predict takes a single point; use predict_batch")
        return float(self.predict_batch(x[None, :])[0])

    def __call__(self, x) -> float:
        return self.predict(x)

    def params(self) -> dict:
        raise NotImplementedError

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "d": self.d,
            "n": self.n,
            "seed": self.seed,
            "training_digest": self.training_digest,
            "params": self.params(),
        }


# --- Kriging ---------------------------------------------------------------


@dataclass
class KrigingParams:
    theta_grid_size: int = 25
    theta_range: tuple = (1e-2, 1e1)
    nugget: float = 1e-8  # times var(y)
    escalations: int = 3
    interp_tol: float = 1e-5  # admissible training misfit, relative to range(y)


def _sq_dists(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    # coordinate-wise differences: no cancellation, and each entry is computed
    # the same way whatever the batch size
    d2 = np.zeros((A.shape[0], B.shape[0]))
    for j in range(A.shape[1]):
        d2 += (A[:, j, None] - B[None, :, j]) ** 2
    return d2


class KrigingModel(SurrogateModel):
    """Ordinary Kriging with an isotropic squared-exponential correlation.

    The constant mean and the process variance are profiled out in closed form;
    the length-scale is the maximizer of the concentrated log-likelihood over a
    logarithmic grid scaled by the domain diagonal.
    """

    kind = "kriging"

    def __init__(self, X, alpha, mean, theta, sigma2, nugget, loglik, seed, digest):
        super().__init__(X.shape[1], X.shape[0], seed, digest)
        self.X = X
        self.alpha = alpha
        self.mean = mean
        self.theta = theta
        self.sigma2 = sigma2
        self.nugget = nugget
        self.loglik = loglik

    def predict_batch(self, X, chunk: int = 4096) -> np.ndarray:
        X = self._rows(X)
        out = np.empty(X.shape[0])
        if self.alpha is None:
            out.fill(self.mean)
            return out
        for s in range(0, X.shape[0], chunk):
            K = np.exp(-_sq_dists(X[s : s + chunk], self.X) / (2.0 * self.theta**2))
            out[s : s + chunk] = self.mean + (K * self.alpha).sum(axis=1)
        return out

    def params(self) -> dict:
        return {
            "theta": self.theta,
            "sigma2": self.sigma2,
            "nugget": self.nugget,
            "mean": self.mean,
            "loglik": self.loglik,
            "X": None if self.alpha is None else self.X.tolist(),
            "alpha": None if self.alpha is None else self.alpha.tolist(),
        }


def _profile(R, y, ones, nugget, escalations, tol=1e-6):
    """Factor ``R + eta I`` (escalating ``eta``) and profile mean and variance.

    A factorization counts as failed when Cholesky breaks down or when the
    solve does not reproduce ``y`` to relative accuracy ``tol``.
    """
    n = y.shape[0]
    for attempt in range(escalations + 1):
        eta = nugget * 10.0**attempt
        A = R + eta * np.eye(n)
        try:
            L = cholesky(A, lower=True, check_finite=False)
        except LinAlgError:
            continue
        Ri_y = cho_solve((L, True), y, check_finite=False)
        if np.linalg.norm(A @ Ri_y - y) > tol * np.linalg.norm(y):
            continue
        Ri_1 = cho_solve((L, True), ones, check_finite=False)
        mean = float(ones @ Ri_y / (ones @ Ri_1))
        alpha = Ri_y - mean * Ri_1
        sigma2 = float((y - mean) @ alpha / n)
        if sigma2 > 0.0:
            return eta, L, mean, sigma2, alpha
    return None


def fit_kriging(ts: TrainingSet, params: Optional[KrigingParams] = None, seed=None) -> KrigingModel:
    params = params or KrigingParams()
    if ts.n > MAX_KRIGING_N:
        raise FitError(f"Kriging limited to n <= {MAX_KRIGING_N}, got {ts.n}")
    # canonical row order makes the fit independent of how the rows were listed,
    # which round-off in the ill-conditioned solves would otherwise expose
    order = np.lexsort(ts.X.T[::-1])
    X, y = ts.X[order], ts.y[order]
    n = ts.n
    if np.ptp(y) == 0.0:
        return KrigingModel(X, None, float(y[0]), math.nan, 0.0, 0.0, math.nan, seed, ts.digest())

    diag = ts.domain.diagonal
    lo, hi = params.theta_range
    thetas = diag * np.logspace(math.log10(lo), math.log10(hi), params.theta_grid_size)
    D2 = _sq_dists(X, X)
    ones = np.ones(n)
    var_y = float(np.var(y))
    range_y = float(np.ptp(y))
    best = best_any = None
    for theta in thetas:
        R = np.exp(-D2 / (2.0 * theta**2))
        fitted = _profile(R, y, ones, params.nugget, params.escalations)
        if fitted is None:
            continue
        # the nugget is 1e-8 var(y) in absolute units, i.e. var(y)/sigma2 times
        # that in correlation units; refit once with the implied ratio
        ratio = params.nugget * var_y / fitted[3]
        if ratio < fitted[0]:
            fitted = _profile(R, y, ones, ratio, params.escalations) or fitted
        eta, L, mean, sigma2, alpha = fitted
        loglik = -0.5 * n * math.log(sigma2) - float(np.log(np.diag(L)).sum())
        cand = (loglik, theta, eta, mean, alpha, sigma2)
        if best_any is None or loglik > best_any[0]:
            best_any = cand
        # length-scales whose fit does not reproduce the data are numerically
        # degenerate (nugget-dominated or cancellation-ridden), not interpolants
        misfit = float(np.abs(mean + R @ alpha - y).max())
        if misfit <= params.interp_tol * range_y and (best is None or loglik > best[0]):
            best = cand
    if best_any is None:
        raise FitError("kernel matrix singular for every length-scale after nugget escalation")
    best = best or best_any
    loglik, theta, eta, mean, alpha, sigma2 = best
    return KrigingModel(X, alpha, mean, float(theta), sigma2, eta, loglik, seed, ts.digest())


# --- CART ------------------------------------------------------------------


@dataclass
class TreeParams:
    min_leaf: int = 5
    max_features: Optional[int] = None  # None: all dimensions


def _best_split(Xn: np.ndarray, yn: np.ndarray, features, min_leaf: int):
    """Return (score, feature, threshold) maximizing the between-children sum of squares."""
    m = yn.shape[0]
    total = yn.sum()
    parent = total * total / m
    best = (parent * (1.0 + 1e-12) + 1e-300, -1, 0.0)
    k = np.arange(min_leaf, m - min_leaf + 1)
    for f in features:
        order = np.argsort(Xn[:, f], kind="stable")
        xs = Xn[order, f]
        left = np.cumsum(yn[order])[k - 1]
        right = total - left
        score = left * left / k + right * right / (m - k)
        score[xs[k - 1] >= xs[k]] = -np.inf
        i = int(np.argmax(score))
        if score[i] > best[0]:
            a, b = xs[k[i] - 1], xs[k[i]]
            thr = a + 0.5 * (b - a)
            if thr >= b:
                thr = a
            best = (float(score[i]), int(f), float(thr))
    return best


def _grow(X: np.ndarray, y: np.ndarray, params: TreeParams, rng: Optional[np.random.Generator]):
    d = X.shape[1]
    mtry = d if params.max_features is None else max(1, min(d, params.max_features))
    feat, thr, left, right, value = [], [], [], [], []

    def new_node(rows):
        feat.append(-1)
        thr.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(float(y[rows].mean()))
        return len(feat) - 1

    stack = [(new_node(np.arange(X.shape[0])), np.arange(X.shape[0]))]
    while stack:
        node, rows = stack.pop()
        yn = y[rows]
        if rows.shape[0] < 2 * params.min_leaf or np.ptp(yn) == 0.0:
            continue
        if mtry < d:
            features = np.sort(rng.choice(d, mtry, replace=False))
        else:
            features = range(d)
        _, f, t = _best_split(X[rows], yn, features, params.min_leaf)
        if f < 0:
            continue
        go_left = X[rows, f] <= t
        lrows, rrows = rows[go_left], rows[~go_left]
        feat[node], thr[node] = f, t
        left[node] = new_node(lrows)
        right[node] = new_node(rrows)
        stack.append((right[node], rrows))
        stack.append((left[node], lrows))
    return (np.array(feat, dtype=np.int64), np.array(thr), np.array(left, dtype=np.int64),
            np.array(right, dtype=np.int64), np.array(value))


def _traverse(arrays, X: np.ndarray) -> np.ndarray:
    feat, thr, left, right, value = arrays
    node = np.zeros(X.shape[0], dtype=np.int64)
    active = feat[node] >= 0
    while active.any():
        idx = np.nonzero(active)[0]
        nd = node[idx]
        goes_left = X[idx, feat[nd]] <= thr[nd]
        node[idx] = np.where(goes_left, left[nd], right[nd])
        active[idx] = feat[node[idx]] >= 0
    return value[node]


class TreeModel(SurrogateModel):
    kind = "tree"

    def __init__(self, arrays, d, n, seed, digest, params: TreeParams):
        super().__init__(d, n, seed, digest)
        self.arrays = arrays
        self.tree_params = params

    @property
    def node_count(self) -> int:
        return self.arrays[0].shape[0]

    def predict_batch(self, X) -> np.ndarray:
        return _traverse(self.arrays, self._rows(X))

    def params(self) -> dict:
        return {
            "min_leaf": self.tree_params.min_leaf,
            "max_features": self.tree_params.max_features,
            "nodes": [a.tolist() for a in self.arrays],
        }


def fit_tree(ts: TrainingSet, params: Optional[TreeParams] = None, seed: int = 0) -> TreeModel:
    params = params or TreeParams()
    rng = rng_for(seed, 0)
    arrays = _grow(ts.X, ts.y, params, rng)
    return TreeModel(arrays, ts.d, ts.n, seed, ts.digest(), params)


# --- random forest ---------------------------------------------------------


@dataclass
class ForestParams:
    n_trees: int = 500
    min_leaf: int = 5
    max_features: Optional[int] = None  # None: ceil(d / 3)
    bootstrap: bool = True


class ForestModel(SurrogateModel):
    kind = "forest"

    def __init__(self, trees, d, n, seed, digest, params: ForestParams):
        super().__init__(d, n, seed, digest)
        self.trees = trees
        self.forest_params = params

    def predict_batch(self, X) -> np.ndarray:
        X = self._rows(X)
        total = np.zeros(X.shape[0])
        for arrays in self.trees:
            total += _traverse(arrays, X)
        return total / len(self.trees)

    def params(self) -> dict:
        p = self.forest_params
        return {
            "n_trees": p.n_trees,
            "min_leaf": p.min_leaf,
            "max_features": p.max_features,
            "bootstrap": p.bootstrap,
            "trees": [[a.tolist() for a in t] for t in self.trees],
        }


def fit_forest(ts: TrainingSet, params: Optional[ForestParams] = None, seed: int = 0) -> ForestModel:
    params = params or ForestParams()
    mtry = params.max_features or math.ceil(ts.d / 3)
    tparams = TreeParams(params.min_leaf, mtry)
    trees = []
    for t in range(params.n_trees):
        # tree t draws from stream t, so a one-tree forest matches fit_tree
        rng = rng_for(seed, t)
        if params.bootstrap:
            rows = rng.integers(0, ts.n, ts.n)
            X, y = ts.X[rows], ts.y[rows]
        else:
            X, y = ts.X, ts.y
        trees.append(_grow(X, y, tparams, rng))
    return ForestModel(trees, ts.d, ts.n, seed, ts.digest(), params)


# --- dispatch and persistence ----------------------------------------------


def fit(kind: str, ts: TrainingSet, seed: Optional[int] = 0, params=None) -> SurrogateModel:
    if ts.n < 3:
        raise FitError("need at least three training points")
    if kind == "kriging":
        return fit_kriging(ts, params, seed)
    if kind == "tree":
        return fit_tree(ts, params, seed or 0)
    if kind == "forest":
        return fit_forest(ts, params, seed or 0)
    raise ValueError(f"unknown surrogate kind {kind!r}; expected one of {KINDS}")


def predict(model: SurrogateModel, x) -> float:
    return model.predict(x)


def predict_batch(model: SurrogateModel, X) -> np.ndarray:
    return model.predict_batch(X)


class ConstantModel(SurrogateModel):
    """Predicts one value everywhere; a baseline and a test double."""

    kind = "constant"

    def __init__(self, value: float, d: int):
        super().__init__(d, 0, None, "")
        self.value = float(value)

    def predict_batch(self, X) -> np.ndarray:
        return np.full(self._rows(X).shape[0], self.value)

    def params(self) -> dict:
        return {"value": self.value}


class FunctionModel(SurrogateModel):
    """Wraps a known function as a "perfect" surrogate (used for oracle checks)."""

    kind = "oracle"

    def __init__(self, func, d: int):
        super().__init__(d, 0, None, "")
        self.func = func

    def predict_batch(self, X) -> np.ndarray:
        return np.asarray(self.func(self._rows(X)), dtype=float)

    def params(self) -> dict:
        return {}


def save_model(model: SurrogateModel, path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(model.to_dict()))


def load_model(path: Union[str, Path]) -> SurrogateModel:
    data = json.loads(Path(path).read_text())
    kind, p = data["kind"], data["params"]
    d, n, seed, digest = data["d"], data["n"], data["seed"], data["training_digest"]
    if kind == "kriging":
        X = np.zeros((0, d)) if p["X"] is None else np.array(p["X"])
        alpha = None if p["alpha"] is None else np.array(p["alpha"])
        return KrigingModel(X, alpha, p["mean"], p["theta"], p["sigma2"], p["nugget"],
                            p["loglik"], seed, digest)
    if kind == "tree":
        arrays = _arrays_from(p["nodes"])
        return TreeModel(arrays, d, n, seed, digest, TreeParams(p["min_leaf"], p["max_features"]))
    if kind == "forest":
        trees = [_arrays_from(t) for t in p["trees"]]
        fp = ForestParams(p["n_trees"], p["min_leaf"], p["max_features"], p["bootstrap"])
        return ForestModel(trees, d, n, seed, digest, fp)
    raise ValueError(f"cannot load model of kind {kind!r}")


def _arrays_from(nodes):
    feat, thr, left, right, value = nodes
    return (np.array(feat, dtype=np.int64), np.array(thr, dtype=float),
            np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
            np.array(value, dtype=float))
