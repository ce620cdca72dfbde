"""The three one-shot tasks: plain optimization, optimization via a surrogate, regression."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import surrogates
from .benchfuncs import BenchmarkFunction, EvaluationError
from .generators import rng_for
from .localsearch import SearchOptions, minimize_bounded
from .pointset import Box, DomainError, PointSet

TEST_STREAM = 0x7E57


@dataclass
class OneShotOutcome:
    x_best: np.ndarray
    f_best: float
    regret: float
    design_id: str
    fid: str
    n: int
    repetition: int = 0
    evaluations: int = 0


@dataclass
class SurrogateOneShotOutcome(OneShotOutcome):
    z: Optional[np.ndarray] = None
    x_hat: Optional[np.ndarray] = None
    f_hat: float = math.nan
    regret_hat: float = math.nan
    improved: bool = False
    kind: str = ""
    seed: int = 0
    degraded: bool = False
    search_iterations: int = 0


@dataclass
class RegressionOutcome:
    design_id: str
    fid: str
    kind: str
    n: int
    repetition: int
    mse: float
    test_seed: int
    t: int
    test_digest: str = ""
    evaluations: int = 0
    test_evaluations: int = 0
    missing: bool = False


def _check_domain(ps: PointSet, f: BenchmarkFunction):
    if ps.d != f.d:
        raise DomainError(f"design has dimension {ps.d}, {f.fid} has {f.d}")
    if ps.domain != f.domain:
        raise DomainError(
            f"design lives in {ps.domain!r} but {f.fid} is defined on {f.domain!r}; scale it first"
        )


def evaluate_design(ps: PointSet, f: BenchmarkFunction) -> np.ndarray:
    """Evaluate every design point once; failures name the offending point."""
    try:
        return f.evaluate_batch(ps.points)
    except (EvaluationError, DomainError) as exc:
        for i, x in enumerate(ps.points):
            try:
                f.evaluate(x)
            except (EvaluationError, DomainError):
                raise type(exc)(f"design point {i}: {exc}") from exc
        raise


def run_one_shot(ps: PointSet, f: BenchmarkFunction, repetition: int = 0) -> OneShotOutcome:
    _check_domain(ps, f)
    values = evaluate_design(ps, f)
    best = int(np.argmin(values))  # first index wins ties
    f_best = float(values[best])
    return OneShotOutcome(
        ps.points[best].copy(), f_best, abs(f_best - f.f_star), ps.id, f.fid, ps.n,
        repetition, ps.n,
    )


def run_surrogate_one_shot(
    ps: PointSet,
    f: BenchmarkFunction,
    kind: str = "kriging",
    seed: int = 0,
    params=None,
    repetition: int = 0,
    search: Optional[SearchOptions] = None,
    model: Optional[surrogates.SurrogateModel] = None,
) -> SurrogateOneShotOutcome:
    """Fit a surrogate, descend it from its best design point, evaluate the result once.

    A supplied ``model`` replaces fitting (useful for oracle checks). When the
    fit fails the outcome falls back to the classic decision and is flagged
    ``degraded``.
    """
    _check_domain(ps, f)
    values = evaluate_design(ps, f)
    best = int(np.argmin(values))
    f_best = float(values[best])
    common = dict(
        x_best=ps.points[best].copy(), f_best=f_best, regret=abs(f_best - f.f_star),
        design_id=ps.id, fid=f.fid, n=ps.n, repetition=repetition, kind=kind, seed=seed,
    )
    if model is None:
        try:
            model = surrogates.fit(kind, surrogates.TrainingSet(ps.points, values, f.domain, f.fid, ps.id),
                                   seed, params)
        except surrogates.FitError:
            return SurrogateOneShotOutcome(
                **common, evaluations=ps.n, z=ps.points[best].copy(),
                x_hat=ps.points[best].copy(), f_hat=f_best, regret_hat=abs(f_best - f.f_star),
                improved=True, degraded=True,
            )
    predicted = model.predict_batch(ps.points)
    zi = int(np.argmin(predicted))
    z = ps.points[zi].copy()
    result = minimize_bounded(model.predict, z, f.domain, search)
    x_hat = result.x_hat
    f_hat = f.evaluate(x_hat)
    return SurrogateOneShotOutcome(
        **common, evaluations=ps.n + 1, z=z, x_hat=x_hat, f_hat=f_hat,
        regret_hat=abs(f_hat - f.f_star), improved=f_hat <= f_best,
        search_iterations=result.iterations,
    )


def draw_test_points(domain: Box, t: int, test_seed: int, index: int = 0) -> np.ndarray:
    """i.i.d. uniform test sample; identical for identical ``(test_seed, index)``."""
    rng = rng_for(test_seed, TEST_STREAM, index)
    return domain.lower + rng.random((t, domain.d)) * domain.width


def sample_digest(X: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(X).tobytes()).hexdigest()


def mse(model: surrogates.SurrogateModel, X: np.ndarray, y_true: np.ndarray) -> float:
    return float(np.mean((y_true - model.predict_batch(X)) ** 2))


def run_regression(
    ps: PointSet,
    f: BenchmarkFunction,
    kind: str = "kriging",
    seed: int = 0,
    test_seed: int = 0,
    t: int = 10_000,
    params=None,
    repetition: int = 0,
    test_index: int = 0,
    model: Optional[surrogates.SurrogateModel] = None,
) -> RegressionOutcome:
    _check_domain(ps, f)
    values = evaluate_design(ps, f)
    X_test = draw_test_points(f.domain, t, test_seed, test_index)
    digest = sample_digest(X_test)
    out = RegressionOutcome(ps.id, f.fid, kind, ps.n, repetition, math.nan, test_seed, t,
                            digest, ps.n, 0)
    if model is None:
        try:
            model = surrogates.fit(kind, surrogates.TrainingSet(ps.points, values, f.domain, f.fid, ps.id),
                                   seed, params)
        except surrogates.FitError:
            out.missing = True
            return out
    y_test = f.evaluate_batch(X_test)
    out.test_evaluations = t
    out.mse = mse(model, X_test, y_test)
    return out
