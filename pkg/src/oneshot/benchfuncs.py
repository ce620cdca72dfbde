"""Benchmark objectives with known optima, grouped by landscape structure.

The suite uses the raw textbook definitions on ``[-5, 5]^d``; where a function
needs random structure (rotations, peak locations) the randomness comes from
frozen seeds so every machine sees the same landscape.

=================  ==========================  =========================
fid                category                    optimum
=================  ==========================  =========================
sphere             separable-unimodal          0 at the origin
ellipsoid          separable-unimodal          0 at the origin
linear-slope       separable-unimodal          0 at the corner (5,...,5)
rot-ellipsoid      nonseparable-unimodal       0 at the origin
rosenbrock         nonseparable-unimodal       0 at (1,...,1)
sharp-ridge        nonseparable-unimodal       0 at the origin
rastrigin          multimodal-structured       0 at the origin
schaffer           multimodal-structured       0 at the origin
schwefel           multimodal-weak-structure   0 at (4.2097,...,4.2097)
gallagher          multimodal-weak-structure   0 at the highest peak
=================  ==========================  =========================
"""

from __future__ import annotations

import math
import shlex
import subprocess
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np
from scipy.optimize import minimize_scalar

from .pointset import Box, DomainError

CATEGORIES = (
    "separable-unimodal",
    "nonseparable-unimodal",
    "multimodal-structured",
    "multimodal-weak-structure",
)

ROTATION_SEED = 20190415
PEAKS_SEED = 20190416
GALLAGHER_PEAKS = 101


class EvaluationError(RuntimeError):
    def __init__(self, message: str, raw: Optional[str] = None):
        self.raw = raw
        super().__init__(message if raw is None else f"{message} (reply: {raw!r})")


class EvaluatorAborted(EvaluationError):
    pass


@dataclass(eq=False)
class BenchmarkFunction:
    """An objective ``f`` on a box with known optimal value ``f_star``.

    ``func`` maps an ``(m, d)`` array to ``m`` values; :meth:`evaluate` handles a
    single point and :meth:`evaluate_batch` a block of points.
    """

    fid: str
    d: int
    func: Callable[[np.ndarray], np.ndarray]
    f_star: float
    category: str
    x_star: Optional[np.ndarray] = None
    domain: Box = None
    description: str = ""
    evaluations: int = field(default=0, compare=False)

    def __post_init__(self):
        if self.domain is None:
            self.domain = Box.cube(self.d, -5.0, 5.0)
        if self.category not in CATEGORIES:
            raise ValueError(f"unknown category {self.category!r}")

    def _check(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.d:
            raise DomainError(f"{self.fid} expects dimension {self.d}, got {X.shape[1]}")
        bad = ~((X >= self.domain.lower) & (X <= self.domain.upper)).all(axis=1)
        if bad.any():
            i = int(np.argmax(bad))
            raise DomainError(f"{self.fid}: point {i} {X[i].tolist()} outside {self.domain!r}")
        return X

    def evaluate_batch(self, X) -> np.ndarray:
        X = self._check(X)
        self.evaluations += X.shape[0]
        return np.asarray(self.func(X), dtype=float)

    def evaluate(self, x) -> float:
        return float(self.evaluate_batch(np.asarray(x, dtype=float).reshape(1, -1))[0])

    __call__ = evaluate


# --- raw definitions (batched over rows) -----------------------------------


def _cond_weights(d: int, cond: float) -> np.ndarray:
    if d == 1:
        return np.ones(1)
    return cond ** (np.arange(d) / (d - 1))


def sphere(X):
    return np.sum(X**2, axis=1)


def _ellipsoid(X, w):
    return X**2 @ w


def _slope(X, s):
    return np.sum(5.0 * np.abs(s) - s * X, axis=1)


def rosenbrock(X):
    if X.shape[1] == 1:
        return (X[:, 0] - 1.0) ** 2
    a, b = X[:, :-1], X[:, 1:]
    return np.sum(100.0 * (b - a**2) ** 2 + (a - 1.0) ** 2, axis=1)


def _sharp_ridge(X, R):
    Z = X @ R.T
    return Z[:, 0] ** 2 + 100.0 * np.sqrt(np.sum(Z[:, 1:] ** 2, axis=1))


def rastrigin(X):
    d = X.shape[1]
    return 10.0 * d + np.sum(X**2 - 10.0 * np.cos(2.0 * np.pi * X), axis=1)


def schaffer(X):
    # Schaffer F7 over consecutive coordinate pairs
    if X.shape[1] == 1:
        s = np.abs(X)
    else:
        s = np.sqrt(X[:, :-1] ** 2 + X[:, 1:] ** 2)
    terms = np.sqrt(s) + np.sqrt(s) * np.sin(50.0 * s**0.2) ** 2
    return np.mean(terms, axis=1) ** 2


def _schwefel_1d(t):
    return -t * np.sin(np.sqrt(np.abs(t)))


def _schwefel_optimum():
    res = minimize_scalar(_schwefel_1d, bounds=(400.0, 450.0), method="bounded",
                          options={"xatol": 1e-12})
    return float(res.x), float(_schwefel_1d(res.x))


_SCHWEFEL_T, _SCHWEFEL_MIN = _schwefel_optimum()


def schwefel(X):
    # classic Schwefel 2.26 compressed from [-500, 500] onto [-5, 5]
    return np.sum(_schwefel_1d(100.0 * X) - _SCHWEFEL_MIN, axis=1)


def rotation(d: int, seed: int = ROTATION_SEED) -> np.ndarray:
    """Orthogonal matrix from the QR decomposition of a seeded Gaussian matrix."""
    rng = np.random.default_rng([seed, d])
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


def gallagher_peaks(d: int, seed: int = PEAKS_SEED, peaks: int = GALLAGHER_PEAKS):
    rng = np.random.default_rng([seed, d])
    centers = rng.uniform(-4.0, 4.0, size=(peaks, d))
    weights = np.empty(peaks)
    weights[0] = 10.0
    weights[1:] = 1.1 + 8.0 * np.arange(peaks - 1) / (peaks - 2)
    # per-peak axis scalings with condition numbers between 1 and 1000
    conds = np.empty(peaks)
    conds[0] = 1000.0**0.5
    conds[1:] = 1000.0 ** (2.0 * rng.permutation(peaks - 1) / (peaks - 2))
    scales = np.stack([rng.permutation(_cond_weights(d, c)) / c**0.25 for c in conds])
    return centers, weights, scales


def _gallagher(X, centers, weights, scales, R):
    Z = X @ R.T
    C = centers @ R.T
    diff = Z[:, None, :] - C[None, :, :]
    q = np.einsum("mpd,pd->mp", diff**2, scales)
    heights = weights[None, :] * np.exp(-q / (2.0 * X.shape[1]))
    return 10.0 - heights.max(axis=1)


# --- registry --------------------------------------------------------------


def _build(fid: str, d: int) -> BenchmarkFunction:
    zeros = np.zeros(d)
    if fid == "sphere":
        return BenchmarkFunction(fid, d, sphere, 0.0, "separable-unimodal", zeros,
                                 description="sum of squares")
    if fid == "ellipsoid":
        w = _cond_weights(d, 1e6)
        return BenchmarkFunction(fid, d, lambda X: _ellipsoid(X, w), 0.0, "separable-unimodal",
                                 zeros, description="axis-parallel ellipsoid, condition 1e6")
    if fid == "linear-slope":
        s = _cond_weights(d, 10.0)
        return BenchmarkFunction(fid, d, lambda X: _slope(X, s), 0.0, "separable-unimodal",
                                 np.full(d, 5.0), description="linear slope, optimum at a corner")
    if fid == "rot-ellipsoid":
        w = _cond_weights(d, 1e6)
        R = rotation(d)
        return BenchmarkFunction(fid, d, lambda X: _ellipsoid(X @ R.T, w), 0.0,
                                 "nonseparable-unimodal", zeros,
                                 description="rotated ellipsoid, condition 1e6")
    if fid == "rosenbrock":
        return BenchmarkFunction(fid, d, rosenbrock, 0.0, "nonseparable-unimodal", np.ones(d),
                                 description="Rosenbrock valley")
    if fid == "sharp-ridge":
        R = rotation(d, ROTATION_SEED + 1)
        return BenchmarkFunction(fid, d, lambda X: _sharp_ridge(X, R), 0.0,
                                 "nonseparable-unimodal", zeros, description="rotated sharp ridge")
    if fid == "rastrigin":
        return BenchmarkFunction(fid, d, rastrigin, 0.0, "multimodal-structured", zeros,
                                 description="Rastrigin")
    if fid == "schaffer":
        return BenchmarkFunction(fid, d, schaffer, 0.0, "multimodal-structured", zeros,
                                 description="Schaffer F7")
    if fid == "schwefel":
        return BenchmarkFunction(fid, d, schwefel, 0.0, "multimodal-weak-structure",
                                 np.full(d, _SCHWEFEL_T / 100.0),
                                 description="Schwefel 2.26 rescaled, off-centre optimum")
    if fid == "gallagher":
        centers, weights, scales = gallagher_peaks(d)
        R = rotation(d, ROTATION_SEED + 2)
        return BenchmarkFunction(fid, d, lambda X: _gallagher(X, centers, weights, scales, R),
                                 0.0, "multimodal-weak-structure", centers[0].copy(),
                                 description=f"Gallagher {GALLAGHER_PEAKS} random peaks")
    raise KeyError(f"unknown function {fid!r}; known: {', '.join(FUNCTION_IDS)}")


FUNCTION_IDS = (
    "sphere", "ellipsoid", "linear-slope",
    "rot-ellipsoid", "rosenbrock", "sharp-ridge",
    "rastrigin", "schaffer",
    "schwefel", "gallagher",
)


def get_function(fid: str, d: int) -> BenchmarkFunction:
    if not 1 <= d <= 10:
        raise ValueError(f"unsupported dimension {d}")
    return _build(fid, d)


def suite(d: int) -> List[BenchmarkFunction]:
    if not 2 <= d <= 10:
        raise ValueError(f"suite supports d in 2..10, got {d}")
    return [_build(fid, d) for fid in FUNCTION_IDS]


def evaluate(fid: str, x) -> float:
    x = np.asarray(x, dtype=float)
    return get_function(fid, x.shape[-1]).evaluate(x)


# --- external evaluators ---------------------------------------------------


class ExternalEvaluator:
    """Line protocol client: one whitespace-separated point out, one number back.

    A crashed evaluator is restarted and the point retried once; a second
    consecutive failure raises :class:`EvaluatorAborted`. Replies that are not
    finite numbers raise :class:`EvaluationError` immediately.
    """

    def __init__(self, command: Union[str, Sequence[str]], timeout: float = 30.0):
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        self.timeout = timeout
        self.proc: Optional[subprocess.Popen] = None
        self.restarts = 0

    def start(self):
        self.close()
        self.proc = subprocess.Popen(
            self.command, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
            text=True, bufsize=1,
        )

    def close(self):
        if self.proc is not None:
            try:
                if self.proc.stdin:
                    self.proc.stdin.close()
                self.proc.terminate()
                self.proc.wait(timeout=5)
            except (OSError, subprocess.TimeoutExpired):
                self.proc.kill()
            self.proc = None

    def _exchange(self, line: str) -> str:
        if self.proc is None or self.proc.poll() is not None:
            self.start()
        try:
            self.proc.stdin.write(line + "\n")
            self.proc.stdin.flush()
            reply = self.proc.stdout.readline()
        except (BrokenPipeError, OSError) as exc:
            raise ConnectionError(str(exc)) from exc
        if reply == "":
            raise ConnectionError("evaluator closed its output")
        return reply

    def __call__(self, x: np.ndarray) -> float:
        line = " ".join(repr(float(v)) for v in x)
        try:
            reply = self._exchange(line)
        except ConnectionError:
            self.restarts += 1
            self.start()
            try:
                reply = self._exchange(line)
            except ConnectionError as exc:
                self.close()
                raise EvaluatorAborted(f"evaluator failed twice in a row: {exc}") from exc
        try:
            value = float(reply.strip())
        except ValueError:
            raise EvaluationError("non-numeric reply", reply) from None
        if not math.isfinite(value):
            raise EvaluationError("non-finite reply", reply)
        return value

    def __del__(self):
        self.close()


def external_function(
    command: Union[str, Sequence[str]],
    d: int,
    f_star: float,
    fid: str = "external",
    category: str = "multimodal-weak-structure",
    domain: Optional[Box] = None,
) -> BenchmarkFunction:
    evaluator = ExternalEvaluator(command)

    def func(X):
        return np.array([evaluator(x) for x in X])

    fn = BenchmarkFunction(fid, d, func, f_star, category, None, domain,
                           description=f"external: {' '.join(evaluator.command)}")
    fn.evaluator = evaluator
    return fn
