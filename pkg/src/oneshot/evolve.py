"""(1+1) evolutionary search for designs that minimize surrogate MSE on one function."""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from . import surrogates
from .benchfuncs import BenchmarkFunction
from .generators import GeneratorSpec, generate, rng_for
from .pipelines import draw_test_points, mse, sample_digest
from .pointset import PointSet, scale


@dataclass
class EvolveConfig:
    n: int
    d: int
    iterations: int = 2000
    sigma: float = 0.05  # mutation std as a fraction of the box width
    num_test_sets: int = 10
    test_set_size: int = 10_000
    kind: str = "kriging"
    params: object = None
    seed: int = 0
    test_seed: int = 0
    model_seed: int = 0

    def __post_init__(self):
        if self.n < 10:
            raise ValueError("evolution needs n >= 10 so that floor(n/10) >= 1 points mutate")
        if self.iterations < 0:
            raise ValueError("iterations must be non-negative")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")

    @property
    def mutation_count(self) -> int:
        return self.n // 10


@dataclass
class IterationRecord:
    iteration: int
    accepted: bool
    fitness: float  # fitness of the candidate examined in this iteration
    incumbent_fitness: float  # after the acceptance decision


@dataclass
class EvolveTrace:
    records: List[IterationRecord]
    initial: PointSet
    final: PointSet
    test_digests: List[str] = field(default_factory=list)

    @property
    def initial_fitness(self) -> float:
        return self.records[0].fitness

    @property
    def final_fitness(self) -> float:
        return self.records[-1].incumbent_fitness

    def accepted_fitness(self) -> List[float]:
        return [r.fitness for r in self.records if r.accepted]


TestSets = Sequence[Tuple[np.ndarray, np.ndarray]]


def make_test_sets(f: BenchmarkFunction, count: int, size: int, test_seed: int) -> list:
    """Draw and evaluate the frozen uniform test sets once."""
    sets = []
    for k in range(count):
        X = draw_test_points(f.domain, size, test_seed, k)
        sets.append((X, f.evaluate_batch(X)))
    return sets


def fitness(
    ps: PointSet,
    f: BenchmarkFunction,
    kind: str,
    test_sets: TestSets,
    model_seed: int = 0,
    params=None,
    model_factory: Optional[Callable] = None,
) -> float:
    """Mean MSE of a surrogate fitted on ``ps`` over the frozen test sets.

    A failing fit yields ``inf`` so that the candidate is never accepted.
    """
    try:
        if model_factory is not None:
            model = model_factory(ps, f)
        else:
            ts = surrogates.TrainingSet(ps.points, f.evaluate_batch(ps.points), f.domain, f.fid, ps.id)
            model = surrogates.fit(kind, ts, model_seed, params)
    except surrogates.FitError:
        return math.inf
    return float(np.mean([mse(model, X, y) for X, y in test_sets]))


def mutate(points: np.ndarray, count: int, sigma: np.ndarray, rng: np.random.Generator):
    """Perturb ``count`` distinct rows by per-coordinate Gaussian noise (no repair)."""
    rows = rng.choice(points.shape[0], size=count, replace=False)
    mutant = points.copy()
    mutant[rows] += rng.normal(0.0, 1.0, size=(count, points.shape[1])) * sigma
    return mutant, rows


def evolve_design(
    cfg: EvolveConfig,
    f: BenchmarkFunction,
    model_factory: Optional[Callable] = None,
    on_mutation: Optional[Callable] = None,
    progress: Optional[Callable] = None,
) -> EvolveTrace:
    """Run the elitist loop from a seeded LHS design and return its trace.

    ``on_mutation(iteration, incumbent, raw_mutant, repaired_mutant)`` is called
    for every offspring and exists for instrumentation.
    """
    if cfg.d != f.d:
        raise ValueError(f"config dimension {cfg.d} differs from {f.fid} dimension {f.d}")
    box = f.domain
    initial = scale(generate(GeneratorSpec("lhs", seed=cfg.seed, name="evolve-init"), cfg.n, cfg.d), box)
    test_sets = make_test_sets(f, cfg.num_test_sets, cfg.test_set_size, cfg.test_seed)
    digests = [sample_digest(X) for X, _ in test_sets]
    cache: OrderedDict = OrderedDict()

    def cached_fitness(ps: PointSet) -> float:
        key = ps.digest()
        if key not in cache:
            cache[key] = fitness(ps, f, cfg.kind, test_sets, cfg.model_seed, cfg.params, model_factory)
            while len(cache) > 64:
                cache.popitem(last=False)
        return cache[key]

    incumbent = initial
    current = cached_fitness(incumbent)
    if not math.isfinite(current):
        raise surrogates.FitError("surrogate could not be fitted on the initial design")
    records = [IterationRecord(0, True, current, current)]
    rng = rng_for(cfg.seed, 0xE70)
    sigma = cfg.sigma * box.width
    for it in range(1, cfg.iterations + 1):
        raw, _ = mutate(incumbent.points, cfg.mutation_count, sigma, rng)
        repaired = np.clip(raw, box.lower, box.upper)
        mutant = incumbent.replace_points(repaired, provenance=f"evolved fid={f.fid} seed={cfg.seed}")
        if on_mutation is not None:
            on_mutation(it, incumbent.points, raw, repaired)
        value = cached_fitness(mutant)
        accepted = value <= current
        if accepted:
            incumbent, current = mutant, value
        records.append(IterationRecord(it, accepted, value, current))
        if progress is not None:
            progress(it, accepted, value, current)
    final = incumbent.replace_points(
        incumbent.points, provenance=f"evolved fid={f.fid} kind={cfg.kind} seed={cfg.seed}"
    )
    return EvolveTrace(records, initial, final, digests)
