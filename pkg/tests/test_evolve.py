import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oneshot import surrogates as sg
from oneshot.benchfuncs import get_function
from oneshot.evolve import EvolveConfig, evolve_design, fitness, make_test_sets, mutate
from oneshot.generators import GeneratorSpec, generate
from oneshot.pipelines import run_regression
from oneshot.pointset import scale


def small_cfg(**kw):
    base = dict(n=20, d=2, iterations=15, num_test_sets=3, test_set_size=400, seed=1)
    base.update(kw)
    return EvolveConfig(**base)


def test_config_validation():
    with pytest.raises(ValueError):
        EvolveConfig(n=9, d=2)
    assert EvolveConfig(n=125, d=4).mutation_count == 12


def test_zero_iterations_returns_initial():
    f = get_function("sphere", 2)
    trace = evolve_design(small_cfg(iterations=0), f)
    assert np.array_equal(trace.final.points, trace.initial.points)
    assert len(trace.records) == 1


def test_initial_design_is_seeded_lhs():
    f = get_function("sphere", 2)
    trace = evolve_design(small_cfg(iterations=0, seed=4), f)
    expect = scale(generate(GeneratorSpec("lhs", seed=4), 20, 2), f.domain)
    assert np.array_equal(trace.initial.points, expect.points)


def test_oracle_fitness_is_zero():
    f = get_function("rastrigin", 2)
    ps = scale(generate(GeneratorSpec("lhs", seed=0), 20, 2), f.domain)
    sets = make_test_sets(f, 2, 300, 0)
    value = fitness(ps, f, "kriging", sets, model_factory=lambda ps, f: sg.FunctionModel(f.func, 2))
    assert value == 0.0


def test_fitness_is_mean_of_regression_mses():
    f = get_function("rosenbrock", 2)
    ps = scale(generate(GeneratorSpec("lhs", seed=2), 30, 2), f.domain)
    sets = make_test_sets(f, 4, 500, test_seed=8)
    value = fitness(ps, f, "kriging", sets, model_seed=0)
    mses = [run_regression(ps, f, "kriging", 0, 8, 500, test_index=k).mse for k in range(4)]
    assert value == pytest.approx(np.mean(mses), rel=1e-12)
    assert fitness(ps, f, "kriging", sets) == value


def test_fit_failure_is_infinite():
    f = get_function("sphere", 2)
    sets = make_test_sets(f, 1, 10, 0)

    def broken(ps, f):
        raise sg.FitError("nope")

    ps = scale(generate(GeneratorSpec("lhs", seed=0), 20, 2), f.domain)
    assert fitness(ps, f, "kriging", sets, model_factory=broken) == np.inf


def test_mutate_touches_exactly_count_rows(rng):
    pts = rng.uniform(-5, 5, (50, 3))
    mutant, rows = mutate(pts, 5, np.full(3, 0.5), rng)
    changed = np.nonzero(np.any(mutant != pts, axis=1))[0]
    assert sorted(changed) == sorted(rows) and len(set(rows)) == 5


@settings(max_examples=8)
@given(st.integers(10, 30), st.sampled_from(["sphere", "rastrigin", "linear-slope"]), st.integers(0, 100),
       st.floats(0.05, 0.5))
def test_evolution_invariants(n, fid, seed, sigma):
    f = get_function(fid, 2)
    cfg = EvolveConfig(n=n, d=2, iterations=10, sigma=sigma, num_test_sets=2, test_set_size=200,
                       seed=seed, kind="tree")
    seen = []

    def on_mutation(it, incumbent, raw, repaired):
        differing = np.any(raw != incumbent, axis=1)
        assert differing.sum() == n // 10
        assert np.array_equal(raw[~differing], incumbent[~differing])
        assert all(f.domain.contains(x) for x in repaired)
        # repair only projects violating components onto the boundary
        assert np.array_equal(repaired, np.clip(raw, f.domain.lower, f.domain.upper))
        seen.append(it)

    trace = evolve_design(cfg, f, on_mutation=on_mutation)
    assert seen == list(range(1, 11))
    accepted = trace.accepted_fitness()
    assert all(b <= a for a, b in zip(accepted, accepted[1:]))
    assert trace.final_fitness <= trace.initial_fitness
    assert len(set(trace.test_digests)) == 2
    for r in trace.records[1:]:
        assert r.accepted == (r.fitness <= trace.records[r.iteration - 1].incumbent_fitness)


def test_run_is_reproducible():
    f = get_function("sphere", 2)
    a = evolve_design(small_cfg(), f)
    b = evolve_design(small_cfg(), f)
    assert np.array_equal(a.final.points, b.final.points)
    assert [r.fitness for r in a.records] == [r.fitness for r in b.records]


def test_test_sets_frozen_across_iterations():
    f = get_function("sphere", 2)
    def factory(ps, f):
        return sg.ConstantModel(0.0, 2)

    trace = evolve_design(small_cfg(iterations=5), f, model_factory=factory)
    # constant model: fitness depends only on the (frozen) test sets
    assert len({r.fitness for r in trace.records}) == 1
    assert all(r.accepted for r in trace.records)
