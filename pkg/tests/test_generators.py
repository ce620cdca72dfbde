import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oneshot.generators import (
    GeneratorConfigError, GeneratorSpec, braaten_weller, count_generalized_halton,
    enumerate_generalized_halton, first_primes, format_permutations, generate, halton, load_permutations,
    parse_permutations, radical_inverse, search_best_generator,
)
from oracles import radical_inverse_exact, star_discrepancy_brute


def test_radical_inverse_examples():
    assert radical_inverse(1, 2) == 0.5
    assert radical_inverse(3, 2) == 0.75
    assert radical_inverse(1, 3, (0, 2, 1)) == pytest.approx(2 / 3, abs=1e-15)


def test_radical_inverse_rejects_bad_base():
    with pytest.raises(ValueError):
        radical_inverse(1, 1)


@given(st.integers(1, 10**6), st.sampled_from([2, 3, 5, 7, 11, 13]), st.randoms())
def test_radical_inverse_matches_fraction_oracle(index, base, rnd):
    perm = [0] + rnd.sample(range(1, base), base - 1)
    expect = radical_inverse_exact(index, base, perm)
    assert abs(radical_inverse(index, base, perm) - float(expect)) <= 1e-15


def test_first_halton_point():
    ps = generate(GeneratorSpec("halton", (2, 3)), 1, 2)
    assert ps.points[0, 0] == 0.5
    assert ps.points[0, 1] == pytest.approx(1 / 3, abs=1e-15)


def test_halton_start_index_offsets_sequence():
    a = generate(GeneratorSpec("halton", (2, 3), start_index=1), 10, 2).points
    b = generate(GeneratorSpec("halton", (2, 3), start_index=4), 7, 2).points
    assert np.array_equal(a[3:], b)


def test_halton_matches_oracle_coordinates():
    ps = generate(halton(4), 50, 4)
    for i in (0, 7, 49):
        for j, b in enumerate(first_primes(4)):
            assert ps.points[i, j] == pytest.approx(float(radical_inverse_exact(i + 1, b)), abs=1e-15)


def test_halton_points_distinct_and_in_half_open_cube():
    pts = generate(halton(4), 1000, 4).points
    assert len({tuple(r) for r in pts}) == 1000
    assert pts.min() >= 0 and pts.max() < 1


def test_lhs_quarters():
    pts = generate(GeneratorSpec("lhs", seed=1), 4, 1).points[:, 0]
    assert sorted(np.floor(pts * 4).astype(int)) == [0, 1, 2, 3]


@given(st.integers(1, 300), st.integers(1, 5), st.integers(0, 2**64 - 1))
def test_lhs_one_point_per_stratum(n, d, seed):
    pts = generate(GeneratorSpec("lhs", seed=seed), n, d).points
    for j in range(d):
        assert sorted(np.floor(pts[:, j] * n).astype(int)) == list(range(n))


def test_uniform_is_deterministic():
    spec = GeneratorSpec("uniform", seed=99)
    assert generate(spec, 1000, 4) == generate(spec, 1000, 4)
    assert generate(spec, 10, 4) != generate(spec.with_seed(100), 10, 4)


def test_streams_are_independent():
    spec = GeneratorSpec("lhs", seed=5)
    a = generate(spec.with_seed(5, 0), 20, 2).points
    b = generate(spec.with_seed(5, 1), 20, 2).points
    assert not np.array_equal(a, b)


@pytest.mark.parametrize("kind", ["lhs", "uniform"])
def test_unseeded_stochastic_kind_refused(kind):
    with pytest.raises(GeneratorConfigError):
        generate(GeneratorSpec(kind), 5, 2)


def test_permutation_must_fix_zero():
    with pytest.raises(GeneratorConfigError):
        GeneratorSpec("gh", (3,), ((1, 0, 2),))
    with pytest.raises(GeneratorConfigError):
        GeneratorSpec("gh", (3,), ((0, 1, 1),))


def test_permutation_file_round_trip():
    bases, perms = (2, 3, 5), ((0, 1), (0, 2, 1), (0, 3, 1, 4, 2))
    assert parse_permutations(format_permutations(bases, perms)) == (bases, perms)


def test_braaten_weller_table_is_valid():
    spec = braaten_weller(6)
    assert spec.bases == (2, 3, 5, 7, 11, 13)
    for b, p in zip(spec.bases, spec.permutations):
        assert p[0] == 0 and sorted(p) == list(range(b))


@pytest.mark.parametrize("d, count", [(1, 1), (2, 2), (3, 48), (4, 34_560)])
def test_enumeration_counts(d, count):
    assert count_generalized_halton(d) == count
    if d <= 3:
        tuples = list(enumerate_generalized_halton(d))
        assert len(tuples) == count == len(set(tuples))


def test_enumeration_refuses_large_d():
    with pytest.raises(GeneratorConfigError, match=r"1.257e\+33"):
        next(enumerate_generalized_halton(7))


def test_enumeration_starts_with_identity():
    first = next(enumerate_generalized_halton(4))
    assert first == tuple(tuple(range(b)) for b in (2, 3, 5, 7))


def test_search_best_n16_d2_matches_brute_force():
    spec, value = search_best_generator(16, 2)
    # both candidates evaluated by the brute-force oracle; frozen
    candidates = {((0, 1), (0, 1, 2)): 0.17361111111111127, ((0, 1), (0, 2, 1)): 0.13194444444444442}
    assert spec.permutations == ((0, 1), (0, 2, 1))
    assert value == pytest.approx(candidates[spec.permutations], abs=1e-12)
    assert value == pytest.approx(star_discrepancy_brute(generate(spec, 16, 2).points), abs=1e-12)


def test_search_budget_one_returns_first_tuple():
    spec, value = search_best_generator(16, 2, budget=1)
    assert spec.permutations == ((0, 1), (0, 1, 2))
    assert value == pytest.approx(0.17361111111111127, abs=1e-12)


def test_search_zero_budget_is_error():
    with pytest.raises(GeneratorConfigError):
        search_best_generator(16, 2, budget=0)


@pytest.mark.slow
def test_full_search_reproduces_bundled_generator():
    from importlib import resources

    expected = load_permutations(resources.files("oneshot") / "data" / "best_n125_d4.perm")
    spec, value = search_best_generator(125, 4)
    assert (spec.bases, spec.permutations) == expected
    assert value == pytest.approx(0.056085128495842684, abs=1e-12)
