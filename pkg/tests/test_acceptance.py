"""Acceptance criteria 1-11. Each test prints one PASS/FAIL line (also collected
into the terminal summary) and then asserts it."""

import hashlib
import math
import shutil
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from oneshot import surrogates as sg
from oneshot.benchfuncs import FUNCTION_IDS, get_function
from oneshot.discrepancy import star_discrepancy_exact
from oneshot.evolve import EvolveConfig, evolve_design
from oneshot.generators import (
    GeneratorSpec, count_generalized_halton, enumerate_generalized_halton, generate, halton,
)
from oneshot.harness import execute, load_config
from oneshot.pipelines import run_regression, run_surrogate_one_shot
from oneshot.pointset import Box, scale
from oneshot.report import ResultRecord, average_ranks, mse_ratio_matrix, worse_factors
from oracles import fine_grid_sup

DEMO_CONFIG = Path(__file__).resolve().parent.parent / "configs" / "demo.ini"
BOX4 = Box.cube(4, -5, 5)


def verdict(number, ok, detail, started):
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}  [{time.time() - started:.1f}s]"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def lhs(n, d, seed):
    return scale(generate(GeneratorSpec("lhs", seed=seed), n, d), Box.cube(d, -5, 5))


def test_criterion_01_oracle_equivalence():
    t0 = time.time()
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(50):
        n, d = int(rng.integers(1, 17)), int(rng.integers(1, 3))
        x = rng.random((n, d))
        worst = max(worst, abs(star_discrepancy_exact(x).value - fine_grid_sup(x, 400)))
    verdict(1, worst <= 2 / 400 and time.time() - t0 < 60,
            f"max |exact - 400-grid sup| = {worst:.5f} over 50 sets (tol {2 / 400})", t0)


def test_criterion_02_midpoint_exactness():
    t0 = time.time()
    worst = 0.0
    for n in range(1, 65):
        x = ((2 * np.arange(1, n + 1) - 1) / (2 * n))[:, None]
        worst = max(worst, abs(star_discrepancy_exact(x).value - 1 / (2 * n)))
    verdict(2, worst <= 1e-12, f"max |D* - 1/(2n)| = {worst:.2e} for n = 1..64", t0)


def test_criterion_03_halton_table_spot_check():
    t0 = time.time()
    value = star_discrepancy_exact(generate(halton(4), 125, 4)).value
    ok = abs(value - 0.083) <= 0.15 * 0.083 and time.time() - t0 <= 300
    verdict(3, ok, f"Halton n=125 d=4 exact D* = {value:.6f} (target 0.083 +-15%)", t0)


def test_criterion_04_enumeration_count():
    t0 = time.time()
    count = sum(1 for _ in enumerate_generalized_halton(4))
    elapsed = time.time() - t0
    ok = count == 34_560 == count_generalized_halton(4) and elapsed < 1.0
    verdict(4, ok, f"enumerated {count} tuples in {elapsed:.3f}s", t0)


def test_criterion_05_lhs_stratification():
    t0 = time.time()
    rng = np.random.default_rng(5)
    failures = 0
    for k in range(1000):
        n, d = int(rng.integers(1, 1001)), int(rng.integers(1, 5))
        pts = generate(GeneratorSpec("lhs", seed=k), n, d).points
        strata = np.floor(pts * n).astype(int)
        for j in range(d):
            if not np.array_equal(np.sort(strata[:, j]), np.arange(n)):
                failures += 1
                break
    verdict(5, failures == 0 and time.time() - t0 < 60,
            f"{1000 - failures}/1000 LHS designs stratified", t0)


def test_criterion_06_kriging_interpolation():
    t0 = time.time()
    worst, where = 0.0, None
    for fid in ("sphere", "rosenbrock"):
        f = get_function(fid, 4)
        for n in (50, 125, 250, 500):
            for seed in range(2):
                ps = lhs(n, 4, seed)
                y = f.evaluate_batch(ps.points)
                m = sg.fit("kriging", sg.TrainingSet(ps.points, y, f.domain))
                err = float(np.max(np.abs(m.predict_batch(ps.points) - y)) / np.ptp(y))
                if err > worst:
                    worst, where = err, (fid, n, seed)
    ok = worst <= 1e-4 and time.time() - t0 < 120
    verdict(6, ok, f"worst training misfit {worst:.2e} * range(y) at {where} (tol 1e-4)", t0)


def test_criterion_07_surrogate_benefit():
    t0 = time.time()
    sphere = get_function("sphere", 4)
    improved = sum(
        run_surrogate_one_shot(lhs(1000, 4, 100 + r), sphere, "kriging", seed=r).improved for r in range(20)
    )
    slope = get_function("linear-slope", 4)
    runs = [run_surrogate_one_shot(lhs(1000, 4, 200 + r), slope, "kriging", seed=r) for r in range(20)]
    med_hat = float(np.median([o.regret_hat for o in runs]))
    med = float(np.median([o.regret for o in runs]))
    ok = improved >= 18 and med_hat <= med / 1.5 and time.time() - t0 < 600
    verdict(7, ok, f"sphere improved {improved}/20; slope median regret_hat {med_hat:.3g} "
                   f"vs regret/1.5 {med / 1.5:.3g}", t0)


def test_criterion_08_regression_ordering():
    t0 = time.time()
    draws, t = 10, 10_000
    wins = []
    for i, fid in enumerate(FUNCTION_IDS):
        f = get_function(fid, 4)
        means = {}
        for kind in ("uniform", "lhs"):
            mses = []
            for r in range(draws):
                ps = scale(generate(GeneratorSpec(kind, seed=1000 * i + r), 125, 4), BOX4)
                mses.append(run_regression(ps, f, "kriging", seed=r, test_seed=i, t=t).mse)
            means[kind] = float(np.mean(mses))
        wins.append(means["uniform"] >= means["lhs"])
    ok = sum(wins) >= 6 and time.time() - t0 < 900
    verdict(8, ok, f"uniform MSE >= LHS MSE on {sum(wins)}/10 functions "
                   f"({', '.join(f for f, w in zip(FUNCTION_IDS, wins) if w)})", t0)


def test_criterion_09_evolution():
    t0 = time.time()
    f = get_function("sphere", 4)
    successes, invariant_breaks, ratios = 0, 0, []
    for seed in range(10):
        cfg = EvolveConfig(n=125, d=4, iterations=200, seed=seed, test_seed=seed)

        def on_mutation(it, incumbent, raw, repaired):
            nonlocal invariant_breaks
            changed = np.any(raw != incumbent, axis=1)
            if changed.sum() != 12 or not np.array_equal(raw[~changed], incumbent[~changed]):
                invariant_breaks += 1
            if not all(f.domain.contains(x) for x in repaired):
                invariant_breaks += 1

        trace = evolve_design(cfg, f, on_mutation=on_mutation)
        accepted = trace.accepted_fitness()
        if any(b > a for a, b in zip(accepted, accepted[1:])):
            invariant_breaks += 1
        ratios.append(trace.final_fitness / trace.initial_fitness)
        successes += trace.final_fitness <= 0.9 * trace.initial_fitness
    ok = successes >= 8 and invariant_breaks == 0 and time.time() - t0 < 1200
    verdict(9, ok, f"final <= 0.9 initial in {successes}/10 runs (median ratio {np.median(ratios):.3f}); "
                   f"{invariant_breaks} invariant violations", t0)


def _reg(design, fid, value):
    return ResultRecord("regression", design, fid, 125, 4, "kriging", 0, "mse", value)


def test_criterion_10_report_correctness():
    t0 = time.time()
    fixture = [
        _reg("A", "f1", 1.0), _reg("B", "f1", 2.0), _reg("C", "f1", 3.0),
        _reg("A", "f2", 0.5), _reg("B", "f2", 4.0), _reg("C", "f2", 4.0),
        _reg("A", "f3", 2.0), _reg("B", "f3", 9.0), _reg("C", "f3", 1.0),
    ]
    # per-function mid-ranks: f1 (1, 2, 3); f2 (1, 2.5, 2.5); f3 (2, 3, 1)
    expected = {"A": 4 / 3, "B": 7.5 / 3, "C": 6.5 / 3}
    ranks_ok = average_ranks(fixture) == expected
    evolved = fixture + [_reg("evolved-f1", "f1", 0.8), _reg("evolved-f2", "f2", 0.25),
                         _reg("evolved-f1", "f2", 0.3), _reg("evolved-f2", "f1", 5.0)]
    matrix = mse_ratio_matrix(evolved)
    diag_ok = matrix["f1"]["evolved-f1"] == 1.0 and matrix["f2"]["evolved-f2"] == 1.0
    factors = worse_factors(evolved, task="regression").factors
    factors_ok = all(v >= 1.0 for v in factors.values())
    verdict(10, ranks_ok and diag_ok and factors_ok,
            f"ranks {average_ranks(fixture)}; ratio diagonal exact: {diag_ok}; "
            f"min worse factor {min(factors.values()):.3f}", t0)


def _sha(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def test_criterion_11_harness_determinism(tmp_path):
    t0 = time.time()
    cfg = load_config(DEMO_CONFIG)
    one, eight, resumed = tmp_path / "w1.csv", tmp_path / "w8.csv", tmp_path / "resumed.csv"
    execute(cfg, one, workers=1)
    execute(cfg, eight, workers=8)
    partial = execute(cfg, resumed, workers=2, stop_after=40)
    shutil.copy(resumed, tmp_path / "partial.csv")
    execute(cfg, resumed, workers=1)
    digests = {_sha(one), _sha(eight), _sha(resumed)}
    ok = len(digests) == 1 and partial.interrupted and _sha(tmp_path / "partial.csv") != _sha(one)
    verdict(11, ok, f"1-worker, 8-worker and interrupted+resumed CSVs identical: {len(digests) == 1} "
                    f"(sha256 {_sha(one)[:12]})", t0)
