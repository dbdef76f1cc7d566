"""End-to-end acceptance checks for the benchmark.

Each test prints one `criterion NN: PASS/FAIL` line (visible with pytest -rA
or -s). The trend criteria share a single execution of the full default grid
(17 runs x 5 seeds on the default synthetic dataset), provided by a
session-scoped fixture; the determinism criterion executes the grid a second
time and compares report files byte-for-byte modulo the timing columns.
"""

from __future__ import annotations

import copy
import math
import statistics
import time
from time import perf_counter

import numpy as np
import pytest

from poisonbench.data import GenConfig, generate_dataset, generate_trigger_patch
from poisonbench.harness import GridConfig, RunConfig, run_grid, write_reports
from poisonbench.metrics import alc, aip, macro_fscore, pdm, ttd
from poisonbench.nn import ArchSpec, backward, init_model
from poisonbench.poison import (
    GLOBAL_REPLACEMENT,
    LOCAL_PATCH,
    PoisonPlan,
    execute_round,
    plan_rounds,
    select_victims,
)
from conftest import make_instances
from oracles import fd_gradients, max_relative_error

ALPHAS = (0.05, 0.10, 0.15, 0.20)
SEEDS = (1, 2, 3, 4, 5)


def check(criterion: int, ok: bool, detail: str) -> None:
    print(f"criterion {criterion:2d}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"criterion {criterion}: {detail}"


@pytest.fixture(scope="session")
def default_grid():
    """One full default-grid execution: (reports, wall seconds)."""
    t0 = perf_counter()
    reports = run_grid(GridConfig())
    return reports, perf_counter() - t0


def med(reports, strategy, alpha, beta, field):
    cell = [getattr(r, field) for r in reports
            if (r.strategy, r.alpha, r.beta) == (strategy, alpha, beta)]
    assert len(cell) == len(SEEDS), f"expected one report per seed for {(strategy, alpha, beta)}"
    return statistics.median(cell)


def med_base(reports, field):
    cell = [getattr(r, field) for r in reports if r.strategy == "base"]
    assert len(cell) == len(SEEDS)
    return statistics.median(cell)


def adjacent_inversions(curve, increasing: bool) -> int:
    bad = 0
    for a, b in zip(curve, curve[1:]):
        if (b < a) if increasing else (b > a):
            bad += 1
    return bad


def test_criterion_01_gradient_oracle():
    t0 = perf_counter()
    arch = ArchSpec(input_width=8, input_height=8, conv_blocks=((3, 3),), hidden_units=10, class_count=4)
    worst = 0.0
    for seed in (11, 16, 22):  # seeds keep all pre-activations clear of ReLU kinks
        model = init_model(arch, seed)
        assert model.param_count() <= 5000
        rng = np.random.default_rng([seed, 77])
        batch = make_instances(rng, 8, arch.class_count, side=8)
        worst = max(worst, max_relative_error(backward(model, batch), fd_gradients(model, batch, h=1e-3)))
    elapsed = perf_counter() - t0
    check(1, worst < 1e-4 and elapsed < 10.0,
          f"analytic vs central differences worst rel err {worst:.2e} (< 1e-4), {elapsed:.1f}s (< 10s)")


def test_criterion_02_base_model_competence(default_grid):
    reports, _ = default_grid
    bases = [r for r in reports if r.strategy == "base"]
    fmedian = statistics.median(r.fscore for r in bases)
    slowest = max(r.training_seconds for r in bases)
    check(2, fmedian >= 0.90 and slowest < 60.0,
          f"median base macro fscore {fmedian:.4f} (>= 0.90), slowest run {slowest:.1f}s (< 60s)")


def test_criterion_03_alc_effectiveness_trend(default_grid):
    reports, _ = default_grid
    base_alc = med_base(reports, "alc")
    top_global = med(reports, GLOBAL_REPLACEMENT, 0.20, 1, "alc")
    curves_ok = True
    details = [f"global alc(a=0.20,b=1) {top_global:.4f} > base {base_alc:.4f}"]
    for strategy in (LOCAL_PATCH, GLOBAL_REPLACEMENT):
        curve = [med(reports, strategy, a, 1, "alc") for a in ALPHAS]
        inversions = adjacent_inversions(curve, increasing=True)
        curves_ok = curves_ok and inversions <= 1
        details.append(f"{strategy} curve inversions {inversions}")
    check(3, top_global > base_alc and curves_ok, "; ".join(details))


def test_criterion_04_frequency_trend(default_grid):
    reports, _ = default_grid
    ok = True
    details = []
    for strategy in (LOCAL_PATCH, GLOBAL_REPLACEMENT):
        fast = med(reports, strategy, 0.20, 1, "alc")
        slow = med(reports, strategy, 0.20, 10, "alc")
        ok = ok and fast >= slow
        details.append(f"{strategy} alc b=1 {fast:.4f} >= b=10 {slow:.4f}")
    check(4, ok, "; ".join(details))


def test_criterion_05_aip_effectiveness_trend(default_grid):
    reports, _ = default_grid
    base_aip = med_base(reports, "aip")
    ok = True
    details = [f"base aip {base_aip:.4f}"]
    for strategy in (LOCAL_PATCH, GLOBAL_REPLACEMENT):
        top = med(reports, strategy, 0.20, 1, "aip")
        curve = [med(reports, strategy, a, 1, "aip") for a in ALPHAS]
        inversions = adjacent_inversions(curve, increasing=False)
        ok = ok and top < base_aip and inversions <= 1
        details.append(f"{strategy} aip(a=0.20,b=1) {top:.4f}, inversions {inversions}")
    check(5, ok, "; ".join(details))


def test_criterion_06_ttd_stealthiness(default_grid):
    reports, _ = default_grid
    base_seconds = med_base(reports, "training_seconds")
    ok = True
    details = [f"median base training {base_seconds:.2f}s"]
    for strategy in (LOCAL_PATCH, GLOBAL_REPLACEMENT):
        overhead = med(reports, strategy, 0.20, 1, "ttd")
        ok = ok and overhead <= 0.10 * base_seconds
        details.append(f"{strategy} median ttd {overhead:+.3f}s (<= 10%)")
    check(6, ok, "; ".join(details))


def test_criterion_07_pdm_ordering(default_grid):
    reports, _ = default_grid
    ok = True
    details = []
    for strategy in (LOCAL_PATCH, GLOBAL_REPLACEMENT):
        gentle = med(reports, strategy, 0.05, 10, "pdm")
        harsh = med(reports, strategy, 0.20, 1, "pdm")
        ok = ok and gentle <= harsh
        details.append(f"{strategy} pdm(a=0.05,b=E) {gentle:+.4f} <= pdm(a=0.20,b=1) {harsh:+.4f}")
    check(7, ok, "; ".join(details))


def test_criterion_08_metric_unit_suite():
    tol = 1e-9
    ok = abs(alc([1.0, 0.5, 0.25]) - (-0.375)) < tol
    ok = ok and abs(alc([2.0, 2.5]) - 0.5) < tol
    ok = ok and abs(alc([1.2] * 5)) < tol
    ok = ok and abs(macro_fscore(np.array([[5, 1], [2, 4]])) - 107.0 / 143.0) < tol
    ok = ok and abs(macro_fscore(np.array([[2, 1, 0], [0, 3, 1], [1, 0, 2]])) - 25.0 / 36.0) < tol
    ok = ok and abs(macro_fscore(np.array([[3, 0], [0, 0]])) - 0.5) < tol
    ok = ok and abs(ttd(10.0, 12.5) - 2.5) < tol
    ok = ok and abs(pdm(0.95, 0.90) - 0.05) < tol
    rng = np.random.default_rng(0)
    telescoped = 0
    for _ in range(1000):
        n = int(rng.integers(2, 40))
        losses = rng.uniform(0.0, 5.0, size=n)
        if abs(alc(losses) - (losses[-1] - losses[0]) / (n - 1)) < 1e-12:
            telescoped += 1
    ok = ok and telescoped == 1000
    check(8, ok, f"hand examples to 1e-9 and telescoping identity on {telescoped}/1000 random sequences")


def test_criterion_09_poisoning_invariants():
    patch = generate_trigger_patch(seed=0, side=4)
    train, _ = generate_dataset(GenConfig(seed=2, class_count=4, per_class_train=30,
                                          per_class_test=1, width=16, height=16))

    # victim cardinality max(1, floor(alpha * s)) across sizes and alphas
    cardinality_ok = True
    rng = np.random.default_rng(1)
    for size in (7, 50, 100, 120):
        subset = copy.deepcopy(train)
        subset.instances = subset.instances[:size]
        for alpha in (0.001, 0.05, 0.15, 0.5, 1.0):
            expected = max(1, math.floor(alpha * size + 1e-9))
            if len(select_victims(subset, alpha, rng)) != expected:
                cardinality_ok = False

    # label preservation and locality over 1,000 random rounds
    labels_ok = True
    locality_ok = True
    monotone_ok = True
    rng = np.random.default_rng(2)
    for _ in range(1000):
        ds = copy.deepcopy(train)
        strategy = LOCAL_PATCH if rng.integers(2) == 0 else GLOBAL_REPLACEMENT
        plan = PoisonPlan(
            alpha=float(rng.uniform(0.01, 0.5)),
            beta=1,
            strategy=strategy,
            epochs=4,
            seed=int(rng.integers(10000)),
            patch=patch if strategy == LOCAL_PATCH else None,
        )
        before_labels = ds.labels()
        before_pixels = ds.pixel_stack().copy()
        summary = execute_round(ds, plan, 1)
        labels_ok = labels_ok and np.array_equal(ds.labels(), before_labels)
        untouched = sorted(set(range(len(ds))) - set(summary.victim_indices))
        locality_ok = locality_ok and np.array_equal(ds.pixel_stack()[untouched], before_pixels[untouched])

    # monotone accumulation along a full schedule
    ds = copy.deepcopy(train)
    plan = PoisonPlan(alpha=0.15, beta=1, strategy=GLOBAL_REPLACEMENT, epochs=8, seed=3)
    last = 0
    for ordinal in range(1, len(plan_rounds(8, 1)) + 1):
        summary = execute_round(ds, plan, ordinal)
        monotone_ok = monotone_ok and summary.cumulative_poisoned_count == last + summary.newly_poisoned_count
        last = summary.cumulative_poisoned_count

    # Monte-Carlo coverage vs the closed form 1 - (1 - alpha)^r
    big, _ = generate_dataset(GenConfig(seed=4, class_count=2, per_class_train=100,
                                        per_class_test=1, width=16, height=16))
    coverages = []
    for seed in range(100):
        ds = copy.deepcopy(big)
        plan = PoisonPlan(alpha=0.2, beta=1, strategy=LOCAL_PATCH, epochs=6, seed=seed, patch=patch)
        for ordinal in range(1, 6):
            execute_round(ds, plan, ordinal)
        coverages.append(ds.poisoned_count() / len(ds))
    coverage_gap = abs(float(np.mean(coverages)) - (1.0 - 0.8 ** 5))
    coverage_ok = coverage_gap <= 0.03

    check(9, cardinality_ok and labels_ok and locality_ok and monotone_ok and coverage_ok,
          f"cardinality {cardinality_ok}, labels {labels_ok}, locality {locality_ok}, "
          f"accumulation {monotone_ok}, coverage gap {coverage_gap:.4f} (<= 0.03)")


def test_criterion_10_grid_determinism_and_runtime(default_grid, tmp_path):
    reports_a, elapsed_a = default_grid
    t0 = perf_counter()
    reports_b = run_grid(GridConfig())
    elapsed_b = perf_counter() - t0
    write_reports(reports_a, tmp_path / "a")
    write_reports(reports_b, tmp_path / "b")

    def masked(path):
        rows = [line.split(",") for line in path.read_text().splitlines()]
        for row in rows[1:]:
            row[11] = row[13] = "masked"  # ttd and training_seconds columns
        return "\n".join(",".join(row) for row in rows)

    identical = masked(tmp_path / "a" / "runs.csv") == masked(tmp_path / "b" / "runs.csv")
    in_budget = elapsed_a < 1800.0 and elapsed_b < 1800.0
    check(10, identical and in_budget,
          f"two grid executions byte-identical outside timing columns: {identical}; "
          f"runtimes {elapsed_a:.0f}s and {elapsed_b:.0f}s (< 1800s)")
