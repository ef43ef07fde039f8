"""Acceptance suite: every exit criterion at its stated tolerance.

Each test prints one PASS/FAIL line; run with `pytest -s tests/test_acceptance.py`
to see them all.
"""

import time

import numpy as np
import pytest

from nswlab.analysis import (
    brute_force_opt,
    count_constrained_mappings,
    distinct_tuple_sum,
    expected_product_coverage,
    gurvits_check,
    mc_expected_product,
)
from nswlab.contention import (
    PARTITION_EXACT,
    RANK1_EXACT,
    UNIFORM_QUOTA,
    CrsSpec,
    check_monotone,
    estimate_marginal,
)
from nswlab.instances import generate
from nswlab.matroids import PartitionMatroid, UniformMatroid
from nswlab.mc import sample_coupled_masks
from nswlab.pipeline import nsw_level_factor, proc1_product_factor, proc4_product_factor
from nswlab.relaxation import (
    DualPoint,
    FractionalSolution,
    build_program,
    log_objective,
    random_feasible_solution,
)
from nswlab.saddle import SolveConfig, dual_infimum, solve
from nswlab.valuations import check_monotone_submodular

from oracles import grid_inner_oracle, ie_count_mappings, naive_distinct_sum


def _report(criterion: str, ok: bool, detail: str):
    print(f"[{'PASS' if ok else 'FAIL'}] {criterion}: {detail}")
    assert ok, f"{criterion}: {detail}"


# -- criterion 1 -------------------------------------------------------------


def test_criterion_1_relaxation_validity():
    """Solver value >= brute-force optimum - 1e-3*(1+OPT), 50 instances/kind."""
    t0 = time.time()
    families = ("rank", "sumrank", "coverage", "matching", "kmatching")
    failures = []
    rng = np.random.default_rng(20260810)
    for family in families:
        for trial in range(50):
            n = int(rng.integers(2, 4))
            m = int(rng.integers(n, 7))
            params = {}
            if family == "kmatching":
                m = min(m, 4)  # keep hyperedge enumeration on the brute side small
            inst = generate(family, n, m, 1000 + trial, params)
            prog = build_program(inst)
            res = solve(prog, SolveConfig(), instance=inst)
            _, opt, _ = brute_force_opt(inst)
            if res.value_product < opt - 1e-3 * (1 + opt):
                failures.append((family, trial, res.value_product, opt))
    elapsed = time.time() - t0
    _report(
        "criterion 1 (relaxation validity)",
        not failures and elapsed <= 600,
        f"250 instances, {len(failures)} violations, {elapsed:.0f}s (cap 600s)"
        + (f"; first failures {failures[:3]}" if failures else ""),
    )


# -- criterion 2 -------------------------------------------------------------


def test_criterion_2_gurvits_inequality():
    """100 random matrices: coeff mass >= e^-n inf (1-1e-6); inf certified vs grid."""
    rng = np.random.default_rng(2)
    fails = 0
    for _ in range(100):
        n = int(rng.integers(1, 5))
        m = int(rng.integers(n, 9))
        M = rng.random((n, m)) * rng.uniform(0.2, 3.0)
        if rng.random() < 0.25:
            M[rng.random((n, m)) < 0.3] = 0.0
        rep = gurvits_check(M)
        fails += not rep["holds"]
    worst = 0.0
    for _ in range(20):
        n = int(rng.integers(1, 4))
        m = int(rng.integers(n, 4))
        M = rng.uniform(0.1, 3.0, (n, m))
        res = dual_infimum(M, n)
        worst = max(worst, abs(res.value - grid_inner_oracle(M, n)))
    _report(
        "criterion 2 (Gurvits inequality)",
        fails == 0 and worst < 1e-3,
        f"100 matrices, {fails} violations; grid certification worst gap {worst:.2e} (tol 1e-3)",
    )


# -- criterion 3 -------------------------------------------------------------


def test_criterion_3_concave_convex():
    """1000 midpoint tests each way, violation tolerance 1e-8."""
    rng = np.random.default_rng(3)
    progs = [build_program(generate("rank", 2, 4, s)) for s in (0, 1)]
    progs.append(build_program(generate("sumrank", 2, 3, 2)))
    bad_concave = bad_convex = 0
    done = 0
    while done < 1000:
        prog = progs[done % len(progs)]
        s1 = random_feasible_solution(prog, rng)
        s2 = random_feasible_solution(prog, rng)
        u = DualPoint(rng.normal(scale=1.5, size=prog.m))
        f1, f2 = log_objective(prog, s1, u), log_objective(prog, s2, u)
        if not (np.isfinite(f1) and np.isfinite(f2)):
            continue
        mid = FractionalSolution(0.5 * (s1.values + s2.values))
        if log_objective(prog, mid, u) < 0.5 * (f1 + f2) - 1e-8:
            bad_concave += 1
        done += 1
    done = 0
    while done < 1000:
        prog = progs[done % len(progs)]
        sol = random_feasible_solution(prog, rng)
        u1 = rng.normal(scale=1.5, size=prog.m)
        u2 = rng.normal(scale=1.5, size=prog.m)
        f1 = log_objective(prog, sol, DualPoint(u1))
        f2 = log_objective(prog, sol, DualPoint(u2))
        if not (np.isfinite(f1) and np.isfinite(f2)):
            continue
        fm = log_objective(prog, sol, DualPoint(0.5 * (u1 + u2)))
        if fm > 0.5 * (f1 + f2) + 1e-8:
            bad_convex += 1
        done += 1
    _report(
        "criterion 3 (concave-convex structure)",
        bad_concave == 0 and bad_convex == 0,
        f"1000+1000 midpoints, {bad_concave} concavity and {bad_convex} convexity violations (tol 1e-8)",
    )


# -- criteria 4 and 5 --------------------------------------------------------

EXACT_CRS_FIXTURES = [
    ("rank1 skewed", CrsSpec(UniformMatroid(3, 1), np.array([0.5, 0.3, 0.15]), 1.0, RANK1_EXACT)),
    (
        "partition skewed",
        CrsSpec(
            PartitionMatroid(4, ((0, 1), (2, 3)), (1, 1)),
            np.array([0.7, 0.25, 0.4, 0.55]),
            1.0,
            PARTITION_EXACT,
        ),
    ),
    ("quota symmetric", CrsSpec(UniformMatroid(5, 2), np.full(5, 0.38), 1.0, UNIFORM_QUOTA)),
]

HALF_SCALE_FIXTURES = [
    ("rank1 b=1/2", CrsSpec(UniformMatroid(3, 1), np.array([0.25, 0.15, 0.08]), 0.5, RANK1_EXACT)),
    (
        "partition b=1/2",
        CrsSpec(
            PartitionMatroid(4, ((0, 1), (2, 3)), (1, 1)),
            np.array([0.3, 0.15, 0.2, 0.28]),
            0.5,
            PARTITION_EXACT,
        ),
    ),
]


def test_criterion_4_crs_balancedness():
    rng = np.random.default_rng(4)
    bound1 = 1 - 1 / np.e
    details = []
    ok = True
    for name, crs in EXACT_CRS_FIXTURES:
        for j in range(crs.matroid.ground_size):
            if crs.x[j] <= 0:
                continue
            est = estimate_marginal(crs, j, 100_000, rng)
            ok &= est.mean >= bound1 - 3 * est.stderr
            details.append(f"{name}[{j}]={est.mean:.4f}")
    crs = CrsSpec(UniformMatroid(2, 1), np.array([0.5, 0.5]), 1.0, RANK1_EXACT)
    est = estimate_marginal(crs, 0, 100_000, rng)
    ok &= abs(est.mean - 0.75) <= 3 * est.stderr
    details.append(f"analytic0.75={est.mean:.4f}±{3 * est.stderr:.4f}")
    bound_half = 2 * (1 - np.exp(-0.5))
    for name, crs in HALF_SCALE_FIXTURES:
        est = estimate_marginal(crs, 0, 100_000, rng)
        ok &= est.mean >= bound_half - 3 * est.stderr
        details.append(f"{name}={est.mean:.4f}(≥{bound_half:.4f})")
    _report("criterion 4 (CRS balancedness)", ok, "; ".join(details))


def test_criterion_5_crs_monotonicity():
    ok = True
    details = []
    for name, crs in EXACT_CRS_FIXTURES + HALF_SCALE_FIXTURES:
        rep = check_monotone(crs)
        ok &= rep["exact"] and rep["monotone"]
        details.append(f"{name}: {rep['pairs_checked']} pairs, {len(rep['violations'])} violations")
    _report("criterion 5 (CRS monotonicity)", ok, "; ".join(details))


# -- criterion 6 -------------------------------------------------------------


def test_criterion_6_rounding_factor_n2():
    """Procedure-1 expected product vs e^-2 (1-1/e)^4 times the program value."""
    factor = proc1_product_factor(2)
    assert factor == pytest.approx(0.021607, abs=2e-6)
    fails = []
    ratios = []
    for trial in range(10):
        inst = generate(
            "rank", 2, 3 + trial % 4, 400 + trial, {"matroids": ("rank1", "cap1partition")}
        )
        prog = build_program(inst)
        res = solve(prog, SolveConfig(), instance=inst)
        if res.value_product <= 1e-9:
            continue
        est = mc_expected_product(
            inst, res.solution, 1, 100_000, np.random.default_rng(trial), prog
        )
        bound = factor * res.value_product
        ratios.append(est.mean / res.value_product)
        if est.ci_lower < bound:
            fails.append((trial, est.ci_lower, bound))
    _report(
        "criterion 6 (rounding factor, n=2)",
        not fails,
        f"10 instances, bound {factor:.6f}*relax, measured ratios "
        f"min={min(ratios):.4f} median={np.median(ratios):.4f}; "
        f"NSW-level factor {nsw_level_factor():.5f}",
    )


# -- criterion 7 -------------------------------------------------------------


def test_criterion_7_domination_chain():
    rng = np.random.default_rng(7)
    inclusion_ok = True
    marg_ok = True
    for trial in range(5):
        inst = generate("rank", 2, 4, 500 + trial, {"matroids": ("rank1", "cap1partition", "uniform")})
        prog = build_program(inst)
        res = solve(prog, SolveConfig(), instance=inst)
        x = prog.x_matrix(res.solution.values)
        m1, m2, m0 = sample_coupled_masks(inst, x, 10_000, np.random.default_rng(trial))
        inclusion_ok &= (m1 & ~m2).sum() == 0 and (m2 & ~m0).sum() == 0
        m1b, m2b, m0b = sample_coupled_masks(inst, x, 100_000, np.random.default_rng(trial + 50))
        N = m0b.shape[0]
        for i in range(inst.n):
            for j in range(inst.m):
                freq = ((m0b[:, i] >> j) & 1).mean()
                se = np.sqrt(max(x[i, j] * (1 - x[i, j]), 1e-12) / N)
                marg_ok &= abs(freq - x[i, j]) <= 3 * se + 1e-9
    _report(
        "criterion 7 (domination chain)",
        inclusion_ok and marg_ok,
        f"inclusions hold on 100% of 10^4 coupled samples x5 instances; "
        f"procedure-0 marginals within 3 sigma at 10^5 (marginals ok: {marg_ok})",
    )


# -- criterion 8 -------------------------------------------------------------


def test_criterion_8_coverage_closed_form():
    fails = []
    for trial in range(10):
        inst = generate("coverage", 2, 3, 800 + trial)
        prog = build_program(inst)
        res = solve(prog, SolveConfig(), instance=inst)
        x = prog.x_matrix(res.solution.values)
        exact = expected_product_coverage(inst, x)
        est = mc_expected_product(
            inst, res.solution, 0, 100_000, np.random.default_rng(4000 + trial), prog
        )
        if abs(est.mean - exact) > 3 * est.stderr + 1e-9:
            fails.append((trial, est.mean, exact, est.stderr))
    _report(
        "criterion 8 (coverage closed form)",
        not fails,
        f"10 instances, exact expansion vs Monte-Carlo at 3 sigma, {len(fails)} mismatches",
    )


# -- criterion 9 -------------------------------------------------------------


def test_criterion_9_kpartite_factor():
    factor = proc4_product_factor(2, 3)
    assert factor == pytest.approx(0.002035, abs=2e-6)
    fails = []
    degraded = 0
    ratios = []
    for trial in range(5):
        inst = generate("kmatching", 2, 3, 900 + trial, {"k": 3, "part_size": 2, "edges_per_item": 2})
        prog = build_program(inst)
        res = solve(prog, SolveConfig(), instance=inst)
        if res.value_product <= 1e-9:
            continue
        est = mc_expected_product(
            inst, res.solution, 4, 200_000, np.random.default_rng(trial), prog
        )
        bound = factor * res.value_product
        ratios.append(est.mean / res.value_product)
        if est.ci_lower >= bound:
            continue
        if est.mean >= bound and est.ci_lower >= 0.5 * bound:
            degraded += 1  # allowed fallback, flagged
            continue
        fails.append((trial, est.ci_lower, bound))
    _report(
        "criterion 9 (k-partite factor, k=3, n=2)",
        not fails,
        f"bound {factor:.6f}*relax, measured ratios min={min(ratios):.4f}, "
        f"{degraded} degraded acceptances",
    )


# -- criterion 10 ------------------------------------------------------------


def test_criterion_10_oracle_exactness():
    rng = np.random.default_rng(10)
    dts_ok = True
    for _ in range(50):
        n = int(rng.integers(1, 5))
        m = int(rng.integers(n, 7))
        M = rng.random((n, m)) * 2
        dts_ok &= abs(distinct_tuple_sum(M) - naive_distinct_sum(M)) <= 1e-9 * (
            1 + naive_distinct_sum(M)
        )
    cm_ok = True
    for _ in range(25):
        na = int(rng.integers(1, 4))
        sizes = [int(rng.integers(1, 3)) for _ in range(int(rng.integers(1, 3)))]
        blocks, at = [], 0
        for s in sizes:
            blocks.append(list(range(at, at + s)))
            at += s
        W = np.round(rng.random((na, sum(sizes))) * 2, 3)
        choices = [blk[int(rng.integers(0, len(blk)))] for blk in blocks]
        direct = count_constrained_mappings(W, blocks, choices)
        cm_ok &= abs(direct - ie_count_mappings(W, blocks, choices)) <= 1e-9 * (1 + abs(direct))
    # 100 random small instances: monotone for all classes, submodular for the
    # rank-type and bipartite-matching classes (the k-partite class is the
    # paper's non-submodular example and is checked for monotonicity only)
    val_ok = True
    submodular_families = ("rank", "sumrank", "coverage", "matching")
    count = 0
    seed = 0
    while count < 100:
        family = submodular_families[count % 4] if count % 5 else "kmatching"
        inst = generate(family, 2, 3, 7000 + seed)
        seed += 1
        for val in inst.valuations:
            rep = check_monotone_submodular(val)
            val_ok &= rep["monotone"]
            if family != "kmatching":
                val_ok &= rep["submodular"]
            count += 1
            if count >= 100:
                break
    _report(
        "criterion 10 (oracle exactness)",
        dts_ok and cm_ok and val_ok,
        f"distinct-tuple DP exact on 50 matrices ({dts_ok}); "
        f"mapping counts match inclusion-exclusion on 25 cases ({cm_ok}); "
        f"100 valuation property checks ({val_ok})",
    )
