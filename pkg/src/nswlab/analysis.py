"""Exact and statistical verification: brute-force optima, distinct-tuple
sums, the Gurvits-type inequality, Monte-Carlo product estimation, the
closed-form coverage expectation, and the constrained-mapping counter."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product as iproduct

import numpy as np

from .errors import InputError, UnsupportedSizeError
from . import mc
from .instances import Instance
from .relaxation import FractionalSolution, ProgramSpec, build_program
from .rounding import Allocation
from .saddle import dual_infimum
from .valuations import Coverage, evaluate

BRUTE_FORCE_CAP = 10_000_000
DISTINCT_ROWS_CAP = 12


@dataclass(frozen=True)
class MCEstimate:
    mean: float
    stderr: float
    samples: int

    @property
    def ci_lower(self) -> float:
        return self.mean - 3.0 * self.stderr

    @property
    def ci_upper(self) -> float:
        return self.mean + 3.0 * self.stderr


def estimate_from_samples(values: np.ndarray) -> MCEstimate:
    values = np.asarray(values, dtype=float)
    n = len(values)
    mean = float(values.mean()) if n else 0.0
    stderr = float(values.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return MCEstimate(mean, stderr, n)


def nsw_value(instance: Instance, alloc: Allocation) -> tuple[float, float]:
    """(product of agent values, geometric mean) of an allocation."""
    prod = 1.0
    for i, bundle in enumerate(alloc.bundles(instance.n)):
        prod *= evaluate(instance.valuations[i], bundle)
    return prod, prod ** (1.0 / instance.n)


def brute_force_opt(instance: Instance) -> tuple[Allocation, float, float]:
    """Exact maximizer over all item-to-agent-or-nobody assignments.

    Ties break lexicographically over the owner vector with `unassigned`
    coded as n, so reruns and reorderings are reproducible.
    """
    n, m = instance.n, instance.m
    if (n + 1) ** m > BRUTE_FORCE_CAP:
        raise UnsupportedSizeError(f"(n+1)^m = {(n + 1) ** m} exceeds cap {BRUTE_FORCE_CAP}")
    use_tables = m <= 12
    tables = None
    if use_tables:
        from .valuations import value_table

        tables = [value_table(v) for v in instance.valuations]
    best_prod = -1.0
    best_owner: tuple = tuple()
    for owners in iproduct(range(n + 1), repeat=m):
        prod = 1.0
        if use_tables:
            for i in range(n):
                mask = 0
                for j in range(m):
                    if owners[j] == i:
                        mask |= 1 << j
                prod *= tables[i][mask]
        else:
            for i in range(n):
                prod *= evaluate(instance.valuations[i], [j for j in range(m) if owners[j] == i])
        if prod > best_prod:
            best_prod = prod
            best_owner = owners
    alloc = Allocation(tuple(o if o < n else None for o in best_owner))
    return alloc, best_prod, best_prod ** (1.0 / n)


def distinct_tuple_sum(M: np.ndarray) -> float:
    """Sum over injective tuples (j_1..j_n) of prod_i M[i, j_i].

    Dynamic program over row subsets scanning columns: O(m * 2^n * n).  This
    equals the total mass of degree-n multilinear coefficients of the
    product polynomial prod_i sum_j M[i,j] y_j.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise InputError("matrix required")
    n, m = M.shape
    if n > DISTINCT_ROWS_CAP:
        raise UnsupportedSizeError(f"row count {n} exceeds subset-DP cap {DISTINCT_ROWS_CAP}")
    f = np.zeros(1 << n)
    f[0] = 1.0
    for j in range(m):
        g = f.copy()
        for S in range(1, 1 << n):
            acc = 0.0
            rem = S
            while rem:
                low = rem & -rem
                i = low.bit_length() - 1
                acc += M[i, j] * f[S ^ low]
                rem ^= low
            g[S] += acc
        f = g
    return float(f[(1 << n) - 1])


def gurvits_check(M: np.ndarray, inner_maxiter: int = 500) -> dict:
    """Degree-n coefficient mass vs e^{-n} times the constrained infimum.

    Reports {coeff_sum, inf_value, ratio, holds}; a zero row degenerates the
    report to zeros (both sides vanish).
    """
    M = np.asarray(M, dtype=float)
    n, m = M.shape
    if (M < 0).any():
        raise InputError("matrix must be nonnegative")
    if (M.sum(axis=1) <= 0).any():
        return {"coeff_sum": 0.0, "inf_value": 0.0, "ratio": float("nan"), "holds": True}
    coeff_sum = distinct_tuple_sum(M)
    res = dual_infimum(M, n, maxiter=inner_maxiter)
    inf_value = float(np.exp(res.value)) if np.isfinite(res.value) else 0.0
    bound = np.exp(-n) * inf_value
    holds = coeff_sum >= bound * (1.0 - 1e-6)
    ratio = coeff_sum / inf_value if inf_value > 0 else float("inf")
    return {
        "coeff_sum": coeff_sum,
        "inf_value": inf_value,
        "ratio": ratio,
        "bound": bound,
        "holds": bool(holds),
        "dual": res.dual,
    }


def _solution_blocks(instance: Instance, solution, program: ProgramSpec | None):
    """Normalize (solution, program) into the x matrix and/or edge vector."""
    if isinstance(solution, np.ndarray) and solution.shape == (instance.n, instance.m):
        return solution, None
    values = solution.values if isinstance(solution, FractionalSolution) else np.asarray(solution, dtype=float)
    if program is None:
        program = build_program(instance)
    if program.kind in ("P1", "SumRanks", "CoverageP1pp"):
        return program.x_matrix(values), values
    return None, values


def mc_expected_product(
    instance: Instance,
    solution,
    procedure: int,
    samples: int,
    rng,
    program: ProgramSpec | None = None,
    threads: int | None = None,
) -> MCEstimate:
    """Sample mean and stderr of prod_i v_i(bundle_i) under a rounding procedure."""
    x, values = _solution_blocks(instance, solution, program)
    if procedure in (0, 1, 2):
        if x is None:
            raise InputError("procedures 0/1/2 need an assignment block")
        products = mc.sample_products(instance, procedure, samples, rng, x=x, threads=threads)
    elif procedure in (3, 4):
        products = mc.sample_products(instance, procedure, samples, rng, z=values, threads=threads)
    else:
        raise InputError(f"unknown procedure {procedure}")
    return estimate_from_samples(products)


def expected_product_coverage(instance: Instance, x) -> float:
    """Exact E[prod_i v_i] under independent per-item assignment, for coverage.

    Expands the expectation into a sum over per-agent element choices
    (e_1..e_n) of the probability that a random assignment covers every e_i,
    each term evaluated by inclusion-exclusion over the agents that miss.
    """
    for val in instance.valuations:
        if not isinstance(val, Coverage):
            raise InputError("expected_product_coverage requires coverage valuations")
    n, m = instance.n, instance.m
    x = np.asarray(x, dtype=float).reshape(n, m)
    universes = [val.universe_size for val in instance.valuations]
    work = int(np.prod([max(u, 1) for u in universes])) * (1 << n) * max(m, 1)
    if work > 50_000_000 or (n + 1) ** m > BRUTE_FORCE_CAP:
        raise UnsupportedSizeError("coverage expansion exceeds the desk-scale cap")
    covers = [
        [frozenset(val.covers[j]) for j in range(m)] for val in instance.valuations
    ]
    total = 0.0
    for e_tuple in iproduct(*[range(max(u, 1)) for u in universes]):
        if any(universes[i] == 0 for i in range(n)):
            continue
        # D[i] = items that would cover agent i's chosen element
        D = [np.array([e_tuple[i] in covers[i][j] for j in range(m)]) for i in range(n)]
        term = 0.0
        for T in range(1 << n):
            sign = -1.0 if bin(T).count("1") % 2 else 1.0
            factors = np.ones(m)
            for i in range(n):
                if T >> i & 1:
                    factors -= np.where(D[i], x[i, :], 0.0)
            term += sign * float(np.prod(factors))
        total += term
    return total


def count_constrained_mappings(
    W: np.ndarray, blocks: list[list[int]], choices: list[int] | None = None
) -> float:
    """Weighted count of mappings from A into B hitting mandatory elements.

    W[a, j] weights a map sending a to j; B is partitioned by `blocks`.
    With `choices` = (e_1..e_n), counts maps whose image contains every e_i;
    with None, sums that count over all choice tuples, i.e. weights each map
    by prod_i |image ∩ B_i|.
    """
    W = np.asarray(W, dtype=float)
    if W.ndim != 2:
        raise InputError("weight matrix required")
    na, nb = W.shape
    covered = sorted(j for blk in blocks for j in blk)
    if covered != list(range(nb)):
        raise InputError("blocks must partition the codomain")
    if choices is not None:
        if len(choices) != len(blocks):
            raise InputError("one mandatory element per block required")
        for e, blk in zip(choices, blocks):
            if e not in blk:
                raise InputError(f"choice {e} must belong to its block")
    work = nb**na * max(int(np.prod([len(b) for b in blocks])), 1)
    if work > BRUTE_FORCE_CAP:
        raise UnsupportedSizeError(f"mapping enumeration {work} exceeds cap {BRUTE_FORCE_CAP}")
    total = 0.0
    for sigma in iproduct(range(nb), repeat=na):
        wt = 1.0
        for a, j in enumerate(sigma):
            wt *= W[a, j]
        if wt == 0.0:
            continue
        image = set(sigma)
        if choices is not None:
            if all(e in image for e in choices):
                total += float(wt)
        else:
            mult = 1
            for blk in blocks:
                mult *= len(image.intersection(blk))
            total += wt * mult
    return float(total)
