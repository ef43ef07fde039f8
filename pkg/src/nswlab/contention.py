"""Monotone contention resolution schemes and their verification harness.

Exact schemes are shipped where closed forms exist: the fair rank-1 picker
(singleton active sets always win; larger sets split the win according to
the other elements' marginal mass), its per-block extension to capacity-1
partition matroids, and the keep-a-uniform-quota rule for uniform matroids.
General matroids fall back to random-order greedy, whose constants are
measured, never asserted.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np

from .errors import InputError
from .matroids import (
    MatroidSpec,
    PartitionMatroid,
    UniformMatroid,
    polytope_check,
)

RANK1_EXACT = "rank1_exact"
PARTITION_EXACT = "partition_exact"
UNIFORM_QUOTA = "uniform_quota"
RANDOM_ORDER_GREEDY = "random_order_greedy"
SCHEMES = (RANK1_EXACT, PARTITION_EXACT, UNIFORM_QUOTA, RANDOM_ORDER_GREEDY)

EXACT_SCHEMES = (RANK1_EXACT, PARTITION_EXACT, UNIFORM_QUOTA)


def fair_pick_probabilities(x: np.ndarray, active: Sequence[int]) -> dict[int, float]:
    """Win probability of each active element under the fair rank-1 scheme.

    For |A| >= 2 element j wins with probability
    ( sum_{k in A, k != j} x_k/(|A|-1) + sum_{k not in A} x_k/|A| ) / sum_k x_k;
    a lone active element always wins.  Summed over A the win probabilities
    are exactly 1, and the unconditional marginal of j equals
    x_j * (1 - prod_k (1 - x_k)) / sum_k x_k.
    """
    A = sorted(set(int(j) for j in active))
    if not A:
        return {}
    if len(A) == 1:
        return {A[0]: 1.0}
    X = float(x.sum())
    a = len(A)
    in_sum = float(x[A].sum())
    out_sum = X - in_sum
    return {j: ((in_sum - float(x[j])) / (a - 1) + out_sum / a) / X for j in A}


@dataclass(frozen=True)
class CrsSpec:
    matroid: MatroidSpec
    x: np.ndarray
    b: float = 1.0
    scheme: str = RANK1_EXACT

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        object.__setattr__(self, "x", x)
        if self.scheme not in SCHEMES:
            raise InputError(f"unknown scheme {self.scheme!r}")
        ok, violated = polytope_check(self.matroid, x, self.b, tol=1e-7)
        if not ok:
            raise InputError(f"marginals outside {self.b} * P(matroid); violated subset {violated}")
        if self.scheme == RANK1_EXACT:
            if not (isinstance(self.matroid, UniformMatroid) and self.matroid.max_rank == 1):
                raise InputError("rank1_exact requires a rank-1 uniform matroid")
        elif self.scheme == PARTITION_EXACT:
            if not isinstance(self.matroid, PartitionMatroid) or any(
                c != 1 for c in self.matroid.capacities
            ):
                raise InputError("partition_exact requires a partition matroid with unit capacities")
        elif self.scheme == UNIFORM_QUOTA:
            if not isinstance(self.matroid, UniformMatroid):
                raise InputError("uniform_quota requires a uniform matroid")


def auto_scheme(matroid: MatroidSpec) -> str:
    """The exact scheme for this matroid family, else random-order greedy."""
    if isinstance(matroid, UniformMatroid):
        return RANK1_EXACT if matroid.max_rank == 1 else UNIFORM_QUOTA
    if isinstance(matroid, PartitionMatroid) and all(c == 1 for c in matroid.capacities):
        return PARTITION_EXACT
    return RANDOM_ORDER_GREEDY


def _check_active(crs: CrsSpec, active: Iterable[int]) -> list[int]:
    A = sorted(set(int(j) for j in active))
    for j in A:
        if j < 0 or j >= crs.matroid.ground_size:
            raise InputError(f"active element {j} out of range")
        if crs.x[j] <= 0.0:
            raise InputError(f"active element {j} has zero marginal")
    return A


def resolve(crs: CrsSpec, active: Iterable[int], rng: np.random.Generator) -> frozenset[int]:
    """Select an independent subset of the active set.

    The output is independent in the matroid with probability 1 and is a
    deterministic function of (generator state, active set).
    """
    A = _check_active(crs, active)
    if not A:
        return frozenset()

    if crs.scheme == RANK1_EXACT:
        probs = fair_pick_probabilities(crs.x, A)
        u = float(rng.random())
        acc = 0.0
        for j in A:
            acc += probs[j]
            if u < acc:
                return frozenset([j])
        return frozenset([A[-1]])

    if crs.scheme == PARTITION_EXACT:
        out = []
        for blk in crs.matroid.blocks:
            Ablk = [j for j in A if j in set(blk)]
            if not Ablk:
                continue
            xblk = np.zeros_like(crs.x)
            xblk[list(blk)] = crs.x[list(blk)]
            probs = fair_pick_probabilities(xblk, Ablk)
            u = float(rng.random())
            acc = 0.0
            for j in Ablk:
                acc += probs[j]
                if u < acc:
                    out.append(j)
                    break
            else:
                out.append(Ablk[-1])
        return frozenset(out)

    if crs.scheme == UNIFORM_QUOTA:
        r = crs.matroid.max_rank
        if len(A) <= r:
            return frozenset(A)
        keep = rng.choice(len(A), size=r, replace=False)
        return frozenset(A[i] for i in keep)

    # random-order greedy
    order = rng.permutation(len(A))
    taken: list[int] = []
    for idx in order:
        j = A[idx]
        if crs.matroid.is_independent(taken + [j]):
            taken.append(j)
    return frozenset(taken)


def survival_probability(crs: CrsSpec, active: Iterable[int], j: int) -> float:
    """Exact P[j survives | active set] for the closed-form schemes."""
    A = _check_active(crs, active)
    if j not in A:
        return 0.0
    if crs.scheme == RANK1_EXACT:
        return fair_pick_probabilities(crs.x, A)[j]
    if crs.scheme == PARTITION_EXACT:
        blk = next(b for b in crs.matroid.blocks if j in b)
        Ablk = [a for a in A if a in set(blk)]
        xblk = np.zeros_like(crs.x)
        xblk[list(blk)] = crs.x[list(blk)]
        return fair_pick_probabilities(xblk, Ablk)[j]
    if crs.scheme == UNIFORM_QUOTA:
        return min(1.0, crs.matroid.max_rank / len(A))
    raise InputError("no closed-form survival probability for random_order_greedy")


@dataclass(frozen=True)
class MarginalEstimate:
    mean: float
    stderr: float
    samples: int


def estimate_marginal(
    crs: CrsSpec, j: int, samples: int, rng: np.random.Generator
) -> MarginalEstimate:
    """Monte-Carlo estimate of P[j survives | j active] with j conditioned in.

    Active sets are drawn from the product law on the other elements; for the
    closed-form schemes the survival indicator is sampled directly from its
    conditional probability, which has the same law as running the picker.
    """
    if crs.x[j] <= 0.0:
        raise InputError("conditioning element must have positive marginal")
    if samples < 1:
        raise InputError("need at least one sample")
    m = crs.matroid.ground_size
    others = np.array([k for k in range(m) if k != j and crs.x[k] > 0.0], dtype=int)

    if crs.scheme in EXACT_SCHEMES:
        hits = 0
        chunk = 1 << 14
        done = 0
        while done < samples:
            size = min(chunk, samples - done)
            draws = rng.random((size, len(others))) < crs.x[others][None, :]
            probs = np.empty(size)
            for t in range(size):
                A = [j] + [int(others[idx]) for idx in np.flatnonzero(draws[t])]
                probs[t] = survival_probability(crs, A, j)
            hits += int((rng.random(size) < probs).sum())
            done += size
    else:
        hits = 0
        for _ in range(samples):
            A = [j] + [int(k) for k in others if rng.random() < crs.x[k]]
            hits += int(j in resolve(crs, A, rng))
    mean = hits / samples
    stderr = float(np.sqrt(max(mean * (1 - mean), 1e-12) / samples))
    return MarginalEstimate(mean, stderr, samples)


def check_monotone(crs: CrsSpec, trials: int = 2000, rng: np.random.Generator | None = None) -> dict:
    """Monotonicity report: survival never increases as the active set grows.

    Closed-form schemes are checked exactly over every nested pair of active
    subsets of the support (support capped at 10 for the 3^s enumeration);
    random-order greedy is estimated over shared seeds with a 3-sigma band.
    """
    support = [j for j in range(crs.matroid.ground_size) if crs.x[j] > 0.0]
    report = {"scheme": crs.scheme, "violations": [], "pairs_checked": 0, "exact": False}

    if crs.scheme in EXACT_SCHEMES and len(support) <= 10:
        report["exact"] = True
        for mask2 in range(1, 1 << len(support)):
            A2 = [support[t] for t in range(len(support)) if mask2 >> t & 1]
            sub = mask2
            while sub:
                if sub != mask2:
                    A1 = [support[t] for t in range(len(support)) if sub >> t & 1]
                    for j in A1:
                        p1 = survival_probability(crs, A1, j)
                        p2 = survival_probability(crs, A2, j)
                        report["pairs_checked"] += 1
                        if p1 < p2 - 1e-12:
                            report["violations"].append((tuple(A1), tuple(A2), j, p1, p2))
                sub = (sub - 1) & mask2
        report["monotone"] = not report["violations"]
        return report

    rng = rng if rng is not None else np.random.default_rng(0)
    pairs = []
    if len(support) <= 6:
        for r2 in range(1, len(support) + 1):
            for A2 in combinations(support, r2):
                for r1 in range(1, r2):
                    for A1 in combinations(A2, r1):
                        pairs.append((list(A1), list(A2)))
    else:
        for _ in range(50):
            size2 = int(rng.integers(2, len(support) + 1))
            A2 = list(rng.choice(support, size=size2, replace=False))
            size1 = int(rng.integers(1, size2))
            A1 = list(rng.choice(A2, size=size1, replace=False))
            pairs.append((sorted(A1), sorted(A2)))
    for A1, A2 in pairs:
        for j in A1:
            seeds = rng.integers(0, 2**63 - 1, size=trials)
            h1 = sum(j in resolve(crs, A1, np.random.default_rng(int(s))) for s in seeds)
            h2 = sum(j in resolve(crs, A2, np.random.default_rng(int(s))) for s in seeds)
            p1, p2 = h1 / trials, h2 / trials
            se = np.sqrt((p1 * (1 - p1) + p2 * (1 - p2)) / trials + 1e-12)
            report["pairs_checked"] += 1
            if p1 < p2 - 3 * se:
                report["violations"].append((tuple(A1), tuple(A2), j, p1, p2))
    report["monotone"] = not report["violations"]
    return report
