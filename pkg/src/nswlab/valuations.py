"""The four valuation classes and their exact evaluation on item sets.

Matching-based valuations are evaluated by exhaustive search over feasible
(hyper)matchings, which is exact at desk scale; the combinatorial
matroid-intersection algorithms are deliberately out of scope.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import InputError, UnsupportedSizeError
from .matroids import MatroidSpec, UniformMatroid, weighted_rank_witness

MATCHING_EDGE_CAP = 20
EXHAUSTIVE_CHECK_CAP = 12


@dataclass(frozen=True)
class WeightedMatroidRank:
    """v(S) = max weight of an independent subset of S."""

    matroid: MatroidSpec
    weights: tuple[float, ...]

    def __post_init__(self):
        w = tuple(float(x) for x in self.weights)
        object.__setattr__(self, "weights", w)
        if len(w) != self.matroid.ground_size:
            raise InputError("one weight per item required")
        if any(x < 0 for x in w):
            raise InputError("weights must be nonnegative")

    @property
    def num_items(self) -> int:
        return self.matroid.ground_size


@dataclass(frozen=True)
class SumOfWeightedRanks:
    """v(S) = sum over terms of weighted matroid ranks; cone coefficients are
    absorbed into the term weights."""

    terms: tuple[WeightedMatroidRank, ...]

    def __post_init__(self):
        terms = tuple(self.terms)
        object.__setattr__(self, "terms", terms)
        if not terms:
            raise InputError("at least one term required")
        sizes = {t.num_items for t in terms}
        if len(sizes) != 1:
            raise InputError("all terms must share the item ground")

    @property
    def num_items(self) -> int:
        return self.terms[0].num_items


@dataclass(frozen=True)
class Coverage:
    """v(S) = |union of covers[j] for j in S| over a finite universe."""

    universe_size: int
    covers: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        covers = tuple(tuple(sorted(set(int(e) for e in c))) for c in self.covers)
        object.__setattr__(self, "covers", covers)
        for c in covers:
            if c and (c[0] < 0 or c[-1] >= self.universe_size):
                raise InputError("cover element outside the declared universe")

    @property
    def num_items(self) -> int:
        return len(self.covers)


@dataclass(frozen=True)
class BipartiteMatchingMatroid:
    """v(S) = max weight of a matching with matched left vertices inside S and
    matched right vertices independent in right_matroid."""

    num_items: int
    right_vertices: int
    edges: tuple[tuple[int, int, float], ...]
    right_matroid: MatroidSpec

    def __post_init__(self):
        edges = tuple((int(j), int(k), float(w)) for j, k, w in self.edges)
        object.__setattr__(self, "edges", edges)
        for j, k, w in edges:
            if not 0 <= j < self.num_items:
                raise InputError("edge item index out of range")
            if not 0 <= k < self.right_vertices:
                raise InputError("edge right-vertex index out of range")
            if w < 0:
                raise InputError("edge weights must be nonnegative")
        if self.right_matroid.ground_size != self.right_vertices:
            raise InputError("right matroid ground must equal right vertex count")


@dataclass(frozen=True)
class KPartiteMatching:
    """v(S) = max weight of a hyperedge matching: one item plus one vertex per
    part, items inside S, per-part matched sets independent."""

    num_items: int
    k: int
    part_sizes: tuple[int, ...]
    hyperedges: tuple[tuple[int, tuple[int, ...], float], ...]
    part_matroids: tuple[MatroidSpec, ...]

    def __post_init__(self):
        if self.k < 3:
            raise InputError("k-partite matching requires k >= 3")
        if len(self.part_sizes) != self.k - 1 or len(self.part_matroids) != self.k - 1:
            raise InputError("expected k-1 parts and k-1 part matroids")
        edges = tuple((int(j), tuple(int(v) for v in vs), float(w)) for j, vs, w in self.hyperedges)
        object.__setattr__(self, "hyperedges", edges)
        for j, vs, w in edges:
            if not 0 <= j < self.num_items:
                raise InputError("hyperedge item index out of range")
            if len(vs) != self.k - 1:
                raise InputError("hyperedge must contain exactly one vertex per part")
            for ell, v in enumerate(vs):
                if not 0 <= v < self.part_sizes[ell]:
                    raise InputError("hyperedge vertex outside its part")
            if w < 0:
                raise InputError("hyperedge weights must be nonnegative")
        for ell, M in enumerate(self.part_matroids):
            if M.ground_size != self.part_sizes[ell]:
                raise InputError("part matroid ground must equal the part size")


ValuationSpec = (
    WeightedMatroidRank | SumOfWeightedRanks | Coverage | BipartiteMatchingMatroid | KPartiteMatching
)


def evaluate(valuation: ValuationSpec, S: Iterable[int]) -> float:
    """Exact value of the valuation on item set S."""
    return evaluate_with_witness(valuation, S)[0]


def evaluate_with_witness(valuation: ValuationSpec, S: Iterable[int]):
    """Value plus an optimal witness.

    The witness is the chosen independent set (rank), per-term sets (sums),
    covered universe elements (coverage), or the optimal (hyper)edge index
    set (matching variants).
    """
    items = sorted(set(int(j) for j in S))
    if items and (items[0] < 0 or items[-1] >= valuation.num_items):
        raise InputError("item index out of range")

    if isinstance(valuation, WeightedMatroidRank):
        return weighted_rank_witness(valuation.matroid, valuation.weights, items)

    if isinstance(valuation, SumOfWeightedRanks):
        total = 0.0
        witnesses = []
        for t in valuation.terms:
            v, w = weighted_rank_witness(t.matroid, t.weights, items)
            total += v
            witnesses.append(w)
        return total, tuple(witnesses)

    if isinstance(valuation, Coverage):
        covered: set[int] = set()
        for j in items:
            covered.update(valuation.covers[j])
        return float(len(covered)), tuple(sorted(covered))

    if isinstance(valuation, BipartiteMatchingMatroid):
        allowed = [e for e, (j, _, _) in enumerate(valuation.edges) if j in set(items)]
        if len(allowed) > MATCHING_EDGE_CAP:
            raise UnsupportedSizeError(f"matching enumeration capped at {MATCHING_EDGE_CAP} edges")
        best = [0.0, ()]

        def extend(pos: int, used_items: set, used_right: list, total: float, chosen: tuple):
            if total > best[0]:
                best[0], best[1] = total, chosen
            if pos == len(allowed):
                return
            e = allowed[pos]
            j, k, w = valuation.edges[e]
            if j not in used_items and k not in used_right:
                if valuation.right_matroid.is_independent(used_right + [k]):
                    extend(pos + 1, used_items | {j}, used_right + [k], total + w, chosen + (e,))
            extend(pos + 1, used_items, used_right, total, chosen)

        extend(0, set(), [], 0.0, ())
        return best[0], best[1]

    if isinstance(valuation, KPartiteMatching):
        allowed = [e for e, (j, _, _) in enumerate(valuation.hyperedges) if j in set(items)]
        if len(allowed) > MATCHING_EDGE_CAP:
            raise UnsupportedSizeError(f"matching enumeration capped at {MATCHING_EDGE_CAP} hyperedges")
        best = [0.0, ()]
        k1 = valuation.k - 1

        def extend(pos: int, used_items: set, used_parts: list, total: float, chosen: tuple):
            if total > best[0]:
                best[0], best[1] = total, chosen
            if pos == len(allowed):
                return
            e = allowed[pos]
            j, vs, w = valuation.hyperedges[e]
            if j not in used_items and all(vs[ell] not in used_parts[ell] for ell in range(k1)):
                ok = all(
                    valuation.part_matroids[ell].is_independent(used_parts[ell] + [vs[ell]])
                    for ell in range(k1)
                )
                if ok:
                    extend(
                        pos + 1,
                        used_items | {j},
                        [used_parts[ell] + [vs[ell]] for ell in range(k1)],
                        total + w,
                        chosen + (e,),
                    )
            extend(pos + 1, used_items, used_parts, total, chosen)

        extend(0, set(), [[] for _ in range(k1)], 0.0, ())
        return best[0], best[1]

    raise InputError(f"unknown valuation variant: {type(valuation).__name__}")


def coverage_to_rank_sum(valuation: Coverage) -> SumOfWeightedRanks:
    """Rewrite a coverage valuation as a sum of rank-1 weighted matroid ranks.

    One term per universe element e: a rank-1 uniform matroid on the items,
    weight 1 exactly on the items whose cover contains e.
    """
    if not isinstance(valuation, Coverage):
        raise InputError("coverage_to_rank_sum expects a Coverage valuation")
    m = valuation.num_items
    terms = []
    for e in range(valuation.universe_size):
        w = tuple(1.0 if e in valuation.covers[j] else 0.0 for j in range(m))
        terms.append(WeightedMatroidRank(UniformMatroid(m, 1), w))
    if not terms:
        # empty universe: a single all-zero term keeps the type well-formed
        terms.append(WeightedMatroidRank(UniformMatroid(m, 1), tuple(0.0 for _ in range(m))))
    return SumOfWeightedRanks(tuple(terms))


def value_table(valuation: ValuationSpec) -> np.ndarray:
    """v(S) for every S ⊆ items, indexed by bitmask. Capped at 2^EXHAUSTIVE_CHECK_CAP."""
    m = valuation.num_items
    if m > EXHAUSTIVE_CHECK_CAP:
        raise UnsupportedSizeError(f"value table capped at {EXHAUSTIVE_CHECK_CAP} items")
    table = np.zeros(1 << m)
    for mask in range(1 << m):
        table[mask] = evaluate(valuation, [j for j in range(m) if mask >> j & 1])
    return table


def check_monotone_submodular(valuation: ValuationSpec) -> dict:
    """Exhaustively test monotonicity and submodularity on all subsets.

    Submodularity is checked through the local characterization
    v(S+i) + v(S+j) >= v(S+i+j) + v(S); a witness of the first failure of
    each property is reported.
    """
    m = valuation.num_items
    table = value_table(valuation)
    report = {"monotone": True, "submodular": True, "witness": None}
    tol = 1e-9
    for mask in range(1 << m):
        for j in range(m):
            if mask >> j & 1:
                continue
            if table[mask | (1 << j)] < table[mask] - tol:
                report["monotone"] = False
                report.setdefault("monotone_witness", (mask, j))
                if report["witness"] is None:
                    report["witness"] = ("monotone", mask, j)
    for mask in range(1 << m):
        for i in range(m):
            if mask >> i & 1:
                continue
            for j in range(i + 1, m):
                if mask >> j & 1:
                    continue
                lhs = table[mask | (1 << i)] + table[mask | (1 << j)]
                rhs = table[mask | (1 << i) | (1 << j)] + table[mask]
                if lhs < rhs - tol:
                    report["submodular"] = False
                    if report["witness"] is None:
                        report["witness"] = ("submodular", mask, i, j)
    return report
