"""Matroid oracles: independence, rank, greedy weighted rank, polytope membership.

Four families are supported: uniform, partition, graphic, and explicit
(independent sets listed outright).  All oracles are immutable after
construction and safe for concurrent read-only use.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np

from .errors import InputError, UnsupportedSizeError

EXPLICIT_AXIOM_CAP = 16
POLYTOPE_ENUM_CAP = 20


def _as_indices(S: Iterable[int], ground_size: int) -> tuple[int, ...]:
    out = tuple(sorted(set(int(j) for j in S)))
    if out and (out[0] < 0 or out[-1] >= ground_size):
        raise InputError(f"element index out of range [0, {ground_size}): {out}")
    return out


@dataclass(frozen=True)
class UniformMatroid:
    """Independent iff |S| <= max_rank."""

    ground_size: int
    max_rank: int

    def __post_init__(self):
        if self.ground_size < 0 or self.max_rank < 0:
            raise InputError("ground_size and rank must be nonnegative")

    def is_independent(self, S: Iterable[int]) -> bool:
        return len(_as_indices(S, self.ground_size)) <= self.max_rank

    def rank(self, S: Iterable[int]) -> int:
        return min(len(_as_indices(S, self.ground_size)), self.max_rank)


@dataclass(frozen=True)
class PartitionMatroid:
    """At most capacities[b] elements from blocks[b]; blocks partition the ground set."""

    ground_size: int
    blocks: tuple[tuple[int, ...], ...]
    capacities: tuple[int, ...]
    _block_of: tuple[int, ...] = field(init=False, repr=False)

    def __post_init__(self):
        blocks = tuple(tuple(int(j) for j in b) for b in self.blocks)
        caps = tuple(int(c) for c in self.capacities)
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "capacities", caps)
        if len(blocks) != len(caps):
            raise InputError("one capacity per block required")
        if any(c < 0 for c in caps):
            raise InputError("capacities must be nonnegative")
        seen = [-1] * self.ground_size
        for b, blk in enumerate(blocks):
            for j in blk:
                if j < 0 or j >= self.ground_size or seen[j] != -1:
                    raise InputError("blocks must partition range(ground_size)")
                seen[j] = b
        if -1 in seen:
            raise InputError("blocks must cover every ground element")
        object.__setattr__(self, "_block_of", tuple(seen))

    def is_independent(self, S: Iterable[int]) -> bool:
        counts = [0] * len(self.blocks)
        for j in _as_indices(S, self.ground_size):
            b = self._block_of[j]
            counts[b] += 1
            if counts[b] > self.capacities[b]:
                return False
        return True

    def rank(self, S: Iterable[int]) -> int:
        counts = [0] * len(self.blocks)
        for j in _as_indices(S, self.ground_size):
            counts[self._block_of[j]] += 1
        return sum(min(c, cap) for c, cap in zip(counts, self.capacities))


@dataclass(frozen=True)
class GraphicMatroid:
    """Ground elements are edges of a multigraph; independent iff acyclic."""

    vertex_count: int
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        edges = tuple((int(u), int(v)) for u, v in self.edges)
        object.__setattr__(self, "edges", edges)
        for u, v in edges:
            if not (0 <= u < self.vertex_count and 0 <= v < self.vertex_count):
                raise InputError("edge endpoint out of range")

    @property
    def ground_size(self) -> int:
        return len(self.edges)

    def _forest_size(self, S: Sequence[int]) -> int:
        parent = list(range(self.vertex_count))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        size = 0
        for j in S:
            u, v = self.edges[j]
            ru, rv = find(u), find(v)
            if ru != rv:
                parent[ru] = rv
                size += 1
        return size

    def is_independent(self, S: Iterable[int]) -> bool:
        idx = _as_indices(S, self.ground_size)
        return self._forest_size(idx) == len(idx)

    def rank(self, S: Iterable[int]) -> int:
        return self._forest_size(_as_indices(S, self.ground_size))


@dataclass(frozen=True)
class ExplicitMatroid:
    """Matroid given by the full list of independent sets (as bitmasks).

    The matroid axioms (empty set, downward closure, exchange) are checked
    exhaustively at construction; grounds larger than EXPLICIT_AXIOM_CAP are
    rejected because the checks are exponential.
    """

    ground_size: int
    independent_masks: frozenset[int]

    @classmethod
    def from_sets(cls, ground_size: int, independent_sets: Iterable[Iterable[int]]) -> "ExplicitMatroid":
        masks = set()
        for I in independent_sets:
            mask = 0
            for j in _as_indices(I, ground_size):
                mask |= 1 << j
            masks.add(mask)
        return cls(ground_size, frozenset(masks))

    def __post_init__(self):
        if self.ground_size > EXPLICIT_AXIOM_CAP:
            raise UnsupportedSizeError(
                f"explicit matroid ground {self.ground_size} exceeds axiom-check cap {EXPLICIT_AXIOM_CAP}"
            )
        masks = self.independent_masks
        if 0 not in masks:
            raise InputError("explicit matroid must contain the empty set")
        for mask in masks:
            m = mask
            while m:
                low = m & -m
                if (mask ^ low) not in masks:
                    raise InputError("explicit matroid is not downward closed")
                m ^= low
        by_size: dict[int, list[int]] = {}
        for mask in masks:
            by_size.setdefault(bin(mask).count("1"), []).append(mask)
        for k in sorted(by_size):
            if k + 1 not in by_size:
                continue
            for small in by_size[k]:
                for big in by_size[k + 1]:
                    if not self._can_augment(small, big, masks):
                        raise InputError("explicit matroid violates the exchange property")
        object.__setattr__(self, "independent_masks", frozenset(masks))

    @staticmethod
    def _can_augment(small: int, big: int, masks: frozenset[int]) -> bool:
        extra = big & ~small
        while extra:
            low = extra & -extra
            if (small | low) in masks:
                return True
            extra ^= low
        return False

    def is_independent(self, S: Iterable[int]) -> bool:
        mask = 0
        for j in _as_indices(S, self.ground_size):
            mask |= 1 << j
        return mask in self.independent_masks

    def rank(self, S: Iterable[int]) -> int:
        taken = 0
        size = 0
        for j in _as_indices(S, self.ground_size):
            cand = taken | (1 << j)
            if cand in self.independent_masks:
                taken = cand
                size += 1
        return size


MatroidSpec = UniformMatroid | PartitionMatroid | GraphicMatroid | ExplicitMatroid


def is_independent(matroid: MatroidSpec, S: Iterable[int]) -> bool:
    """True iff S is independent in the matroid."""
    return matroid.is_independent(S)


def rank(matroid: MatroidSpec, S: Iterable[int]) -> int:
    """Size of a maximum independent subset of S (greedy, valid for matroids)."""
    return matroid.rank(S)


def weighted_rank(matroid: MatroidSpec, weights: Sequence[float], S: Iterable[int]) -> float:
    """Max total weight of an independent subset of S."""
    value, _ = weighted_rank_witness(matroid, weights, S)
    return value


def weighted_rank_witness(
    matroid: MatroidSpec, weights: Sequence[float], S: Iterable[int]
) -> tuple[float, tuple[int, ...]]:
    """Greedy max-weight independent subset of S; ties broken by ascending index.

    Returns (value, chosen elements).  Zero-weight elements are skipped so the
    witness is always a support-minimal optimum.
    """
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or len(w) != matroid.ground_size:
        raise InputError("weights must have one entry per ground element")
    if (w < 0).any():
        raise InputError("weights must be nonnegative")
    idx = _as_indices(S, matroid.ground_size)
    order = sorted(idx, key=lambda j: (-w[j], j))
    taken: list[int] = []
    value = 0.0
    for j in order:
        if w[j] <= 0.0:
            break
        if matroid.is_independent(taken + [j]):
            taken.append(j)
            value += float(w[j])
    return value, tuple(sorted(taken))


def polytope_check(
    matroid: MatroidSpec,
    point: Sequence[float],
    b: float = 1.0,
    tol: float = 1e-9,
) -> tuple[bool, tuple[int, ...] | None]:
    """Membership of `point` in b * P(matroid).

    Returns (True, None) if for every subset S, sum(point[S]) <= b*rank(S)+tol,
    else (False, S) for a maximally violated subset S.  Uniform and partition
    matroids use the exact sorted-prefix argmax; graphic and explicit matroids
    enumerate subsets of the support (support capped at POLYTOPE_ENUM_CAP).
    """
    x = np.asarray(point, dtype=float)
    if x.ndim != 1 or len(x) != matroid.ground_size:
        raise InputError("point must have one coordinate per ground element")
    if not 0.0 < b <= 1.0:
        raise InputError("scale b must lie in (0, 1]")
    if (x < -tol).any():
        raise InputError("point must be (near-)nonnegative")

    if isinstance(matroid, UniformMatroid):
        order = np.argsort(-x, kind="stable")
        prefix = np.cumsum(x[order])
        best_gap, best_s = 0.0, 0
        for s in range(1, len(x) + 1):
            gap = prefix[s - 1] - b * min(s, matroid.max_rank)
            if gap > best_gap:
                best_gap, best_s = gap, s
        if best_gap > tol:
            return False, tuple(sorted(int(j) for j in order[:best_s]))
        return True, None

    if isinstance(matroid, PartitionMatroid):
        worst: list[int] = []
        total_gap = 0.0
        for blk, cap in zip(matroid.blocks, matroid.capacities):
            vals = sorted(((x[j], j) for j in blk), reverse=True)
            run, best_gap, best_s = 0.0, 0.0, 0
            for s, (v, _) in enumerate(vals, start=1):
                run += v
                gap = run - b * min(s, cap)
                if gap > best_gap:
                    best_gap, best_s = gap, s
            if best_gap > 0.0:
                total_gap += best_gap
                worst.extend(j for _, j in vals[:best_s])
        if total_gap > tol:
            return False, tuple(sorted(worst))
        return True, None

    support = [j for j in range(matroid.ground_size) if x[j] > 0.0]
    if len(support) > POLYTOPE_ENUM_CAP:
        raise UnsupportedSizeError(
            f"support {len(support)} exceeds exhaustive polytope cap {POLYTOPE_ENUM_CAP}"
        )
    best_gap, best_S = 0.0, None
    for r in range(1, len(support) + 1):
        for combo in combinations(support, r):
            gap = float(x[list(combo)].sum()) - b * matroid.rank(combo)
            if gap > best_gap:
                best_gap, best_S = gap, combo
    if best_gap > tol:
        return False, tuple(best_S)
    return True, None


def rank_constraint_rows(matroid: MatroidSpec, b: float = 1.0) -> list[tuple[tuple[int, ...], float]]:
    """Irredundant linear description of b*P(matroid) beyond the unit box.

    Each row (S, rhs) encodes sum_{j in S} x_j <= rhs.  Uniform and partition
    matroids admit closed-form row sets; other families keep one row per
    closed set (sets whose rank strictly increases under any extension).
    """
    m = matroid.ground_size
    if isinstance(matroid, UniformMatroid):
        if matroid.max_rank >= m:
            return []
        return [(tuple(range(m)), b * matroid.max_rank)]
    if isinstance(matroid, PartitionMatroid):
        rows = []
        for blk, cap in zip(matroid.blocks, matroid.capacities):
            if cap < len(blk):
                rows.append((tuple(sorted(blk)), b * cap))
        return rows
    if m > EXPLICIT_AXIOM_CAP:
        raise UnsupportedSizeError(f"rank row enumeration capped at ground {EXPLICIT_AXIOM_CAP}")
    ranks = [0] * (1 << m)
    for mask in range(1, 1 << m):
        ranks[mask] = matroid.rank([j for j in range(m) if mask >> j & 1])
    rows = []
    for mask in range(1, 1 << m):
        r = ranks[mask]
        size = bin(mask).count("1")
        if r >= size:
            continue  # implied by the unit box
        closed = all(ranks[mask | (1 << e)] > r for e in range(m) if not mask >> e & 1)
        if closed:
            rows.append((tuple(j for j in range(m) if mask >> j & 1), b * r))
    return rows
