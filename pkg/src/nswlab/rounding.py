"""Randomized rounding procedures mapping fractional solutions to allocations.

Procedure 0 assigns each item independently by its fractional column;
procedure 2 draws Bernoulli activations and resolves each item's contention
with the fair rank-1 scheme; procedure 1 additionally filters every agent's
tentative set through that agent's matroid scheme; procedures 3 and 4 are
the edge/hyperedge analogues for the matching programs.  All randomness for
one run flows from a single seeded generator split into named child streams
(activation, per-item, per-agent, per-part, redistribution), which is what
makes the coupled domination chains exact sample by sample.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .contention import (
    PARTITION_EXACT,
    RANDOM_ORDER_GREEDY,
    RANK1_EXACT,
    CrsSpec,
    auto_scheme,
    fair_pick_probabilities,
    resolve,
)
from .instances import Instance
from .matroids import PartitionMatroid, UniformMatroid
from .valuations import (
    BipartiteMatchingMatroid,
    KPartiteMatching,
    WeightedMatroidRank,
    evaluate,
)

COLUMN_TOL = 1e-6


@dataclass(frozen=True)
class Allocation:
    owner: tuple  # per item: agent index or None

    def bundles(self, n: int) -> list[list[int]]:
        out = [[] for _ in range(n)]
        for j, o in enumerate(self.owner):
            if o is not None:
                out[o].append(j)
        return out


@dataclass
class RoundingTrace:
    X: np.ndarray
    Y: np.ndarray | None
    Z: np.ndarray | None
    allocation: Allocation
    product_value: float | None = None
    nsw_value: float | None = None


def _as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def _streams(rng, count: int) -> list[np.random.Generator]:
    return _as_rng(rng).spawn(count)


def _values_for(instance: Instance | None, alloc: Allocation):
    if instance is None:
        return None, None
    prod = 1.0
    for i, bundle in enumerate(alloc.bundles(instance.n)):
        prod *= evaluate(instance.valuations[i], bundle)
    return prod, prod ** (1.0 / instance.n)


def _as_x_matrix(x, n: int | None = None, m: int | None = None) -> np.ndarray:
    values = getattr(x, "values", x)
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 1:
        if n is None or m is None or arr.size != n * m:
            raise InputError("flat solution needs matching n*m shape")
        arr = arr.reshape(n, m)
    if arr.ndim != 2:
        raise InputError("x must be an (agents x items) matrix")
    return arr.copy()


def _sanitize_columns(x: np.ndarray) -> np.ndarray:
    """Clip negatives and renormalize columns whose sums exceed 1 within tolerance."""
    x = np.clip(x, 0.0, 1.0)
    sums = x.sum(axis=0)
    over = sums > 1.0
    if (sums > 1.0 + COLUMN_TOL).any():
        raise InputError(f"column sums exceed 1: {sums.max():.6f}")
    if over.any():
        x[:, over] /= sums[over][None, :]
    return x


def _fair_marginals(col: np.ndarray) -> np.ndarray:
    """Unconditional win probabilities of the fair rank-1 scheme: x'_i."""
    X = float(col.sum())
    if X <= 0.0:
        return np.zeros_like(col)
    return col / X * (1.0 - float(np.prod(1.0 - col)))


# ---------------------------------------------------------------------------
# single-run procedures


def round0(x, rng, instance: Instance | None = None) -> RoundingTrace:
    """Independent per-item assignment: item j goes to agent i w.p. x_ij."""
    x = _sanitize_columns(_as_x_matrix(x, instance.n if instance else None, instance.m if instance else None))
    n, m = x.shape
    (stream,) = _streams(rng, 1)
    owner: list = [None] * m
    draws = stream.random(m)
    for j in range(m):
        acc = 0.0
        for i in range(n):
            acc += x[i, j]
            if draws[j] < acc:
                owner[j] = i
                break
    alloc = Allocation(tuple(owner))
    prod, nsw = _values_for(instance, alloc)
    X = np.zeros((n, m), dtype=np.int8)
    for j, o in enumerate(owner):
        if o is not None:
            X[o, j] = 1
    return RoundingTrace(X, None, None, alloc, prod, nsw)


def _activation_and_item_crs(x: np.ndarray, s_act, s_items):
    """Shared first two steps of procedures 1 and 2: X draws and item winners."""
    n, m = x.shape
    X = (s_act.random((n, m)) < x).astype(np.int8)
    Y = np.zeros((n, m), dtype=np.int8)
    winner = np.full(m, -1, dtype=int)
    for j in range(m):
        active = [i for i in range(n) if X[i, j]]
        if not active:
            continue
        crs = CrsSpec(UniformMatroid(n, 1), x[:, j], 1.0, RANK1_EXACT)
        picked = resolve(crs, active, s_items[j])
        (winner[j],) = picked
        Y[winner[j], j] = 1
    return X, Y, winner


def round2(x, rng, instance: Instance | None = None) -> RoundingTrace:
    """Bernoulli activations plus the per-item fair rank-1 resolution."""
    x = _sanitize_columns(_as_x_matrix(x, instance.n if instance else None, instance.m if instance else None))
    n, m = x.shape
    streams = _streams(rng, 2)
    s_act, s_item_parent = streams
    s_items = s_item_parent.spawn(m)
    X, Y, winner = _activation_and_item_crs(x, s_act, s_items)
    alloc = Allocation(tuple(int(w) if w >= 0 else None for w in winner))
    prod, nsw = _values_for(instance, alloc)
    return RoundingTrace(X, Y, None, alloc, prod, nsw)


def _agent_crs_survivors(x: np.ndarray, instance: Instance, X: np.ndarray, s_agents):
    n, m = x.shape
    Z = np.zeros((n, m), dtype=np.int8)
    for i in range(n):
        val = instance.valuations[i]
        if not isinstance(val, WeightedMatroidRank):
            raise InputError("procedure 1 requires weighted matroid rank valuations")
        active = [j for j in range(m) if X[i, j]]
        if not active:
            continue
        row = np.minimum(x[i, :], 1.0)
        crs = CrsSpec(val.matroid, row, 1.0, auto_scheme(val.matroid))
        for j in resolve(crs, active, s_agents[i]):
            Z[i, j] = 1
    return Z


def round1(x, instance: Instance, rng) -> RoundingTrace:
    """Item-level fair resolution plus per-agent matroid contention resolution.

    Item j is allocated to its tentative winner p_j only if j also survived
    that agent's matroid scheme, so every final bundle is independent.
    """
    x = _as_x_matrix(x, instance.n, instance.m)
    for i, val in enumerate(instance.valuations):
        if not isinstance(val, WeightedMatroidRank):
            raise InputError("procedure 1 requires weighted matroid rank valuations")
    x = _sanitize_columns(x)
    n, m = x.shape
    s_act, s_item_parent, s_agent_parent = _streams(rng, 3)
    s_items = s_item_parent.spawn(m)
    s_agents = s_agent_parent.spawn(n)
    X, Y, winner = _activation_and_item_crs(x, s_act, s_items)
    Z = _agent_crs_survivors(x, instance, X, s_agents)
    owner: list = [None] * m
    for j in range(m):
        if winner[j] >= 0 and Z[winner[j], j]:
            owner[j] = int(winner[j])
    alloc = Allocation(tuple(owner))
    prod, nsw = _values_for(instance, alloc)
    return RoundingTrace(X, Y, Z, alloc, prod, nsw)


def coupled_chain(x, instance: Instance | None, rng):
    """One randomness stream driving procedures 1, 2, and 0 jointly.

    Per agent and per sample the allocated sets satisfy
    round1 subset round2 subset round0: procedure 1 filters procedure 2's
    winners, and procedure 0 re-adds each item lost to an empty activation
    column with the leftover probabilities x_ij - x'_ij.
    """
    need_agent_pass = instance is not None and all(
        isinstance(v, WeightedMatroidRank) for v in instance.valuations
    )
    x = _sanitize_columns(_as_x_matrix(x, instance.n if instance else None, instance.m if instance else None))
    n, m = x.shape
    s_act, s_item_parent, s_agent_parent, s_redist_parent = _streams(rng, 4)
    s_items = s_item_parent.spawn(m)
    s_redist = s_redist_parent.spawn(m)
    X, Y, winner = _activation_and_item_crs(x, s_act, s_items)

    owner0: list = [None] * m
    for j in range(m):
        if winner[j] >= 0:
            owner0[j] = int(winner[j])
            continue
        # empty activation column: hand the item out with the residual mass
        p_empty = float(np.prod(1.0 - x[:, j]))
        if p_empty <= 0.0:
            continue
        residual = (x[:, j] - _fair_marginals(x[:, j])) / p_empty
        u = float(s_redist[j].random())
        acc = 0.0
        for i in range(n):
            acc += residual[i]
            if u < acc:
                owner0[j] = i
                break
    alloc2 = Allocation(tuple(int(w) if w >= 0 else None for w in winner))
    alloc0 = Allocation(tuple(owner0))
    trace2 = RoundingTrace(X, Y, None, alloc2, *_values_for(instance, alloc2))
    trace0 = RoundingTrace(X, None, None, alloc0, *_values_for(instance, alloc0))
    if not need_agent_pass:
        return None, trace2, trace0
    s_agents = s_agent_parent.spawn(n)
    Z = _agent_crs_survivors(x, instance, X, s_agents)
    owner1: list = [None] * m
    for j in range(m):
        if winner[j] >= 0 and Z[winner[j], j]:
            owner1[j] = int(winner[j])
    alloc1 = Allocation(tuple(owner1))
    trace1 = RoundingTrace(X, Y, Z, alloc1, *_values_for(instance, alloc1))
    return trace1, trace2, trace0


def coupled_round(x, rng, instance: Instance | None = None):
    """Coupled (trace0, trace2): identical randomness, subset guarantee per agent."""
    _, trace2, trace0 = coupled_chain(x, instance, rng)
    return trace0, trace2


# ---------------------------------------------------------------------------
# matching-program procedures


class _EdgeSetOracle:
    """Independence oracle on an agent's edge list: vertex degrees <= 1 and
    the matched vertex set independent in the underlying matroid."""

    def __init__(self, vertex_of: list[int], matroid):
        self.vertex_of = vertex_of
        self.matroid = matroid
        self.ground_size = len(vertex_of)

    def is_independent(self, S) -> bool:
        verts = [self.vertex_of[e] for e in S]
        if len(set(verts)) != len(verts):
            return False
        return self.matroid.is_independent(verts)

    def rank(self, S) -> int:
        taken: list[int] = []
        for e in sorted(set(S)):
            if self.is_independent(taken + [e]):
                taken.append(e)
        return len(taken)


def _derived_edge_matroid(vertex_of: list[int], matroid):
    """Partition form of the degree+matroid constraint when it exists."""
    E = len(vertex_of)
    if isinstance(matroid, UniformMatroid) and matroid.max_rank >= matroid.ground_size:
        groups: dict[int, list[int]] = {}
        for e, v in enumerate(vertex_of):
            groups.setdefault(v, []).append(e)
        blocks = tuple(tuple(g) for g in groups.values())
        return PartitionMatroid(E, blocks, tuple(1 for _ in blocks)), PARTITION_EXACT
    if isinstance(matroid, PartitionMatroid) and all(c == 1 for c in matroid.capacities):
        block_of = {}
        for bidx, blk in enumerate(matroid.blocks):
            for v in blk:
                block_of[v] = bidx
        groups = {}
        for e, v in enumerate(vertex_of):
            groups.setdefault(block_of[v], []).append(e)
        blocks = tuple(tuple(g) for g in groups.values())
        return PartitionMatroid(E, blocks, tuple(1 for _ in blocks)), PARTITION_EXACT
    return _EdgeSetOracle(vertex_of, matroid), RANDOM_ORDER_GREEDY


def _edge_layout(instance: Instance, attr: str):
    """Global edge ids in program order: agents in order, edges in spec order."""
    edges = []
    for i, val in enumerate(instance.valuations):
        for rec in getattr(val, attr):
            edges.append((i, rec))
    return edges


def round3(z, instance: Instance, rng) -> RoundingTrace:
    """Edge rounding for bipartite matching valuations with a matroid constraint."""
    for val in instance.valuations:
        if not isinstance(val, BipartiteMatchingMatroid):
            raise InputError("procedure 3 requires bipartite matching valuations")
    edges = _edge_layout(instance, "edges")
    z = np.clip(np.asarray(getattr(z, "values", z), dtype=float), 0.0, 1.0)
    if z.shape != (len(edges),):
        raise InputError(f"expected one value per edge ({len(edges)})")
    m, n = instance.m, instance.n
    s_act, s_item_parent, s_agent_parent = _streams(rng, 3)
    s_items = s_item_parent.spawn(m)
    s_agents = s_agent_parent.spawn(n)

    X = (s_act.random(len(edges)) < z).astype(np.int8)
    Y = np.zeros(len(edges), dtype=np.int8)
    for j in range(m):
        incident = [e for e, (i, (ej, k, w)) in enumerate(edges) if ej == j]
        active = [t for t, e in enumerate(incident) if X[e]]
        if not active:
            continue
        marg = np.array([z[e] for e in incident])
        if marg.sum() > 1.0:
            marg = marg / marg.sum()
        crs = CrsSpec(UniformMatroid(len(incident), 1), marg, 1.0, RANK1_EXACT)
        picked = resolve(crs, active, s_items[j])
        for t in picked:
            Y[incident[t]] = 1
    Z = np.zeros(len(edges), dtype=np.int8)
    for i, val in enumerate(instance.valuations):
        locals_ = [e for e, (ei, _) in enumerate(edges) if ei == i]
        vertex_of = [edges[e][1][1] for e in locals_]
        derived, scheme = _derived_edge_matroid(vertex_of, val.right_matroid)
        marg = np.array([z[e] for e in locals_])
        crs = CrsSpec(derived, marg, 1.0, scheme)
        active = [t for t, e in enumerate(locals_) if X[e]]
        if not active:
            continue
        for t in resolve(crs, active, s_agents[i]):
            Z[locals_[t]] = 1
    owner: list = [None] * m
    for e, (i, (j, k, w)) in enumerate(edges):
        if Y[e] and Z[e]:
            owner[j] = i
    alloc = Allocation(tuple(owner))
    prod, nsw = _values_for(instance, alloc)
    return RoundingTrace(X, Y, Z, alloc, prod, nsw)


def round4(z, instance: Instance, rng) -> RoundingTrace:
    """Hyperedge rounding for k-partite matching valuations.

    Item-level contention runs at scale 1; the per-part schemes run at
    b = 1/(k-1): each activated hyperedge keeps one shared coin with
    probability b and the part schemes see marginals b*z, which places them
    inside b times their polytopes.
    """
    for val in instance.valuations:
        if not isinstance(val, KPartiteMatching):
            raise InputError("procedure 4 requires k-partite matching valuations")
    k = instance.valuations[0].k
    b = 1.0 / (k - 1)
    edges = _edge_layout(instance, "hyperedges")
    z = np.clip(np.asarray(getattr(z, "values", z), dtype=float), 0.0, 1.0)
    if z.shape != (len(edges),):
        raise InputError(f"expected one value per hyperedge ({len(edges)})")
    m, n = instance.m, instance.n
    s_act, s_item_parent, s_agent_parent, s_keep = _streams(rng, 4)
    s_items = s_item_parent.spawn(m)

    X = (s_act.random(len(edges)) < z).astype(np.int8)
    keep = (s_keep.random(len(edges)) < b).astype(np.int8)
    Y = np.zeros(len(edges), dtype=np.int8)
    for j in range(m):
        incident = [e for e, (i, (ej, vs, w)) in enumerate(edges) if ej == j]
        active = [t for t, e in enumerate(incident) if X[e]]
        if not active:
            continue
        marg = np.array([z[e] for e in incident])
        if marg.sum() > 1.0:
            marg = marg / marg.sum()
        crs = CrsSpec(UniformMatroid(len(incident), 1), marg, 1.0, RANK1_EXACT)
        for t in resolve(crs, active, s_items[j]):
            Y[incident[t]] = 1
    Zparts = np.ones(len(edges), dtype=np.int8)
    agent_streams = s_agent_parent.spawn(n)
    for i, val in enumerate(instance.valuations):
        locals_ = [e for e, (ei, _) in enumerate(edges) if ei == i]
        part_streams = agent_streams[i].spawn(val.k - 1)
        active = [t for t, e in enumerate(locals_) if X[e] and keep[e]]
        surv = np.zeros((val.k - 1, len(locals_)), dtype=np.int8)
        for ell in range(val.k - 1):
            vertex_of = [edges[e][1][1][ell] for e in locals_]
            derived, scheme = _derived_edge_matroid(vertex_of, val.part_matroids[ell])
            marg = b * np.array([z[e] for e in locals_])
            crs = CrsSpec(derived, marg, b, scheme)
            if active:
                for t in resolve(crs, active, part_streams[ell]):
                    surv[ell, t] = 1
        for t, e in enumerate(locals_):
            Zparts[e] = keep[e] and X[e] and all(surv[ell, t] for ell in range(val.k - 1))
    owner: list = [None] * m
    for e, (i, (j, vs, w)) in enumerate(edges):
        if Y[e] and Zparts[e]:
            owner[j] = i
    alloc = Allocation(tuple(owner))
    prod, nsw = _values_for(instance, alloc)
    return RoundingTrace(X, Y, Zparts, alloc, prod, nsw)
