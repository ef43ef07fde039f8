"""Vectorized Monte-Carlo engines for the rounding procedures.

Samples are processed in chunks with one child random stream per chunk, so
results are reproducible for any thread count.  Item bundles are tracked as
bitmasks and realized values come from per-agent subset tables, which keeps
the whole sampler inside numpy except for random-order-greedy matroids.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .errors import InputError, UnsupportedSizeError
from .contention import (
    PARTITION_EXACT,
    RANK1_EXACT,
    UNIFORM_QUOTA,
    auto_scheme,
    fair_pick_probabilities,
)
from .instances import Instance
from .matroids import PartitionMatroid, UniformMatroid
from .rounding import (
    _derived_edge_matroid,
    _edge_layout,
    _fair_marginals,
    _sanitize_columns,
)
from .valuations import (
    BipartiteMatchingMatroid,
    KPartiteMatching,
    WeightedMatroidRank,
    value_table,
)

CHUNK = 1 << 15
MASK_CAP = 20


def thread_count() -> int:
    try:
        return max(1, int(os.environ.get("NSWLAB_THREADS", "1")))
    except ValueError:
        return 1


def _q_table(marginals: np.ndarray) -> np.ndarray:
    """Fair-pick win probabilities indexed by active bitmask: (2^g, g).

    Masks touching a zero-marginal element are unreachable under the product
    activation law and keep an all-zero row.
    """
    g = len(marginals)
    reachable = sum(1 << t for t in range(g) if marginals[t] > 0.0)
    table = np.zeros((1 << g, g))
    for mask in range(1, 1 << g):
        if mask & ~reachable:
            continue
        active = [t for t in range(g) if mask >> t & 1]
        probs = fair_pick_probabilities(marginals, active)
        for t, p in probs.items():
            table[mask, t] = p
    return table


def _draw_fair_winner(qtable: np.ndarray, masks: np.ndarray, rng) -> np.ndarray:
    """Vectorized fair pick: winner index per sample, -1 for empty masks."""
    Q = qtable[masks]
    cum = np.cumsum(Q, axis=1)
    u = rng.random(len(masks))
    winner = (u[:, None] < cum).argmax(axis=1)
    winner[masks == 0] = -1
    return winner


def _value_tables(instance: Instance) -> list[np.ndarray]:
    if instance.m > MASK_CAP:
        raise UnsupportedSizeError(f"batch sampler capped at {MASK_CAP} items")
    return [value_table(v) for v in instance.valuations]


def _products_from_masks(tables, masks: np.ndarray) -> np.ndarray:
    out = np.ones(masks.shape[0])
    for i, tbl in enumerate(tables):
        out *= tbl[masks[:, i]]
    return out


# ---------------------------------------------------------------------------
# assignment-style procedures (0, 1, 2) on an x matrix


def _chunk_round0_masks(x: np.ndarray, size: int, rng) -> np.ndarray:
    n, m = x.shape
    masks = np.zeros((size, n), dtype=np.int64)
    cum = np.cumsum(x, axis=0)  # (n, m)
    u = rng.random((size, m))
    for j in range(m):
        owner = (u[:, j][:, None] < cum[:, j][None, :]).argmax(axis=1)
        owner[u[:, j] >= cum[-1, j]] = -1
        for i in range(n):
            masks[owner == i, i] |= 1 << j
    return masks


def _agent_survivors_chunk(x, instance, X, rng) -> np.ndarray:
    """Per-agent matroid scheme survivors as item bitmasks, (size, n)."""
    size, n, m = X.shape
    Z = np.zeros((size, n), dtype=np.int64)
    for i in range(n):
        matroid = instance.valuations[i].matroid
        scheme = auto_scheme(matroid)
        Xi = X[:, i, :]
        if scheme in (RANK1_EXACT, PARTITION_EXACT):
            blocks = (
                [tuple(range(m))]
                if isinstance(matroid, UniformMatroid)
                else [blk for blk in matroid.blocks]
            )
            for blk in blocks:
                blk = list(blk)
                local = np.zeros(size, dtype=np.int64)
                for t, j in enumerate(blk):
                    local |= Xi[:, j].astype(np.int64) << t
                qt = _q_table(x[i, blk])
                win = _draw_fair_winner(qt, local, rng)
                for t, j in enumerate(blk):
                    Z[win == t, i] |= 1 << j
        elif scheme == UNIFORM_QUOTA:
            r = matroid.max_rank
            if r >= m:
                for j in range(m):
                    Z[Xi[:, j].astype(bool), i] |= 1 << j
                continue
            keys = rng.random((size, m))
            keys[~Xi.astype(bool)] = np.inf
            thr = np.partition(keys, r - 1, axis=1)[:, r - 1]
            keep = (keys <= thr[:, None]) & Xi.astype(bool)
            for j in range(m):
                Z[keep[:, j], i] |= 1 << j
        else:  # random-order greedy, per sample
            for t in range(size):
                active = [j for j in range(m) if Xi[t, j]]
                order = rng.permutation(len(active))
                taken: list[int] = []
                for idx in order:
                    j = active[idx]
                    if matroid.is_independent(taken + [j]):
                        taken.append(j)
                for j in taken:
                    Z[t, i] |= 1 << j
    return Z


def _chunk_assignment(x, instance, procedure, size, rng, coupled=False):
    """Masks for procedures 0/1/2 in one chunk; optionally the coupled triple."""
    n, m = x.shape
    if procedure == 0 and not coupled:
        return _chunk_round0_masks(x, size, rng)
    X = rng.random((size, n, m)) < x[None, :, :]
    winner = np.full((size, m), -1, dtype=np.int64)
    for j in range(m):
        local = np.zeros(size, dtype=np.int64)
        for i in range(n):
            local |= X[:, i, j].astype(np.int64) << i
        qt = _q_table(x[:, j])
        winner[:, j] = _draw_fair_winner(qt, local, rng)
    masks2 = np.zeros((size, n), dtype=np.int64)
    for j in range(m):
        for i in range(n):
            masks2[winner[:, j] == i, i] |= 1 << j
    if procedure == 2 and not coupled:
        return masks2

    if procedure == 1 or coupled:
        need_round1 = all(isinstance(v, WeightedMatroidRank) for v in instance.valuations)
        masks1 = None
        if need_round1:
            Z = _agent_survivors_chunk(x, instance, X, rng)
            masks1 = np.zeros((size, n), dtype=np.int64)
            for j in range(m):
                for i in range(n):
                    won = winner[:, j] == i
                    kept = (Z[:, i] >> j & 1).astype(bool)
                    masks1[won & kept, i] |= 1 << j
        if procedure == 1 and not coupled:
            if masks1 is None:
                raise InputError("procedure 1 requires weighted matroid rank valuations")
            return masks1

    # coupled: re-add empty-column items with the residual probabilities
    masks0 = masks2.copy()
    for j in range(m):
        empty = winner[:, j] == -1
        if not empty.any():
            continue
        p_empty = float(np.prod(1.0 - x[:, j]))
        if p_empty <= 0.0:
            continue
        residual = (x[:, j] - _fair_marginals(x[:, j])) / p_empty
        cum = np.cumsum(residual)
        u = rng.random(size)
        owner = (u[:, None] < cum[None, :]).argmax(axis=1)
        owner[u >= cum[-1]] = -1
        for i in range(n):
            masks0[empty & (owner == i), i] |= 1 << j
    if coupled:
        return masks1, masks2, masks0
    return masks0


# ---------------------------------------------------------------------------
# edge-style procedures (3, 4)


def _chunk_edges(z, instance, procedure, size, rng):
    n, m = instance.n, instance.m
    attr = "edges" if procedure == 3 else "hyperedges"
    edges = _edge_layout(instance, attr)
    E = len(edges)
    X = rng.random((size, E)) < z[None, :]
    Y = np.zeros((size, E), dtype=bool)
    for j in range(m):
        incident = [e for e, (i, rec) in enumerate(edges) if rec[0] == j]
        if not incident:
            continue
        if len(incident) > MASK_CAP:
            raise UnsupportedSizeError("too many edges on one item for the batch sampler")
        local = np.zeros(size, dtype=np.int64)
        for t, e in enumerate(incident):
            local |= X[:, e].astype(np.int64) << t
        marg = z[incident]
        s = marg.sum()
        if s > 1.0:
            marg = marg / s
        win = _draw_fair_winner(_q_table(marg), local, rng)
        for t, e in enumerate(incident):
            Y[win == t, e] = True

    if procedure == 3:
        Z = np.zeros((size, E), dtype=bool)
        for i, val in enumerate(instance.valuations):
            locals_ = [e for e, (ei, _) in enumerate(edges) if ei == i]
            vertex_of = [edges[e][1][1] for e in locals_]
            derived, scheme = _derived_edge_matroid(vertex_of, val.right_matroid)
            Z |= _edge_survivors(X, locals_, z[locals_], derived, scheme, size, rng, E)
        alive = Y & Z
    else:
        k = instance.valuations[0].k
        b = 1.0 / (k - 1)
        keep = rng.random((size, E)) < b
        alive = Y & keep & X.astype(bool)
        for i, val in enumerate(instance.valuations):
            locals_ = [e for e, (ei, _) in enumerate(edges) if ei == i]
            act = X & keep
            for ell in range(val.k - 1):
                vertex_of = [edges[e][1][1][ell] for e in locals_]
                derived, scheme = _derived_edge_matroid(vertex_of, val.part_matroids[ell])
                surv = _edge_survivors(
                    act, locals_, b * z[locals_], derived, scheme, size, rng, E, scale=b
                )
                alive[:, locals_] &= surv[:, locals_]

    masks = np.zeros((size, n), dtype=np.int64)
    for e, (i, rec) in enumerate(edges):
        j = rec[0]
        masks[alive[:, e], i] |= 1 << j
    return masks


def _edge_survivors(X, locals_, marginals, derived, scheme, size, rng, E, scale=1.0):
    """Survivor flags (size, E) of one agent-side scheme over its local edges."""
    out = np.zeros((size, E), dtype=bool)
    if scheme == PARTITION_EXACT:
        for blk in derived.blocks:
            blk = list(blk)
            local = np.zeros(size, dtype=np.int64)
            for t, tt in enumerate(blk):
                local |= X[:, locals_[tt]].astype(np.int64) << t
            win = _draw_fair_winner(_q_table(marginals[blk]), local, rng)
            for t, tt in enumerate(blk):
                out[win == t, locals_[tt]] = True
        return out
    for s in range(size):
        active = [t for t in range(len(locals_)) if X[s, locals_[t]]]
        order = rng.permutation(len(active))
        taken: list[int] = []
        for idx in order:
            t = active[idx]
            if derived.is_independent(taken + [t]):
                taken.append(t)
        for t in taken:
            out[s, locals_[t]] = True
    return out


# ---------------------------------------------------------------------------
# public entry points


def _run_chunked(worker, samples: int, rng, threads: int | None = None):
    threads = threads if threads is not None else thread_count()
    sizes = []
    left = samples
    while left > 0:
        sizes.append(min(CHUNK, left))
        left -= sizes[-1]
    streams = rng.spawn(len(sizes))
    if threads <= 1 or len(sizes) == 1:
        parts = [worker(sz, st) for sz, st in zip(sizes, streams)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda a: worker(*a), zip(sizes, streams)))
    return parts


def sample_bundle_masks(
    instance: Instance, procedure: int, samples: int, rng, x=None, z=None, threads=None
) -> np.ndarray:
    """Per-sample per-agent allocated bundles, as item bitmasks (samples, n)."""
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    if procedure in (0, 1, 2):
        if x is None:
            raise InputError("procedures 0/1/2 need the assignment matrix x")
        xm = _sanitize_columns(np.asarray(x, dtype=float).reshape(instance.n, instance.m))
        parts = _run_chunked(
            lambda sz, st: _chunk_assignment(xm, instance, procedure, sz, st), samples, rng, threads
        )
    elif procedure in (3, 4):
        if z is None:
            raise InputError("procedures 3/4 need the edge value vector z")
        zv = np.clip(np.asarray(z, dtype=float), 0.0, 1.0)
        parts = _run_chunked(
            lambda sz, st: _chunk_edges(zv, instance, procedure, sz, st), samples, rng, threads
        )
    else:
        raise InputError(f"unknown procedure {procedure}")
    return np.vstack(parts)


def sample_products(
    instance: Instance, procedure: int, samples: int, rng, x=None, z=None, threads=None
) -> np.ndarray:
    """Realized products of agent values over seeded rounding runs."""
    tables = _value_tables(instance)
    masks = sample_bundle_masks(instance, procedure, samples, rng, x=x, z=z, threads=threads)
    return _products_from_masks(tables, masks)


def sample_coupled_masks(instance: Instance, x, samples: int, rng, threads=None):
    """Coupled bundles of procedures (1, 2, 0); entry 0 is None for non-rank valuations."""
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    xm = _sanitize_columns(np.asarray(x, dtype=float).reshape(instance.n, instance.m))
    parts = _run_chunked(
        lambda sz, st: _chunk_assignment(xm, instance, 1, sz, st, coupled=True),
        samples,
        rng,
        threads,
    )
    m1 = np.vstack([p[0] for p in parts]) if parts[0][0] is not None else None
    m2 = np.vstack([p[1] for p in parts])
    m0 = np.vstack([p[2] for p in parts])
    return m1, m2, m0
