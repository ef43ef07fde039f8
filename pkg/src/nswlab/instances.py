"""Instance model, versioned JSON schema, and seeded generators."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import InputError
from .matroids import (
    ExplicitMatroid,
    GraphicMatroid,
    MatroidSpec,
    PartitionMatroid,
    UniformMatroid,
)
from .valuations import (
    BipartiteMatchingMatroid,
    Coverage,
    KPartiteMatching,
    SumOfWeightedRanks,
    ValuationSpec,
    WeightedMatroidRank,
)

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class Instance:
    n: int
    m: int
    valuations: tuple[ValuationSpec, ...]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n < 1 or self.m < 0:
            raise InputError("need n >= 1 agents and m >= 0 items")
        if len(self.valuations) != self.n:
            raise InputError("one valuation per agent required")
        for i, v in enumerate(self.valuations):
            if v.num_items != self.m:
                raise InputError(f"valuation {i} is over {v.num_items} items, expected {self.m}")


# ---------------------------------------------------------------------------
# serialization


def _matroid_to_obj(M: MatroidSpec) -> dict:
    if isinstance(M, UniformMatroid):
        return {"type": "uniform", "ground_size": M.ground_size, "rank": M.max_rank}
    if isinstance(M, PartitionMatroid):
        return {
            "type": "partition",
            "ground_size": M.ground_size,
            "blocks": [list(b) for b in M.blocks],
            "capacities": list(M.capacities),
        }
    if isinstance(M, GraphicMatroid):
        return {"type": "graphic", "vertex_count": M.vertex_count, "edges": [list(e) for e in M.edges]}
    if isinstance(M, ExplicitMatroid):
        sets = sorted(
            sorted(j for j in range(M.ground_size) if mask >> j & 1) for mask in M.independent_masks
        )
        return {"type": "explicit", "ground_size": M.ground_size, "independent_sets": sets}
    raise InputError(f"unknown matroid variant {type(M).__name__}")


def _matroid_from_obj(obj: Any, path: str) -> MatroidSpec:
    if not isinstance(obj, dict) or "type" not in obj:
        raise InputError(f"{path}: matroid object with a 'type' field required")
    t = obj["type"]
    try:
        if t == "uniform":
            return UniformMatroid(int(obj["ground_size"]), int(obj["rank"]))
        if t == "partition":
            return PartitionMatroid(
                int(obj["ground_size"]),
                tuple(tuple(int(j) for j in b) for b in obj["blocks"]),
                tuple(int(c) for c in obj["capacities"]),
            )
        if t == "graphic":
            return GraphicMatroid(
                int(obj["vertex_count"]), tuple((int(u), int(v)) for u, v in obj["edges"])
            )
        if t == "explicit":
            return ExplicitMatroid.from_sets(int(obj["ground_size"]), obj["independent_sets"])
    except KeyError as e:
        raise InputError(f"{path}: missing matroid field {e}") from e
    except (TypeError, ValueError) as e:
        raise InputError(f"{path}: {e}") from e
    raise InputError(f"{path}/type: unknown matroid type {t!r}")


def _valuation_to_obj(v: ValuationSpec) -> dict:
    if isinstance(v, WeightedMatroidRank):
        return {"kind": "weighted_matroid_rank", "matroid": _matroid_to_obj(v.matroid), "weights": list(v.weights)}
    if isinstance(v, SumOfWeightedRanks):
        return {
            "kind": "sum_of_weighted_ranks",
            "terms": [
                {"matroid": _matroid_to_obj(t.matroid), "weights": list(t.weights)} for t in v.terms
            ],
        }
    if isinstance(v, Coverage):
        return {"kind": "coverage", "universe_size": v.universe_size, "covers": [list(c) for c in v.covers]}
    if isinstance(v, BipartiteMatchingMatroid):
        return {
            "kind": "bipartite_matching_matroid",
            "num_items": v.num_items,
            "right_vertices": v.right_vertices,
            "edges": [[j, k, w] for j, k, w in v.edges],
            "right_matroid": _matroid_to_obj(v.right_matroid),
        }
    if isinstance(v, KPartiteMatching):
        return {
            "kind": "k_partite_matching",
            "num_items": v.num_items,
            "k": v.k,
            "part_sizes": list(v.part_sizes),
            "hyperedges": [[j, list(vs), w] for j, vs, w in v.hyperedges],
            "part_matroids": [_matroid_to_obj(M) for M in v.part_matroids],
        }
    raise InputError(f"unknown valuation variant {type(v).__name__}")


def _valuation_from_obj(obj: Any, m: int, path: str) -> ValuationSpec:
    if not isinstance(obj, dict) or "kind" not in obj:
        raise InputError(f"{path}: valuation object with a 'kind' field required")
    kind = obj["kind"]
    try:
        if kind == "weighted_matroid_rank":
            return WeightedMatroidRank(
                _matroid_from_obj(obj["matroid"], f"{path}/matroid"),
                tuple(float(w) for w in obj["weights"]),
            )
        if kind == "sum_of_weighted_ranks":
            terms = tuple(
                WeightedMatroidRank(
                    _matroid_from_obj(t["matroid"], f"{path}/terms/{i}/matroid"),
                    tuple(float(w) for w in t["weights"]),
                )
                for i, t in enumerate(obj["terms"])
            )
            return SumOfWeightedRanks(terms)
        if kind == "coverage":
            return Coverage(
                int(obj["universe_size"]), tuple(tuple(int(e) for e in c) for c in obj["covers"])
            )
        if kind == "bipartite_matching_matroid":
            return BipartiteMatchingMatroid(
                int(obj.get("num_items", m)),
                int(obj["right_vertices"]),
                tuple((int(j), int(k), float(w)) for j, k, w in obj["edges"]),
                _matroid_from_obj(obj["right_matroid"], f"{path}/right_matroid"),
            )
        if kind == "k_partite_matching":
            return KPartiteMatching(
                int(obj.get("num_items", m)),
                int(obj["k"]),
                tuple(int(s) for s in obj["part_sizes"]),
                tuple((int(j), tuple(int(v) for v in vs), float(w)) for j, vs, w in obj["hyperedges"]),
                tuple(
                    _matroid_from_obj(M, f"{path}/part_matroids/{i}")
                    for i, M in enumerate(obj["part_matroids"])
                ),
            )
    except KeyError as e:
        raise InputError(f"{path}: missing valuation field {e}") from e
    except InputError as e:
        if str(e).startswith("/"):
            raise
        raise InputError(f"{path}: {e}") from e
    except (TypeError, ValueError) as e:
        raise InputError(f"{path}: {e}") from e
    raise InputError(f"{path}/kind: unknown valuation kind {kind!r}")


def serialize_instance(instance: Instance) -> str:
    """Canonical JSON text: sorted keys, fixed separators, trailing newline."""
    obj = {
        "schema_version": SCHEMA_VERSION,
        "n": instance.n,
        "m": instance.m,
        "metadata": dict(instance.metadata),
        "valuations": [_valuation_to_obj(v) for v in instance.valuations],
    }
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def parse_instance(text: str) -> Instance:
    """Parse and validate an instance document; errors carry JSON-pointer paths."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise InputError(f"/: invalid JSON ({e})") from e
    if not isinstance(obj, dict):
        raise InputError("/: top-level object required")
    version = obj.get("schema_version")
    if version != SCHEMA_VERSION:
        raise InputError(f"/schema_version: unknown version {version!r}, expected {SCHEMA_VERSION}")
    for key in ("n", "m", "valuations"):
        if key not in obj:
            raise InputError(f"/{key}: required field missing")
    n, m = int(obj["n"]), int(obj["m"])
    vals = obj["valuations"]
    if not isinstance(vals, list) or len(vals) != n:
        raise InputError(f"/valuations: expected a list of {n} valuations")
    valuations = tuple(
        _valuation_from_obj(v, m, f"/valuations/{i}") for i, v in enumerate(vals)
    )
    try:
        return Instance(n, m, valuations, dict(obj.get("metadata", {})))
    except InputError as e:
        raise InputError(f"/: {e}") from e


def instance_digest(instance: Instance) -> str:
    return hashlib.sha256(serialize_instance(instance).encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# generators

FAMILIES = ("rank", "sumrank", "coverage", "matching", "kmatching")


def _round_weights(rng, size, scale):
    return tuple(round(float(x), 3) for x in rng.uniform(0.05, scale, size=size))


def _random_matroid(rng, m: int, kinds=("uniform", "partition", "graphic")) -> MatroidSpec:
    kind = kinds[int(rng.integers(0, len(kinds)))]
    if kind == "uniform":
        return UniformMatroid(m, int(rng.integers(1, m + 1)))
    if kind == "rank1":
        return UniformMatroid(m, 1)
    if kind == "cap1partition":
        return _cap1_partition(rng, m)
    if kind == "partition":
        nb = int(rng.integers(1, m + 1))
        blocks = [[] for _ in range(nb)]
        for j in range(m):
            blocks[int(rng.integers(0, nb))].append(j)
        blocks = [b for b in blocks if b]
        caps = [int(rng.integers(1, 3)) for _ in blocks]
        return PartitionMatroid(m, tuple(tuple(b) for b in blocks), tuple(caps))
    # graphic: m edges on a small vertex set, connectivity not required
    nv = max(2, int(np.ceil((1 + np.sqrt(1 + 8 * m)) / 2)))
    edges = []
    for _ in range(m):
        u = int(rng.integers(0, nv))
        v = int(rng.integers(0, nv))
        while v == u:
            v = int(rng.integers(0, nv))
        edges.append((u, v))
    return GraphicMatroid(nv, tuple(edges))


def _cap1_partition(rng, m: int) -> PartitionMatroid:
    nb = int(rng.integers(1, m + 1))
    blocks = [[] for _ in range(nb)]
    for j in range(m):
        blocks[int(rng.integers(0, nb))].append(j)
    blocks = [b for b in blocks if b]
    return PartitionMatroid(m, tuple(tuple(b) for b in blocks), tuple(1 for _ in blocks))


def generate(family: str, n: int, m: int, seed: int, params: dict | None = None) -> Instance:
    """Reproducible random instance; identical (family, n, m, seed, params)
    yields byte-identical serialized documents."""
    if family not in FAMILIES:
        raise InputError(f"unknown family {family!r}, expected one of {FAMILIES}")
    params = dict(params or {})
    scale = float(params.get("weight_scale", 2.0))
    rng = np.random.default_rng(seed)
    valuations: list[ValuationSpec] = []

    if family == "rank":
        kinds = tuple(params.get("matroids", ("uniform", "partition", "graphic")))
        for _ in range(n):
            M = _random_matroid(rng, m, kinds)
            valuations.append(WeightedMatroidRank(M, _round_weights(rng, m, scale)))
    elif family == "sumrank":
        max_terms = int(params.get("max_terms", 3))
        for _ in range(n):
            s = int(rng.integers(1, max_terms + 1))
            terms = tuple(
                WeightedMatroidRank(
                    _random_matroid(rng, m, ("uniform", "partition")),
                    _round_weights(rng, m, scale),
                )
                for _ in range(s)
            )
            valuations.append(SumOfWeightedRanks(terms))
    elif family == "coverage":
        universe = int(params.get("universe_size", max(1, m + 1)))
        for _ in range(n):
            covers = []
            for _ in range(m):
                size = int(rng.integers(1, max(2, universe // 2 + 1)))
                covers.append(tuple(sorted(rng.choice(universe, size=size, replace=False).tolist())))
            valuations.append(Coverage(universe, tuple(covers)))
    elif family == "matching":
        r = int(params.get("right_vertices", max(2, min(4, m))))
        p_edge = float(params.get("edge_prob", 0.6))
        for _ in range(n):
            edges = []
            for j in range(m):
                for k in range(r):
                    if rng.random() < p_edge:
                        edges.append((j, k, round(float(rng.uniform(0.05, scale)), 3)))
            if not edges:
                edges.append((int(rng.integers(0, m)), int(rng.integers(0, r)), round(float(rng.uniform(0.05, scale)), 3)))
            M = _cap1_partition(rng, r) if rng.random() < 0.5 else UniformMatroid(r, int(rng.integers(1, r + 1)))
            valuations.append(BipartiteMatchingMatroid(m, r, tuple(edges), M))
    else:  # kmatching
        k = int(params.get("k", 3))
        part_size = int(params.get("part_size", 2))
        edges_per_item = int(params.get("edges_per_item", 2))
        sizes = tuple(part_size for _ in range(k - 1))
        for _ in range(n):
            edges = []
            for j in range(m):
                for _ in range(edges_per_item):
                    vs = tuple(int(rng.integers(0, part_size)) for _ in range(k - 1))
                    edges.append((j, vs, round(float(rng.uniform(0.05, scale)), 3)))
            mats = tuple(
                UniformMatroid(part_size, part_size) if rng.random() < 0.5 else _cap1_partition(rng, part_size)
                for _ in range(k - 1)
            )
            valuations.append(KPartiteMatching(m, k, sizes, tuple(edges), mats))

    meta = {"name": f"{family}-n{n}-m{m}-s{seed}", "seed": int(seed), "family": family}
    return Instance(n, m, tuple(valuations), meta)
