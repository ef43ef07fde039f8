"""The five relaxation programs as explicit variable/constraint structures.

Every program kind compiles to one uniform shape: a variable vector in the
unit box, a list of linear rows A v <= b, and objective terms
(agent, item, weight, var) feeding the saddle objective
sum_i log(sum_terms weight * v[var] * y_item).  The exponential dual
constraint family y^S >= 1 is never materialized; it is represented by the
n-smallest-coordinates separation oracle on log y.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from .instances import Instance
from .matroids import rank_constraint_rows
from .valuations import (
    BipartiteMatchingMatroid,
    Coverage,
    KPartiteMatching,
    SumOfWeightedRanks,
    WeightedMatroidRank,
    coverage_to_rank_sum,
    evaluate_with_witness,
)

NEG_INF = float("-inf")


@dataclass(frozen=True)
class ObjectiveTerm:
    agent: int
    item: int
    weight: float
    var: int


@dataclass(frozen=True)
class ProgramSpec:
    kind: str
    n: int
    m: int
    num_vars: int
    terms: tuple[ObjectiveTerm, ...]
    row_matrix: np.ndarray  # (rows, num_vars)
    row_rhs: np.ndarray
    row_labels: tuple[str, ...]
    layout: dict = field(default_factory=dict)

    def coefficient_matrix(self, values: np.ndarray) -> np.ndarray:
        """Aggregate per-(agent, item) objective coefficients at a solution."""
        C = np.zeros((self.n, self.m))
        for t in self.terms:
            C[t.agent, t.item] += t.weight * values[t.var]
        return C

    def x_matrix(self, values: np.ndarray) -> np.ndarray:
        """The n x m assignment block (kinds that carry one)."""
        off = self.layout.get("x_offset")
        if off is None:
            raise InputError(f"program kind {self.kind} has no x block")
        return values[off : off + self.n * self.m].reshape(self.n, self.m).copy()


@dataclass
class FractionalSolution:
    values: np.ndarray
    feasibility_tol: float = 1e-7

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)


@dataclass
class DualPoint:
    log_y: np.ndarray

    def __post_init__(self):
        self.log_y = np.asarray(self.log_y, dtype=float)


def dual_separation(dual: DualPoint, n: int, tol: float = 1e-12):
    """ok (None) or the size-n index set with the most negative coordinate sum.

    Feasibility of the family y^S >= 1 over all |S| = n reduces to the sum of
    the n smallest log-coordinates being >= 0; ties break by index.  The
    tolerance absorbs float residue at the boundary.
    """
    u = dual.log_y
    if len(u) < n:
        raise InputError(f"need at least n={n} items, got m={len(u)}")
    order = np.argsort(u, kind="stable")[:n]
    if float(u[order].sum()) < -tol:
        return tuple(sorted(int(j) for j in order))
    return None


def log_objective(program: ProgramSpec, sol: FractionalSolution, dual: DualPoint) -> float:
    """sum_i log(sum_terms w * v * exp(u_item)); -inf sentinel, never raises."""
    if len(dual.log_y) != program.m:
        raise InputError("dual dimension must equal the item count")
    ey = np.exp(dual.log_y)
    s = np.zeros(program.n)
    v = sol.values
    for t in program.terms:
        s[t.agent] += t.weight * v[t.var] * ey[t.item]
    if (s <= 0.0).any():
        return NEG_INF
    return float(np.log(s).sum())


def feasible(program: ProgramSpec, sol: FractionalSolution):
    """(ok, violations); each violation is (label, slack) with slack > 0."""
    tol = sol.feasibility_tol
    v = sol.values
    out = []
    if len(v) != program.num_vars:
        raise InputError("solution dimension mismatch")
    low = -v
    high = v - 1.0
    for idx in np.flatnonzero(low > tol):
        out.append((f"box_low[{idx}]", float(low[idx])))
    for idx in np.flatnonzero(high > tol):
        out.append((f"box_high[{idx}]", float(high[idx])))
    slack = program.row_matrix @ v - program.row_rhs
    for idx in np.flatnonzero(slack > tol):
        out.append((program.row_labels[idx], float(slack[idx])))
    return (len(out) == 0), out


# ---------------------------------------------------------------------------
# program builders


class _RowBuilder:
    def __init__(self, num_vars: int):
        self.num_vars = num_vars
        self.rows: list[np.ndarray] = []
        self.rhs: list[float] = []
        self.labels: list[str] = []

    def add(self, coeffs: dict[int, float], rhs: float, label: str):
        row = np.zeros(self.num_vars)
        for var, c in coeffs.items():
            row[var] += c
        self.rows.append(row)
        self.rhs.append(float(rhs))
        self.labels.append(label)

    def build(self):
        if not self.rows:
            return np.zeros((0, self.num_vars)), np.zeros(0), ()
        return np.vstack(self.rows), np.asarray(self.rhs), tuple(self.labels)


def build_program(instance: Instance, force_kind: str | None = None) -> ProgramSpec:
    """Compile an instance into its relaxation program.

    The valuation class selects the kind; a mix of rank-type classes
    (weighted rank / sums / coverage) is normalized to SumRanks via the
    coverage-to-rank-sum rewrite.  Matching classes cannot be mixed.
    `force_kind="SumRanks"` requests the rank-sum view for instances that
    also admit a dedicated program (the coverage cross-check path).
    """
    kinds = {type(v) for v in instance.valuations}
    if force_kind == "SumRanks":
        if not kinds <= {WeightedMatroidRank, SumOfWeightedRanks, Coverage}:
            raise InputError("only rank-type classes admit the SumRanks view")
        return _build_sumranks(instance)
    if force_kind is not None:
        raise InputError(f"cannot force program kind {force_kind!r}")
    if kinds == {WeightedMatroidRank}:
        return _build_p1(instance)
    if kinds == {Coverage}:
        return _build_coverage(instance)
    if kinds <= {WeightedMatroidRank, SumOfWeightedRanks, Coverage}:
        return _build_sumranks(instance)
    if kinds == {BipartiteMatchingMatroid}:
        return _build_matching(instance)
    if kinds == {KPartiteMatching}:
        return _build_kmatching(instance)
    raise InputError(
        "unsupported valuation mix: matching classes cannot be combined with others"
    )


def _add_assignment_rows(rb: _RowBuilder, n: int, m: int, x_off: int):
    for j in range(m):
        rb.add({x_off + i * m + j: 1.0 for i in range(n)}, 1.0, f"assign[item={j}]")


def _build_p1(instance: Instance) -> ProgramSpec:
    n, m = instance.n, instance.m
    num_vars = n * m
    rb = _RowBuilder(num_vars)
    terms = []
    for i, val in enumerate(instance.valuations):
        for S, rhs in rank_constraint_rows(val.matroid):
            rb.add({i * m + j: 1.0 for j in S}, rhs, f"polytope[agent={i},S={S}]")
        for j, w in enumerate(val.weights):
            if w > 0:
                terms.append(ObjectiveTerm(i, j, w, i * m + j))
    _add_assignment_rows(rb, n, m, 0)
    A, b, labels = rb.build()
    return ProgramSpec("P1", n, m, num_vars, tuple(terms), A, b, labels, {"x_offset": 0})


def _as_rank_sum(val) -> SumOfWeightedRanks:
    if isinstance(val, SumOfWeightedRanks):
        return val
    if isinstance(val, WeightedMatroidRank):
        return SumOfWeightedRanks((val,))
    if isinstance(val, Coverage):
        return coverage_to_rank_sum(val)
    raise InputError(f"cannot express {type(val).__name__} as a sum of weighted ranks")


def _build_sumranks(instance: Instance) -> ProgramSpec:
    n, m = instance.n, instance.m
    sums = [_as_rank_sum(v) for v in instance.valuations]
    x_off = 0
    num_vars = n * m
    z_offsets: dict[tuple[int, int], int] = {}
    for i, sv in enumerate(sums):
        for k in range(len(sv.terms)):
            z_offsets[(i, k)] = num_vars
            num_vars += m
    rb = _RowBuilder(num_vars)
    terms = []
    for i, sv in enumerate(sums):
        for k, term in enumerate(sv.terms):
            z0 = z_offsets[(i, k)]
            for S, rhs in rank_constraint_rows(term.matroid):
                rb.add({z0 + j: 1.0 for j in S}, rhs, f"polytope[agent={i},term={k},S={S}]")
            for j in range(m):
                rb.add({z0 + j: 1.0, x_off + i * m + j: -1.0}, 0.0, f"couple[agent={i},term={k},item={j}]")
                if term.weights[j] > 0:
                    terms.append(ObjectiveTerm(i, j, term.weights[j], z0 + j))
    _add_assignment_rows(rb, n, m, x_off)
    A, b, labels = rb.build()
    return ProgramSpec(
        "SumRanks", n, m, num_vars, tuple(terms), A, b, labels,
        {"x_offset": x_off, "z_offsets": z_offsets},
    )


def _build_coverage(instance: Instance) -> ProgramSpec:
    n, m = instance.n, instance.m
    x_off = 0
    num_vars = n * m
    cover_vars: dict[tuple[int, int, int], int] = {}  # (agent, element, item) -> var
    for i, val in enumerate(instance.valuations):
        for e in range(val.universe_size):
            for j in range(m):
                if e in val.covers[j]:
                    cover_vars[(i, e, j)] = num_vars
                    num_vars += 1
    rb = _RowBuilder(num_vars)
    terms = []
    for i, val in enumerate(instance.valuations):
        for e in range(val.universe_size):
            D = [j for j in range(m) if e in val.covers[j]]
            if not D:
                continue
            rb.add({cover_vars[(i, e, j)]: 1.0 for j in D}, 1.0, f"element[agent={i},e={e}]")
            for j in D:
                var = cover_vars[(i, e, j)]
                rb.add({var: 1.0, x_off + i * m + j: -1.0}, 0.0, f"couple[agent={i},e={e},item={j}]")
                terms.append(ObjectiveTerm(i, j, 1.0, var))
    _add_assignment_rows(rb, n, m, x_off)
    A, b, labels = rb.build()
    return ProgramSpec(
        "CoverageP1pp", n, m, num_vars, tuple(terms), A, b, labels,
        {"x_offset": x_off, "cover_vars": cover_vars},
    )


def _build_matching(instance: Instance) -> ProgramSpec:
    n, m = instance.n, instance.m
    edge_vars: list[tuple[int, int, int, float]] = []  # (agent, item, right, weight)
    for i, val in enumerate(instance.valuations):
        for j, k, w in val.edges:
            edge_vars.append((i, j, k, w))
    num_vars = len(edge_vars)
    rb = _RowBuilder(num_vars)
    terms = []
    for e, (i, j, k, w) in enumerate(edge_vars):
        if w > 0:
            terms.append(ObjectiveTerm(i, j, w, e))
    for j in range(m):
        coeffs = {e: 1.0 for e, (_, ej, _, _) in enumerate(edge_vars) if ej == j}
        if coeffs:
            rb.add(coeffs, 1.0, f"assign[item={j}]")
    for i, val in enumerate(instance.valuations):
        for k in range(val.right_vertices):
            coeffs = {
                e: 1.0
                for e, (ei, _, ek, _) in enumerate(edge_vars)
                if ei == i and ek == k
            }
            if coeffs:
                rb.add(coeffs, 1.0, f"degree[agent={i},right={k}]")
        for S, rhs in rank_constraint_rows(val.right_matroid):
            Sset = set(S)
            coeffs = {
                e: 1.0
                for e, (ei, _, ek, _) in enumerate(edge_vars)
                if ei == i and ek in Sset
            }
            if coeffs:
                rb.add(coeffs, rhs, f"polytope[agent={i},S={S}]")
    A, b, labels = rb.build()
    return ProgramSpec(
        "Matching", n, m, num_vars, tuple(terms), A, b, labels, {"edges": tuple(edge_vars)}
    )


def _build_kmatching(instance: Instance) -> ProgramSpec:
    n, m = instance.n, instance.m
    edge_vars: list[tuple[int, int, tuple[int, ...], float]] = []  # (agent, item, vs, w)
    for i, val in enumerate(instance.valuations):
        for j, vs, w in val.hyperedges:
            edge_vars.append((i, j, vs, w))
    num_vars = len(edge_vars)
    rb = _RowBuilder(num_vars)
    terms = []
    for e, (i, j, vs, w) in enumerate(edge_vars):
        if w > 0:
            terms.append(ObjectiveTerm(i, j, w, e))
    for j in range(m):
        coeffs = {e: 1.0 for e, (_, ej, _, _) in enumerate(edge_vars) if ej == j}
        if coeffs:
            rb.add(coeffs, 1.0, f"assign[item={j}]")
    for i, val in enumerate(instance.valuations):
        for ell in range(val.k - 1):
            for vtx in range(val.part_sizes[ell]):
                coeffs = {
                    e: 1.0
                    for e, (ei, _, evs, _) in enumerate(edge_vars)
                    if ei == i and evs[ell] == vtx
                }
                if coeffs:
                    rb.add(coeffs, 1.0, f"degree[agent={i},part={ell},v={vtx}]")
            for S, rhs in rank_constraint_rows(val.part_matroids[ell]):
                Sset = set(S)
                coeffs = {
                    e: 1.0
                    for e, (ei, _, evs, _) in enumerate(edge_vars)
                    if ei == i and evs[ell] in Sset
                }
                if coeffs:
                    rb.add(coeffs, rhs, f"polytope[agent={i},part={ell},S={S}]")
    A, b, labels = rb.build()
    return ProgramSpec(
        "KMatching", n, m, num_vars, tuple(terms), A, b, labels, {"edges": tuple(edge_vars)}
    )


# ---------------------------------------------------------------------------
# solutions derived from integral allocations


def induced_solution(program: ProgramSpec, instance: Instance, owners: list[int | None]) -> FractionalSolution:
    """The feasible program point encoding an integral allocation.

    `owners[j]` is the agent receiving item j, or None.  Per-agent sets are
    pruned to optimal witnesses (independent sets / matchings), mirroring the
    constructions used to prove the programs are relaxations.
    """
    if len(owners) != program.m:
        raise InputError("one owner entry per item required")
    v = np.zeros(program.num_vars)
    bundles = [
        [j for j, o in enumerate(owners) if o == i] for i in range(program.n)
    ]
    if program.kind == "P1":
        for i, val in enumerate(instance.valuations):
            _, taken = evaluate_with_witness(val, bundles[i])
            for j in taken:
                v[i * program.m + j] = 1.0
    elif program.kind == "SumRanks":
        x_off = program.layout["x_offset"]
        z_offsets = program.layout["z_offsets"]
        sums = [_as_rank_sum(val) for val in instance.valuations]
        for i, sv in enumerate(sums):
            for j in bundles[i]:
                v[x_off + i * program.m + j] = 1.0
            for k, term in enumerate(sv.terms):
                _, taken = evaluate_with_witness(term, bundles[i])
                for j in taken:
                    v[z_offsets[(i, k)] + j] = 1.0
    elif program.kind == "CoverageP1pp":
        x_off = program.layout["x_offset"]
        cover_vars = program.layout["cover_vars"]
        for i, val in enumerate(instance.valuations):
            for j in bundles[i]:
                v[x_off + i * program.m + j] = 1.0
            for e in range(val.universe_size):
                for j in bundles[i]:
                    if (i, e, j) in cover_vars:
                        v[cover_vars[(i, e, j)]] = 1.0
                        break
    elif program.kind in ("Matching", "KMatching"):
        edges = program.layout["edges"]
        for i, val in enumerate(instance.valuations):
            _, chosen = evaluate_with_witness(val, bundles[i])
            base = 0
            for i2 in range(i):
                count = len(instance.valuations[i2].edges) if program.kind == "Matching" else len(
                    instance.valuations[i2].hyperedges
                )
                base += count
            for e_local in chosen:
                v[base + e_local] = 1.0
    else:
        raise InputError(f"unknown program kind {program.kind}")
    return FractionalSolution(v)


def initial_solution(program: ProgramSpec) -> FractionalSolution:
    """Uniform start min(1/n, 1/m) scaled into feasibility by scalar bisection."""
    if program.m == 0:
        return FractionalSolution(np.zeros(program.num_vars))
    v0 = np.full(program.num_vars, min(1.0 / program.n, 1.0 / program.m))
    return FractionalSolution(scale_into_feasibility(program, v0))


def scale_into_feasibility(program: ProgramSpec, v: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Largest s in [0,1] with s*v feasible (rows have nonnegative rhs)."""
    v = np.clip(np.asarray(v, dtype=float), 0.0, 1.0)
    if program.row_matrix.shape[0] == 0:
        return v
    lo, hi = 0.0, 1.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if (program.row_matrix @ (v * mid) <= program.row_rhs + tol).all():
            lo = mid
        else:
            hi = mid
    return v * lo


def random_feasible_solution(program: ProgramSpec, rng: np.random.Generator) -> FractionalSolution:
    """Random box point scaled into the feasible region (test utility)."""
    return FractionalSolution(scale_into_feasibility(program, rng.uniform(0.0, 1.0, program.num_vars)))
