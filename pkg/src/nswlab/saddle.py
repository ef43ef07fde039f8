"""Saddle-point solver for the relaxation programs.

The task is max over feasible primal points of the infimum over feasible
duals of the log objective.  The inner infimum is an unconstrained convex
problem after absorbing the dual constraint through the identity
inf_{u in K} g(u) = inf_u [g(u) - h(u)], where h(u) is the sum of the n
smallest coordinates; it is minimized by quasi-Newton descent on a
softplus-smoothed objective with a continuation schedule, then reported at
an exactly feasible dual.  The outer maximization runs a level-bundle
method: supergradient cuts from exact inner solves, an LP upper bound, and
an inf-norm level projection step, all over the materialized constraint
rows.  A plain alternating projected-subgradient scheme is kept as an
alternative method; it is slower to certify and exists for comparison.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations

import numpy as np
from scipy.optimize import linprog, minimize
from scipy.special import expit

from .errors import InputError
from .relaxation import (
    DualPoint,
    FractionalSolution,
    ProgramSpec,
    dual_separation,
    induced_solution,
    initial_solution,
    log_objective,
    scale_into_feasibility,
)

NEG_INF = float("-inf")
_DUAL_CLIP = 25.0
_GRAD_CAP = 1e6


@dataclass
class SolveConfig:
    outer_iters: int = 2000
    inner_iters: int = 500
    primal_steps: float = 0.5  # base step for the subgradient method, decays 1/sqrt(t)
    dual_steps: float = 0.5
    tol: float = 1e-4
    seed: int = 0
    method: str = "bundle"  # "bundle" | "subgradient"

    def __post_init__(self):
        if self.tol <= 0:
            raise InputError("tol must be positive")
        if self.outer_iters < 1 or self.inner_iters < 1:
            raise InputError("iteration counts must be >= 1")


@dataclass
class InnerResult:
    dual: DualPoint
    value: float
    zero_agent: int | None = None
    unbounded: bool = False


@dataclass
class SolveResult:
    solution: FractionalSolution
    dual: DualPoint
    value_log: float
    value_product: float
    value_nsw: float
    trace: list = field(default_factory=list)  # (iteration, best value_log)
    converged: bool = True
    gap: float = 0.0
    diagnostics: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# inner infimum


@lru_cache(maxsize=4096)
def _recession_unbounded(supports: tuple[int, ...], m: int, n: int) -> bool:
    """Exact test for inf = -inf via the piecewise-linear recession LP.

    The objective decays along direction d iff sum_i max_{j in supp_i} d_j
    is negative while every size-n coordinate sum of d stays nonnegative;
    shift-invariance makes restricting to the latter family lossless.
    """
    nA = len(supports)
    rows, rhs = [], []
    for i, supp in enumerate(supports):
        for j in range(m):
            if supp >> j & 1:
                r = np.zeros(m + nA)
                r[j] = 1.0
                r[m + i] = -1.0
                rows.append(r)
                rhs.append(0.0)
    for S in combinations(range(m), n):
        r = np.zeros(m + nA)
        for j in S:
            r[j] = -1.0
        rows.append(r)
        rhs.append(0.0)
    c = np.concatenate([np.zeros(m), np.ones(nA)])
    res = linprog(
        c,
        A_ub=np.array(rows),
        b_ub=np.array(rhs),
        bounds=[(-1, 1)] * m + [(None, None)] * nA,
        method="highs",
    )
    return bool(res.success and res.fun < -1e-9)


def _reduced_g(logC: np.ndarray, u: np.ndarray) -> float:
    z = logC + u[None, :]
    mx = z.max(axis=1)
    return float(np.sum(mx + np.log(np.exp(z - mx[:, None]).sum(axis=1))))


def dual_infimum(
    C: np.ndarray,
    n: int,
    u0: np.ndarray | None = None,
    mus: tuple[float, ...] = (1e-1, 1e-3, 1e-5, 1e-7),
    maxiter: int = 500,
) -> InnerResult:
    """Infimum over feasible duals of sum_i log(sum_j C_ij y_j), y = exp(u).

    Returns an exactly feasible dual and the objective value there.  The
    value is -inf when some agent row is all zero, when fewer than n items
    carry coefficient mass, or when the recession test certifies decay to
    -inf along a feasible dual ray.
    """
    C = np.asarray(C, dtype=float)
    nA, m = C.shape
    zero_rows = np.flatnonzero(C.sum(axis=1) <= 0.0)
    if zero_rows.size:
        return InnerResult(DualPoint(np.zeros(m)), NEG_INF, zero_agent=int(zero_rows[0]))
    pos = np.flatnonzero(C.sum(axis=0) > 0.0)
    if len(pos) < n:
        return InnerResult(DualPoint(np.zeros(m)), NEG_INF, unbounded=True)
    Cr = C[:, pos]
    mr = len(pos)
    supports = tuple(
        int(sum(1 << j for j in range(mr) if Cr[i, j] > 0.0)) for i in range(nA)
    )
    if _recession_unbounded(supports, mr, n):
        return InnerResult(DualPoint(np.zeros(m)), NEG_INF, unbounded=True)

    logC = np.where(Cr > 0, np.log(np.where(Cr > 0, Cr, 1.0)), -np.inf)

    def run_schedule(u, tau, schedule):
        converged = True
        for mu in schedule:
            def fg(ut):
                u_, tau_ = ut[:mr], ut[mr]
                z = logC + u_[None, :]
                mx = z.max(axis=1)
                e = np.exp(z - mx[:, None])
                s = e.sum(axis=1)
                val = np.sum(mx + np.log(s)) - n * tau_
                gu = (e / s[:, None]).sum(axis=0)
                t = (tau_ - u_) / mu
                val += (mu * np.logaddexp(0.0, t)).sum()
                sig = expit(t)
                gu -= sig
                return val, np.concatenate([gu, [-n + sig.sum()]])

            res = minimize(
                fg,
                np.concatenate([u, [tau]]),
                jac=True,
                method="L-BFGS-B",
                options={"maxiter": maxiter, "ftol": 1e-16, "gtol": 1e-10},
            )
            u, tau = res.x[:mr], res.x[mr]
            gnorm = float(np.abs(res.jac).max()) if res.jac is not None else np.inf
            if res.status != 0 and gnorm > 1e-5:
                converged = False
        return u, tau, converged

    full = (1e-1, 1e-3, 1e-5, 1e-7)
    if u0 is None:
        u, tau, ok = run_schedule(np.zeros(mr), 0.0, full)
    else:
        u = np.nan_to_num(np.asarray(u0, dtype=float)[pos].copy())
        u, tau, ok = run_schedule(u, float(np.sort(u)[:n].mean()), mus)
    if not ok:
        u, tau, _ = run_schedule(np.zeros(mr), 0.0, full)

    # exact feasibility: put the n smallest coordinates on the boundary, and
    # clip runaway coordinates (flat recession rays) for bounded gradients
    med = float(np.median(u))
    u = np.clip(u, med - _DUAL_CLIP, med + _DUAL_CLIP)
    u = u - float(np.sort(u)[:n].sum()) / n
    u_full = np.full(m, float(u.max()) + 1.0)
    u_full[pos] = u
    return InnerResult(DualPoint(u_full), _reduced_g(logC, u))


def inner_inf(program: ProgramSpec, sol: FractionalSolution, cfg: SolveConfig | None = None) -> InnerResult:
    """Infimum of the log objective over feasible duals at a fixed solution."""
    cfg = cfg or SolveConfig()
    C = program.coefficient_matrix(sol.values)
    return dual_infimum(C, program.n, maxiter=cfg.inner_iters)


def primal_supergradient(program: ProgramSpec, sol: FractionalSolution, dual: DualPoint) -> np.ndarray:
    """Danskin supergradient of the inner value at the given dual.

    Component for a variable carrying weight w on item j under agent i is
    w * exp(u_j) / (agent i's inner sum).
    """
    ey = np.exp(dual.log_y)
    s = np.zeros(program.n)
    for t in program.terms:
        s[t.agent] += t.weight * sol.values[t.var] * ey[t.item]
    if (s <= 0.0).any():
        raise InputError(f"inner sum nonpositive for agent {int(np.argmin(s))}")
    g = np.zeros(program.num_vars)
    for t in program.terms:
        g[t.var] += t.weight * ey[t.item] / s[t.agent]
    return g


# ---------------------------------------------------------------------------
# outer maximization


def _greedy_owners(program: ProgramSpec, instance) -> list:
    """Greedy integral warm start: assign items by best marginal product gain."""
    from .valuations import evaluate

    n, m = program.n, program.m
    bundles: list[list[int]] = [[] for _ in range(n)]
    cur = [0.0] * n
    weight_order = sorted(
        range(m),
        key=lambda j: -max((t.weight for t in program.terms if t.item == j), default=0.0),
    )
    for j in weight_order:
        best_i, best_gain = None, 1.0
        for i in range(n):
            new = evaluate(instance.valuations[i], bundles[i] + [j])
            gain = (new + 1e-9) / (cur[i] + 1e-9)
            if gain > best_gain:
                best_gain, best_i = gain, i
        if best_i is not None:
            bundles[best_i].append(j)
            cur[best_i] = evaluate(instance.valuations[best_i], bundles[best_i])
    owners: list = [None] * m
    for i in range(n):
        for j in bundles[i]:
            owners[j] = i
    return owners


def solve(program: ProgramSpec, cfg: SolveConfig | None = None, instance=None) -> SolveResult:
    """Maximize the inner infimum over the program's feasible region.

    Returns a feasible solution, a feasible dual, and the certified-at-desk-
    scale value.  Degenerate programs (an agent with no objective terms, or
    fewer valued items than agents) short-circuit to product value 0.
    """
    cfg = cfg or SolveConfig()
    n, m, d = program.n, program.m, program.num_vars

    agents_with_terms = {t.agent for t in program.terms}
    degenerate = [i for i in range(n) if i not in agents_with_terms]
    valued_items = {t.item for t in program.terms}
    if degenerate or len(valued_items) < n or m == 0:
        diag = {}
        if degenerate:
            diag["degenerate_agents"] = degenerate
        else:
            diag["reason"] = "fewer valued items than agents"
        sol = initial_solution(program)
        return SolveResult(
            sol, DualPoint(np.zeros(m)), NEG_INF, 0.0, 0.0, [(0, NEG_INF)], True, 0.0, diag
        )

    if cfg.method == "subgradient":
        return _solve_subgradient(program, cfg)
    return _solve_bundle(program, cfg, instance)


def _solve_bundle(program: ProgramSpec, cfg: SolveConfig, instance=None) -> SolveResult:
    n, m, d = program.n, program.m, program.num_vars
    A, b = program.row_matrix, program.row_rhs
    nrows = A.shape[0]
    state = {"u": None, "v": None}

    def phi(v, warm=True):
        C = program.coefficient_matrix(v)
        near = state["v"] is not None and float(np.abs(v - state["v"]).max()) <= 0.25
        if warm and near and state["u"] is not None:
            res = dual_infimum(C, n, u0=state["u"], mus=(1e-3, 1e-5, 1e-7), maxiter=cfg.inner_iters)
        else:
            res = dual_infimum(C, n, maxiter=cfg.inner_iters)
        if not np.isfinite(res.value):
            return res.value, None, res.dual
        u = res.dual.log_y
        ey = np.exp(u)
        s = np.zeros(n)
        for t in program.terms:
            s[t.agent] += t.weight * v[t.var] * ey[t.item]
        g = np.zeros(d)
        for t in program.terms:
            g[t.var] += t.weight * ey[t.item] / s[t.agent]
        state["u"], state["v"] = u, v.copy()
        return res.value, g, res.dual

    v_int = initial_solution(program).values
    cuts: list[tuple[float, np.ndarray, np.ndarray]] = []
    best_v = v_int.copy()
    best_val = NEG_INF
    best_dual = DualPoint(np.zeros(m))
    trace: list[tuple[int, float]] = []

    def add_eval(vv):
        nonlocal best_v, best_val, best_dual
        val, grad, dualpt = phi(vv)
        if np.isfinite(val):
            if val > best_val:
                # improvements are re-verified with a cold solve before acceptance
                state["u"] = None
                state["v"] = None
                val2, grad2, dual2 = phi(vv, warm=False)
                if np.isfinite(val2) and val2 < val:
                    val, grad, dualpt = val2, grad2, dual2
            if val > best_val:
                best_val, best_v, best_dual = val, vv.copy(), dualpt
            if float(np.abs(grad).max()) <= _GRAD_CAP:
                cuts.append((val, grad, vv.copy()))
            else:
                # vertical-tangent boundary point: cut at an interior blend
                for beta in (1e-4, 1e-3, 1e-2, 1e-1):
                    vv2 = (1 - beta) * vv + beta * v_int
                    val2, grad2, dual2 = phi(vv2)
                    if np.isfinite(val2) and float(np.abs(grad2).max()) <= _GRAD_CAP:
                        cuts.append((val2, grad2, vv2.copy()))
                        if val2 > best_val:
                            best_val, best_v, best_dual = val2, vv2.copy(), dual2
                        break
            return val
        anchor = best_v if np.isfinite(best_val) else v_int
        th = 0.5
        for _ in range(6):
            vv2 = anchor + th * (vv - anchor)
            val, grad, dualpt = phi(vv2)
            if np.isfinite(val):
                if val > best_val:
                    best_val, best_v, best_dual = val, vv2.copy(), dualpt
                if float(np.abs(grad).max()) <= _GRAD_CAP:
                    cuts.append((val, grad, vv2.copy()))
                return val
            th *= 0.5
        return NEG_INF

    add_eval(v_int)
    if instance is not None:
        try:
            warm = induced_solution(program, instance, _greedy_owners(program, instance))
            add_eval(warm.values)
        except InputError:
            pass

    def scaled_cut_rows(level=None):
        nc = len(cuts)
        rows = np.zeros((nc, d + 1))
        rr = np.zeros(nc)
        for k, (pk, gk, vk) in enumerate(cuts):
            sc = max(1.0, float(np.abs(gk).max()) / 1e3)
            rows[k, :d] = -gk / sc
            rows[k, d] = 1.0 / sc
            off = pk - float(gk @ vk)
            rr[k] = off / sc if level is None else (off - level) / sc
        return rows, rr

    def lp_bound():
        rows, rr = scaled_cut_rows()
        A_ub = np.zeros((nrows + len(cuts), d + 1))
        b_ub = np.zeros(nrows + len(cuts))
        A_ub[:nrows, :d] = A
        b_ub[:nrows] = b
        A_ub[nrows:] = rows
        b_ub[nrows:] = rr
        c = np.zeros(d + 1)
        c[d] = -1.0
        res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=[(0, 1)] * d + [(None, None)], method="highs")
        return (res.x[:d], float(res.x[d])) if res.success else (None, None)

    def lp_level(level):
        nc = len(cuts)
        rows, rr = scaled_cut_rows(level)
        A2 = np.zeros((nrows + nc + 2 * d, d + 1))
        b2 = np.zeros(nrows + nc + 2 * d)
        A2[:nrows, :d] = A
        b2[:nrows] = b
        A2[nrows : nrows + nc, :d] = rows[:, :d]
        b2[nrows : nrows + nc] = rr
        r0 = nrows + nc
        for i in range(d):
            A2[r0 + 2 * i, i] = 1.0
            A2[r0 + 2 * i, d] = -1.0
            b2[r0 + 2 * i] = best_v[i]
            A2[r0 + 2 * i + 1, i] = -1.0
            A2[r0 + 2 * i + 1, d] = -1.0
            b2[r0 + 2 * i + 1] = -best_v[i]
        c2 = np.zeros(d + 1)
        c2[d] = 1.0
        res = linprog(c2, A_ub=A2, b_ub=b2, bounds=[(0, 1)] * d + [(0, None)], method="highs")
        return res.x[:d] if res.success else None

    upper = np.inf
    recent: list[np.ndarray] = []
    it = 0
    for it in range(1, cfg.outer_iters + 1):
        v_lp, t_lp = lp_bound()
        if v_lp is None:
            # drop the steepest cuts and retry once; then give up on the bound
            cuts.sort(key=lambda c: float(np.abs(c[1]).max()))
            del cuts[max(4, len(cuts) // 2) :]
            v_lp, t_lp = lp_bound()
            if v_lp is None:
                break
        upper = min(upper, t_lp)
        trace.append((it, best_val))
        if upper - best_val <= cfg.tol:
            break
        v_next = lp_level(best_val + 0.5 * (upper - best_val))
        if v_next is None:
            v_next = v_lp
        if recent and min(float(np.abs(v_next - r).max()) for r in recent) <= 1e-9:
            v_next = v_lp
            if min(float(np.abs(v_next - r).max()) for r in recent) <= 1e-9:
                v_next = 0.5 * (v_next + best_v)
        recent.append(v_next.copy())
        del recent[:-4]
        add_eval(v_next)
        trace[-1] = (it, best_val)
        if upper - best_val <= cfg.tol:
            break

    # cold polish so the reported value matches a high-accuracy inner solve
    state["u"] = None
    state["v"] = None
    res = dual_infimum(program.coefficient_matrix(best_v), n, maxiter=cfg.inner_iters)
    if np.isfinite(res.value) and res.value <= best_val:
        best_val = res.value
        best_dual = res.dual
    gap = float(upper - best_val) if np.isfinite(upper) else np.inf
    sol = FractionalSolution(best_v)
    value_log = best_val
    return SolveResult(
        sol,
        best_dual,
        value_log,
        float(np.exp(value_log)) if np.isfinite(value_log) else 0.0,
        float(np.exp(value_log / n)) if np.isfinite(value_log) else 0.0,
        trace,
        gap <= cfg.tol + 1e-9,
        gap,
        {"iterations": it, "cuts": len(cuts)},
    )


def _project_rows(program: ProgramSpec, v: np.ndarray, cycles: int = 80) -> np.ndarray:
    """Cyclic correction against the most violated row, then box clip."""
    A, b = program.row_matrix, program.row_rhs
    v = np.clip(v, 0.0, 1.0)
    if A.shape[0] == 0:
        return v
    for _ in range(cycles):
        slack = A @ v - b
        k = int(np.argmax(slack))
        if slack[k] <= 1e-12:
            return v
        row = A[k]
        v = np.clip(v - row * (slack[k] / float(row @ row)), 0.0, 1.0)
    return scale_into_feasibility(program, v)


def _solve_subgradient(program: ProgramSpec, cfg: SolveConfig) -> SolveResult:
    """Alternating projected supergradient ascent (comparison method).

    Certification is weaker than the bundle method: no upper bound is
    produced, so the result is flagged not-converged unless the final steps
    stop moving.
    """
    n, m = program.n, program.m
    v = initial_solution(program).values
    best_v, best_val = v.copy(), NEG_INF
    best_dual = DualPoint(np.zeros(m))
    trace = []
    last_u = None
    for t in range(1, cfg.outer_iters + 1):
        C = program.coefficient_matrix(v)
        res = dual_infimum(C, n, u0=last_u, mus=(1e-3, 1e-5, 1e-7), maxiter=cfg.inner_iters)
        if np.isfinite(res.value):
            last_u = res.dual.log_y
            if res.value > best_val:
                best_val, best_v, best_dual = res.value, v.copy(), res.dual
            g = primal_supergradient(program, FractionalSolution(v), res.dual)
            gn = float(np.linalg.norm(g))
            step = cfg.primal_steps / np.sqrt(t) / max(gn, 1e-12)
            v = _project_rows(program, v + step * g)
        else:
            v = 0.5 * (v + best_v) if np.isfinite(best_val) else _project_rows(
                program, v + 0.01
            )
        if t % 10 == 0 or t == cfg.outer_iters:
            trace.append((t, best_val))
    sol = FractionalSolution(best_v)
    return SolveResult(
        sol,
        best_dual,
        best_val,
        float(np.exp(best_val)) if np.isfinite(best_val) else 0.0,
        float(np.exp(best_val / n)) if np.isfinite(best_val) else 0.0,
        trace,
        False,
        np.inf,
        {"iterations": cfg.outer_iters},
    )
