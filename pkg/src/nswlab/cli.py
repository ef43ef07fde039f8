"""Command-line surface: seeded, reproducible experiments with CSV artifacts.

Exit code 0 iff every requested check passes or is vacuous.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .analysis import count_constrained_mappings, gurvits_check
from .contention import SCHEMES, CrsSpec, auto_scheme, check_monotone, estimate_marginal
from .errors import InputError
from .instances import FAMILIES, generate, parse_instance, serialize_instance
from .mc import thread_count
from .pipeline import run_pipeline
from .relaxation import build_program
from .saddle import SolveConfig, solve
from .instances import _matroid_from_obj  # shared matroid JSON form


def _load_instance(path: str):
    return parse_instance(Path(path).read_text())


def _write(path: str | None, text: str):
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _write_csv(path: str | None, rows, header=None):
    if path:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            if header:
                w.writerow(header)
            w.writerows(rows)
    else:
        w = csv.writer(sys.stdout)
        if header:
            w.writerow(header)
        w.writerows(rows)


def _cmd_gen(args) -> int:
    params = json.loads(args.params) if args.params else {}
    inst = generate(args.family, args.n, args.m, args.seed, params)
    _write(args.out, serialize_instance(inst))
    return 0


def _cmd_solve(args) -> int:
    inst = _load_instance(args.instance)
    program = build_program(inst)
    result = solve(program, SolveConfig(tol=args.tol, seed=args.seed), instance=inst)
    doc = {
        "program_kind": program.kind,
        "values": result.solution.values.tolist(),
        "dual_log_y": result.dual.log_y.tolist(),
        "value_log": result.value_log,
        "value_product": result.value_product,
        "value_nsw": result.value_nsw,
        "converged": result.converged,
        "gap": result.gap,
        "diagnostics": {k: str(v) for k, v in result.diagnostics.items()},
    }
    _write(args.out, json.dumps(doc, indent=2, sort_keys=True) + "\n")
    trace_path = f"{args.out}.trace.csv" if args.out else None
    _write_csv(trace_path, result.trace, header=("iteration", "value_log"))
    return 0


def _cmd_round(args) -> int:
    from .analysis import estimate_from_samples
    from .mc import sample_products
    from .relaxation import FractionalSolution

    inst = _load_instance(args.instance)
    program = build_program(inst)
    if args.solution:
        doc = json.loads(Path(args.solution).read_text())
        values = np.asarray(doc["values"], dtype=float)
    else:
        values = solve(program, SolveConfig(tol=args.tol, seed=args.seed), instance=inst).solution.values
    rng = np.random.default_rng(args.seed)
    if args.procedure in (0, 1, 2):
        x = program.x_matrix(values)
        products = sample_products(inst, args.procedure, args.samples, rng, x=x, threads=thread_count())
    else:
        products = sample_products(inst, args.procedure, args.samples, rng, z=values, threads=thread_count())
    est = estimate_from_samples(products)
    rows = [(t, float(p)) for t, p in enumerate(products)]
    rows.append(("mean", est.mean))
    rows.append(("stderr", est.stderr))
    _write_csv(args.out, rows, header=("sample", "product"))
    print(
        f"procedure {args.procedure}: mean={est.mean:.6g} stderr={est.stderr:.3g} "
        f"ci=[{est.ci_lower:.6g}, {est.ci_upper:.6g}]",
        file=sys.stderr,
    )
    return 0


def _cmd_pipeline(args) -> int:
    inst = _load_instance(args.instance)
    report = run_pipeline(inst, samples=args.samples, seed=args.seed, tol=args.tol, threads=thread_count())
    text = "\n".join(report.lines()) + "\n"
    sys.stdout.write(text)
    if args.out:
        _write_csv(args.out, report.csv_rows(), header=("key", "value"))
    return 0 if report.all_ok else 1


def _cmd_verify(args) -> int:
    return _cmd_pipeline(args)


def _cmd_crs_check(args) -> int:
    obj = json.loads(Path(args.matroid).read_text() if Path(args.matroid).exists() else args.matroid)
    matroid = _matroid_from_obj(obj, "/matroid")
    x = np.asarray([float(t) for t in args.marginals.split(",")])
    scheme = args.scheme if args.scheme != "auto" else auto_scheme(matroid)
    crs = CrsSpec(matroid, x, args.b, scheme)
    rng = np.random.default_rng(args.seed)
    bound = (1 - np.exp(-args.b)) / args.b
    rows = []
    ok = True
    for j in range(matroid.ground_size):
        if x[j] <= 0:
            continue
        est = estimate_marginal(crs, j, args.samples, rng)
        passed = est.mean + 3 * est.stderr >= bound
        exact = scheme in ("rank1_exact", "partition_exact", "uniform_quota")
        if exact and est.mean + 3 * est.stderr < bound:
            ok = False
        rows.append((j, est.mean, est.stderr, bound, "pass" if passed else "below"))
    mono = check_monotone(crs, rng=rng)
    rows.append(("monotone", mono["monotone"], mono["pairs_checked"], len(mono["violations"]), "exact" if mono["exact"] else "sampled"))
    if not mono["monotone"]:
        ok = False
    _write_csv(args.out, rows, header=("element", "marginal", "stderr", "bound", "status"))
    return 0 if ok else 1


def _cmd_gurvits(args) -> int:
    rng = np.random.default_rng(args.seed)
    rows = []
    ok = True
    for t in range(args.trials):
        n = int(rng.integers(1, args.n + 1))
        m = int(rng.integers(n, args.m + 1))
        M = rng.random((n, m)) * rng.uniform(0.2, 3.0)
        if rng.random() < 0.25:
            M[rng.random((n, m)) < 0.3] = 0.0
        rep = gurvits_check(M)
        ok = ok and rep["holds"]
        rows.append((t, n, m, rep["coeff_sum"], rep["inf_value"], rep["bound"], rep["holds"]))
    _write_csv(args.out, rows, header=("trial", "n", "m", "coeff_sum", "inf_value", "bound", "holds"))
    return 0 if ok else 1


def _cmd_count_mappings(args) -> int:
    doc = json.loads(Path(args.spec).read_text() if Path(args.spec).exists() else args.spec)
    W = np.asarray(doc["weights"], dtype=float)
    blocks = [list(map(int, b)) for b in doc["blocks"]]
    choices = doc.get("choices")
    total = count_constrained_mappings(W, blocks, choices)
    _write(args.out, f"{total!r}\n")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="nswlab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, instance=True):
        if instance:
            p.add_argument("--instance", required=True)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--samples", type=int, default=100_000)
        p.add_argument("--tol", type=float, default=1e-4)
        p.add_argument("--out", default=None)

    p = sub.add_parser("gen", help="generate a seeded random instance")
    p.add_argument("--family", choices=FAMILIES, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--params", default=None, help="JSON dict of family parameters")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("solve", help="solve the relaxation")
    common(p)
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("round", help="sample a rounding procedure, emit per-sample CSV")
    common(p)
    p.add_argument("--solution", default=None, help="solution JSON from `solve`")
    p.add_argument("--procedure", type=int, choices=(0, 1, 2, 3, 4), required=True)
    p.set_defaults(func=_cmd_round)

    p = sub.add_parser("verify", help="solve, round, and check every applicable bound")
    common(p)
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("pipeline", help="alias of verify with the full report")
    common(p)
    p.set_defaults(func=_cmd_pipeline)

    p = sub.add_parser("crs-check", help="marginal/monotonicity report for one scheme")
    p.add_argument("--matroid", required=True, help="matroid JSON (inline or file)")
    p.add_argument("--marginals", required=True, help="comma-separated marginal vector")
    p.add_argument("--b", type=float, default=1.0)
    p.add_argument("--scheme", choices=SCHEMES + ("auto",), default="auto")
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_crs_check)

    p = sub.add_parser("gurvits-check", help="random-matrix check of the coefficient bound")
    p.add_argument("--n", type=int, default=4)
    p.add_argument("--m", type=int, default=8)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_gurvits)

    p = sub.add_parser("count-mappings", help="brute-force constrained mapping count")
    p.add_argument("--spec", required=True, help="JSON with weights, blocks, optional choices")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_count_mappings)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
