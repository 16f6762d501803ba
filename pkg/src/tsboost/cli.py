"""Command-line front end: ``tsboost solve | gen | bench``.

Exit codes: 0 success, 1 error, 2 failed verification, 64 usage error.
"""
from __future__ import annotations

import argparse
import csv
import io
import sys
import time
from pathlib import Path

import numpy as np

from .boosting import PRIMAL_DUAL, binary_search_solve, full_solve
from .errors import TransshipmentError
from .exact import exact_preconditioner, exact_transshipment
from .formats import (
    fmt,
    format_coordinates,
    format_instance,
    format_solution,
    parse_instance,
    read_optional_coordinates,
)
from .generators import KINDS, generate
from .graph import TransshipmentInstance
from .preconditioners import grid_preconditioner, tree_preconditioner

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_VERIFY = 2
EXIT_USAGE = 64

PRECONDITIONERS = ("exact", "tree", "grid")
BENCH_HEADER = [
    "instance", "n", "m", "epsilon", "preconditioner", "alpha", "opt_cost", "primal_cost",
    "dual_value", "ratio", "preconditioner_calls", "guesses", "seconds", "error",
]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_handle(kind: str, instance: TransshipmentInstance, coords=None, seed: int = 0):
    graph = instance.graph
    if kind == "exact":
        return exact_preconditioner(graph)
    if kind == "tree":
        return tree_preconditioner(graph)
    if kind == "grid":
        if coords is None:
            raise TransshipmentError("the grid preconditioner needs vertex coordinates (--coords)")
        return grid_preconditioner(graph, coords, seed=seed)
    raise UsageError(f"unknown preconditioner {kind!r}")


def run_solver(instance, handle, epsilon: float, mode: str, residual_C: float):
    """``dual``: residual reduction plus MST repair; ``pd``: bisection with primal-dual certificates."""
    if mode == "pd":
        if handle.dual_only:
            raise TransshipmentError(f"preconditioner {handle.name!r} is dual-only; use --mode dual")
        return binary_search_solve(instance, handle, epsilon, PRIMAL_DUAL)
    return full_solve(instance, handle, epsilon, C=residual_C)


def approximation_bound(epsilon: float, mode: str) -> float:
    return 1.0 + (epsilon if mode == "pd" else 2.0 * epsilon)


def _write(text: str, path) -> None:
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def cmd_solve(args) -> int:
    instance = parse_instance(args.instance)
    coords = read_optional_coordinates(args.instance, args.coords) if args.preconditioner == "grid" else None
    handle = build_handle(args.preconditioner, instance, coords, args.seed)
    report = run_solver(instance, handle, args.epsilon, args.mode, args.residual_C)
    _write(format_solution(instance.graph, report.flow, report.potentials, instance.demand), args.output)
    if not args.verify:
        return EXIT_OK
    opt = exact_transshipment(instance).opt_cost
    ratio = report.primal_cost / opt if opt > 0 else (1.0 if report.primal_cost == 0 else np.inf)
    msg = sys.stderr if args.output in (None, "-") else sys.stdout
    print(f"opt {fmt(opt)} ratio {fmt(ratio)}", file=msg)
    if ratio > approximation_bound(args.epsilon, args.mode) * (1 + 1e-9):
        print(f"verification failed: ratio {fmt(ratio)} above {fmt(approximation_bound(args.epsilon, args.mode))}",
              file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


def cmd_gen(args) -> int:
    gen = generate(args.nodes, args.edges, args.seed, args.kind)
    comments = [f"kind {args.kind} seed {args.seed}"]
    _write(format_instance(gen.instance, comments), args.output)
    if gen.coordinates is not None:
        coords_out = args.coords_output
        if coords_out is None:
            if args.output in (None, "-"):
                raise UsageError("geometric instances written to stdout need --coords-output")
            coords_out = str(args.output) + ".coords"
        Path(coords_out).write_text(format_coordinates(gen.coordinates))
    return EXIT_OK


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None


def _name_list(text: str) -> list[str]:
    names = [x.strip() for x in text.split(",") if x.strip()]
    bad = [x for x in names if x not in PRECONDITIONERS]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown preconditioner(s): {', '.join(bad)}")
    return names


def bench_rows(directory, epsilons, kinds, mode="dual", seed=0, residual_C=2.0, timing=False):
    """One record per (instance file, epsilon, preconditioner), sorted for a stable output."""
    files = sorted(p for p in Path(directory).iterdir() if p.is_file() and not p.name.endswith(".coords"))
    rows = []
    for path in files:
        try:
            instance = parse_instance(path)
            opt = exact_transshipment(instance).opt_cost
        except (TransshipmentError, OSError, ValueError) as exc:
            for eps in epsilons:
                for kind in kinds:
                    rows.append([path.stem, "", "", fmt(eps), kind] + [""] * 8 + [type(exc).__name__])
            continue
        for eps in epsilons:
            for kind in kinds:
                row = [path.stem, str(instance.n), str(instance.m), fmt(eps), kind]
                try:
                    coords = read_optional_coordinates(path) if kind == "grid" else None
                    handle = build_handle(kind, instance, coords, seed)
                    start = time.perf_counter()
                    report = run_solver(instance, handle, eps, mode, residual_C)
                    elapsed = time.perf_counter() - start
                    ratio = report.primal_cost / opt if opt > 0 else 1.0
                    row += [fmt(handle.alpha), fmt(opt), fmt(report.primal_cost), fmt(report.dual_value),
                            fmt(ratio), str(report.preconditioner_calls), str(len(report.guesses_tried)),
                            ("%.3f" % elapsed) if timing else "", ""]
                except (TransshipmentError, OSError, ValueError) as exc:
                    row += [""] * 8 + [type(exc).__name__]
                rows.append(row)
    rows.sort(key=lambda r: (r[0], float(r[3]), r[4]))
    return rows


def cmd_bench(args) -> int:
    if not Path(args.dir).is_dir():
        raise TransshipmentError(f"not a directory: {args.dir}")
    rows = bench_rows(args.dir, args.epsilons, args.preconditioners, args.mode, args.seed,
                      args.residual_C, args.timing)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(BENCH_HEADER)
    writer.writerows(rows)
    sys.stdout.write(buf.getvalue())
    if rows and all(r[-1] for r in rows):
        return EXIT_ERROR
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tsboost", description="Boosted (1+eps)-approximate transshipment.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="solve one instance file")
    p.add_argument("--instance", required=True)
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--preconditioner", choices=PRECONDITIONERS, default="tree")
    p.add_argument("--mode", choices=("pd", "dual"), default="dual",
                   help="pd: primal-dual bisection; dual: residual reduction and MST repair")
    p.add_argument("--residual-C", dest="residual_C", type=float, default=2.0)
    p.add_argument("--seed", type=int, default=0, help="seed for the grid approximator")
    p.add_argument("--coords", default=None, help="coordinate sidecar (default: <instance>.coords)")
    p.add_argument("--output", default=None, help="solution file (default: stdout)")
    p.add_argument("--verify", action="store_true", help="compare against the exact solver")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("gen", help="generate a random instance")
    p.add_argument("--nodes", type=int, required=True)
    p.add_argument("--edges", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--kind", choices=KINDS, default="random")
    p.add_argument("--output", default=None, help="instance file (default: stdout)")
    p.add_argument("--coords-output", dest="coords_output", default=None)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("bench", help="solve every instance in a directory and print CSV")
    p.add_argument("--dir", required=True)
    p.add_argument("--epsilons", type=_float_list, default=[0.5, 0.1])
    p.add_argument("--preconditioners", type=_name_list, default=["exact", "tree"])
    p.add_argument("--mode", choices=("pd", "dual"), default="dual")
    p.add_argument("--residual-C", dest="residual_C", type=float, default=2.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--timing", action="store_true", help="fill the seconds column (breaks byte-identical output)")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (TransshipmentError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
