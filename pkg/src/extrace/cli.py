"""Command-line entry point.

Exit codes: 0 when every requested check passes, 1 when a check fails or
a trace is undefined (with a machine-readable JSON report on stdout),
2 on malformed input or usage errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys

from . import __version__
from .kappa import (
    GroverParams,
    grover_montecarlo,
    grover_runtime_bound,
    grover_statevector,
)
from .linalg import LinalgError, PartitionedMap, matrix_to_literal
from .lsi import DEFAULT_GRID, FirKernel, dtft, lsi_classify, lsi_ex, response_to_csv
from .qwhile import QWhileError, check, parse_source, semantics
from .trace import (
    KiTraceError,
    SeriesDivergence,
    TraceConfig,
    check_trace_axioms,
    ex,
    ex_kernel_image,
    ex_series,
)

OK, CHECK_FAILED, BAD_INPUT = 0, 1, 2


def _emit(obj) -> None:
    json.dump(obj, sys.stdout, indent=2)
    sys.stdout.write("\n")


def _fail(kind: str, message: str, **extra) -> int:
    _emit({"error": kind, "message": message, **extra})
    return CHECK_FAILED


def _load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise SystemExit(f"cannot read {path}: {e}")


def _cmd_trace(args) -> int:
    obj = _load_json(args.file)
    try:
        pm = PartitionedMap.from_json(obj)
        loop = obj.get("loop", "U")
    except (KeyError, LinalgError) as e:
        raise SystemExit(f"bad trace input: {e}")
    cfg = TraceConfig(series_tol=args.tol, max_terms=args.max_terms)
    route = {"series": ex_series, "ki": ex_kernel_image, "both": ex}[args.method]
    try:
        result = route(pm, loop, cfg)
    except SeriesDivergence as e:
        return _fail("series_divergence", str(e))
    except KiTraceError as e:
        return _fail(
            "not_ki_traceable",
            str(e),
            residual_in=e.residual_in,
            residual_out=e.residual_out,
        )
    except (ArithmeticError, LinalgError) as e:
        return _fail("trace_failed", str(e))
    _emit(
        {
            "value": matrix_to_literal(result.value),
            "method": result.method,
            "terms_used": result.terms_used,
            "residual": result.residual,
            "converged": result.converged,
        }
    )
    return OK if result.converged else CHECK_FAILED


def _cmd_axioms(args) -> int:
    cfg = TraceConfig(compare_tol=args.tol)
    report = check_trace_axioms(args.seed, args.cases, cfg)
    _emit({"passed": report.passed, "checks": report.to_json()})
    return OK if report.passed else CHECK_FAILED


def _cmd_lsi(args) -> int:
    kernel = FirKernel.from_json(_load_json(args.file))
    response = dtft(kernel, args.grid)
    if args.loop:
        try:
            response = lsi_ex(response, args.loop)
        except (ArithmeticError, LinalgError) as e:
            return _fail("loop_trace_failed", str(e))
    if args.out:
        response_to_csv(response, args.out)
    _emit(
        {
            "in_ports": list(response.in_ports),
            "out_ports": list(response.out_ports),
            "grid_size": response.grid_size,
            "classification": lsi_classify(response),
        }
    )
    return OK


def _cmd_qwhile(args) -> int:
    try:
        with open(args.file) as fh:
            text = fh.read()
    except OSError as e:
        raise SystemExit(f"cannot read {args.file}: {e}")
    try:
        source = parse_source(text, allow_contraction=args.allow_contraction)
    except QWhileError as e:
        raise SystemExit(f"{args.file}: {e}")
    report = check(source.program)
    if not report.ok:
        return _fail("ill_formed", "program failed static checks", details=report.errors)
    if args.action == "check":
        _emit({"well_formed": True, "in_ports": source.program.in_count,
               "out_ports": source.program.out_count})
        return OK
    try:
        response = semantics(source.program, args.grid)
    except QWhileError as e:
        return _fail("evaluation_failed", str(e))
    if args.out:
        response_to_csv(response, args.out)
    _emit(
        {
            "in_ports": list(response.in_ports),
            "out_ports": list(response.out_ports),
            "grid_size": response.grid_size,
            "classification": lsi_classify(response),
        }
    )
    return OK


def _cmd_grover(args) -> int:
    try:
        params = GroverParams(args.B, args.kappa, args.seed, args.max_iter)
    except LinalgError as e:
        raise SystemExit(str(e))
    if args.mode == "statevector":
        run = grover_statevector(params)
        if args.out:
            with open(args.out, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["iteration", "angle"])
                for i, a in enumerate(run.angles, start=1):
                    writer.writerow([i, format(a, ".17g")])
        _emit(
            {
                "mode": "statevector",
                "halted_at": run.halted_at,
                "iterations": len(run.angles),
                "final_angle": run.angles[-1] if run.angles else None,
            }
        )
        return OK
    trials, summary = grover_montecarlo(params, args.trials)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["trial", "iterations", "censored", "angle_at_halt"])
            for t in trials:
                writer.writerow(
                    [
                        t.trial_index,
                        t.iterations_to_success,
                        int(t.censored),
                        format(t.angle_at_halt, ".17g"),
                    ]
                )
    _emit(summary.to_json())
    return OK


def _cmd_bound(args) -> int:
    kappa = args.kappa if args.kappa is not None else args.B ** -0.5
    alpha = math.asin(args.B ** -0.5)
    epsilon = args.epsilon if args.epsilon is not None else math.sin(3.0 * alpha)
    try:
        t_c = grover_runtime_bound(args.B, kappa, args.c)
    except LinalgError as e:
        raise SystemExit(str(e))
    _emit({"B": args.B, "kappa": kappa, "epsilon": epsilon, "c": args.c, "T": t_c})
    return OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="extrace")
    parser.add_argument(
        "--version",
        action="version",
        version=(
            f"extrace {__version__} "
            f"(grid={DEFAULT_GRID}, series_tol={TraceConfig().series_tol:g}, "
            f"ki_residual_tol={TraceConfig().ki_residual_tol:g})"
        ),
    )
    parser.add_argument(
        "--threads",
        type=int,
        default=0,
        help="cap worker parallelism (0 = library default)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("trace", help="trace a partitioned map over its loop block")
    p.add_argument("file")
    p.add_argument("--method", choices=["series", "ki", "both"], default="both")
    p.add_argument("--tol", type=float, default=TraceConfig().series_tol)
    p.add_argument("--max-terms", type=int, default=TraceConfig().max_terms)
    p.set_defaults(func=_cmd_trace)

    p = sub.add_parser("axioms", help="run the randomized trace-axiom suite")
    p.add_argument("--cases", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=TraceConfig().compare_tol)
    p.set_defaults(func=_cmd_axioms)

    p = sub.add_parser("lsi", help="frequency response of an FIR kernel")
    p.add_argument("file")
    p.add_argument("--grid", type=int, default=DEFAULT_GRID)
    p.add_argument("--loop", type=int, default=0, help="trace this many trailing ports")
    p.add_argument("--out", help="write the response as CSV")
    p.set_defaults(func=_cmd_lsi)

    p = sub.add_parser("qwhile", help="check or run a qWhile source file")
    p.add_argument("action", choices=["run", "check"])
    p.add_argument("file")
    p.add_argument("--grid", type=int, default=DEFAULT_GRID)
    p.add_argument("--out", help="write the response as CSV")
    p.add_argument("--allow-contraction", action="store_true")
    p.set_defaults(func=_cmd_qwhile)

    p = sub.add_parser("grover", help="simulate the weakly-measured search loop")
    p.add_argument("--B", type=int, required=True)
    p.add_argument("--kappa", type=float, default=None)
    p.add_argument("--trials", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iter", type=int, default=None)
    p.add_argument("--mode", choices=["recurrence", "statevector"], default="recurrence")
    p.add_argument("--out", help="write per-trial results as CSV")
    p.set_defaults(func=_cmd_grover)

    p = sub.add_parser("bound", help="print the halting-time bound T_c")
    p.add_argument("--B", type=int, required=True)
    p.add_argument("--kappa", type=float, default=None)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--c", type=int, default=1)
    p.set_defaults(func=_cmd_bound)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SystemExit as e:
        if isinstance(e.code, str):
            print(f"error: {e.code}", file=sys.stderr)
            return BAD_INPUT
        raise
    except LinalgError as e:
        print(f"error: {e}", file=sys.stderr)
        return BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())
