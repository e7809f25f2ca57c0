"""Command line front end.

Exit codes: 0 success, 1 bad usage, 2 solver did not converge, 3 file error,
4 problem validation error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from ..model import ValidationError, validate
from ..timesplit import OuterConfig
from .fileio import FileFormatError, load_problem, write_problem, write_solution
from .generator import SIZE_PRESETS, GeneratorSpec, generate
from .report import emit_report
from .runner import SOLVERS, feasibility, make_row, run_bench_row, run_solver

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NOT_CONVERGED = 2
EXIT_IO = 3
EXIT_INVALID = 4

log = logging.getLogger("ftoc_admm")


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors, which is reserved for non-convergence
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _solver_flags(ap: argparse.ArgumentParser, rho_default: float | None):
    ap.add_argument("--solver", choices=SOLVERS, default="hier")
    ap.add_argument("--rho", type=float, default=rho_default,
                    help="penalty parameter (bench default: the preset value of each size)")
    ap.add_argument("--inner-rho", type=float, default=None, help="separate penalty for the inner solver")
    ap.add_argument("--tol-pri", type=float, default=1e-4)
    ap.add_argument("--tol-dual", type=float, default=1e-3)
    ap.add_argument("--tol-mode", choices=("direct", "absrel"), default="direct")
    ap.add_argument("--eps-abs", type=float, default=1e-4)
    ap.add_argument("--eps-rel", type=float, default=1e-3)
    ap.add_argument("--max-iter", type=int, default=5000, help="outer iteration limit")
    ap.add_argument("--inner-max-iter", type=int, default=10_000)
    ap.add_argument("--threads", type=int, default=1, help="worker processes for the stage solves")
    ap.add_argument("--warm-start", choices=("on", "off"), default="on")
    ap.add_argument("--format", choices=("table", "csv"), default="table")


def _config(args, rho: float) -> OuterConfig:
    cfg = OuterConfig(rho=rho, eps_pri=args.tol_pri, eps_dual=args.tol_dual, tol_mode=args.tol_mode,
                      eps_abs=args.eps_abs, eps_rel=args.eps_rel, max_iterations=args.max_iter,
                      workers=args.threads, warm_start=args.warm_start == "on")
    inner = cfg.inner_config.replace(max_iterations=args.inner_max_iter)
    if args.inner_rho is not None:
        inner = inner.replace(rho=args.inner_rho)
    return cfg.replace(inner=inner)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="ftoc-admm", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a random benchmark problem")
    g.add_argument("--size", choices=sorted(SIZE_PRESETS), help="preset shape (overridden by --n/--m/--N)")
    g.add_argument("--n", type=int)
    g.add_argument("--m", type=int)
    g.add_argument("--N", type=int)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--dx", type=float)
    g.add_argument("--u-max", type=float)
    g.add_argument("--disturbance", type=float, default=5.0)
    g.add_argument("--spectral-radius", type=float, default=0.95)
    g.add_argument("--constraint-scale", type=float, default=0.5)
    g.add_argument("--out", required=True, type=Path)

    s = sub.add_parser("solve", help="solve a problem file")
    s.add_argument("problem", type=Path)
    _solver_flags(s, rho_default=1.0)
    s.add_argument("--out", type=Path, help="solution file (sol-v1)")

    b = sub.add_parser("bench", help="solve generated instances and print a report")
    b.add_argument("--sizes", default="small", help="comma-separated preset sizes")
    b.add_argument("--n", type=int)
    b.add_argument("--m", type=int)
    b.add_argument("--N", type=int)
    b.add_argument("--seed", type=int, default=0, help="first seed")
    b.add_argument("--seeds", type=int, default=1, help="number of consecutive seeds")
    b.add_argument("--oracle", action="store_true", help="report the gap to the enumeration oracle when small enough")
    _solver_flags(b, rho_default=None)
    b.add_argument("--out", type=Path, help="write the report here instead of stdout")
    return ap


def _shape(args, base=None) -> tuple[int, int, int]:
    dims = dict(base or {})
    for k in ("n", "m", "N"):
        if getattr(args, k) is not None:
            dims[k] = getattr(args, k)
    missing = [k for k in ("n", "m", "N") if k not in dims]
    if missing:
        raise SystemExit(f"missing problem dimensions: {', '.join(missing)}")
    return dims["n"], dims["m"], dims["N"]


def _cmd_generate(args) -> int:
    n, m, N = _shape(args, SIZE_PRESETS.get(args.size))
    spec = GeneratorSpec(n=n, m=m, N=N, seed=args.seed, dx=args.dx, u_max=args.u_max,
                         disturbance=args.disturbance, spectral_radius=args.spectral_radius,
                         constraint_scale=args.constraint_scale)
    write_problem(generate(spec), args.out)
    return EXIT_OK


def _cmd_solve(args) -> int:
    p = validate(load_problem(args.problem))
    cfg = _config(args, args.rho)
    out = run_solver(p, args.solver, cfg)
    elapsed = 1e3 * out.solve_time
    parallel = args.solver == "hier" and cfg.workers > 1
    row = make_row(p, cfg, out, label=args.problem.stem, seed=int(p.meta.get("generator", {}).get("seed", -1)),
                   threads=cfg.workers, serial_ms=None if parallel else elapsed,
                   parallel_ms=elapsed if parallel else None)
    if args.out is not None:
        feas = feasibility(p, out)
        write_solution(args.out, solver=args.solver, status=out.status, objective=out.objective,
                       states=out.states, inputs=out.inputs, outer_iterations=out.outer_iterations,
                       inner_iterations=out.inner_iterations,
                       max_dynamics_violation=max(feas.dynamics_violation, feas.initial_violation),
                       max_inequality_violation=feas.inequality_violation)
    sys.stdout.write(emit_report([row], args.format))
    return EXIT_OK if out.converged else EXIT_NOT_CONVERGED


def _cmd_bench(args) -> int:
    if args.n is not None or args.m is not None or args.N is not None:
        sizes = [("custom", dict(zip(("n", "m", "N"), _shape(args))))]
    else:
        sizes = []
        for name in args.sizes.split(","):
            if name not in SIZE_PRESETS:
                raise SystemExit(f"unknown size {name!r}; choose from {sorted(SIZE_PRESETS)}")
            sizes.append((name, SIZE_PRESETS[name]))
    rows = []
    ok = True
    for label, dims in sizes:
        rho = args.rho if args.rho is not None else dims.get("rho", 1.0)
        cfg = _config(args, rho).replace(workers=1)
        for seed in range(args.seed, args.seed + args.seeds):
            p = generate(GeneratorSpec(n=dims["n"], m=dims["m"], N=dims["N"], seed=seed))
            row, out = run_bench_row(p, cfg, label=label, seed=seed, threads=args.threads,
                                     solver=args.solver, with_oracle=args.oracle)
            rows.append(row)
            ok &= out.converged
            log.info("%s seed %d: %s after %s outer iterations", label, seed, row.status, row.outer_iterations)
    text = emit_report(rows, args.format)
    if args.out is not None:
        args.out.write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK if ok else EXIT_NOT_CONVERGED


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    handler = {"generate": _cmd_generate, "solve": _cmd_solve, "bench": _cmd_bench}[args.command]
    try:
        return handler(args)
    except ValidationError as exc:
        print(f"invalid problem: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (OSError, FileFormatError) as exc:
        print(f"file error: {exc}", file=sys.stderr)
        return EXIT_IO
    except SystemExit as exc:
        if isinstance(exc.code, str):
            print(exc.code, file=sys.stderr)
            return EXIT_USAGE
        raise


if __name__ == "__main__":
    sys.exit(main())
