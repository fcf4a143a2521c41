"""Command-line entry point ``pschro``.

Exit status: 0 when every executed check passed, 1 when a check failed,
2 for usage or configuration errors, 3 when all checks passed but a
warning was raised (for example ``mu`` below the threshold ``mu0``).
"""

from __future__ import annotations

import argparse
import os
import sys
import time

THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    default = argparse.SUPPRESS if suppress else None
    g = parser.add_argument_group("global options")
    g.add_argument("--config", metavar="PATH", default=default, help="TOML run configuration")
    g.add_argument("--out", metavar="DIR", default=default, help="output directory (default: out)")
    g.add_argument("--seed", type=int, metavar="N", default=default, help="64-bit seed for random test instances")
    g.add_argument("--threads", type=int, metavar="N", default=default,
                   help="BLAS threads and parallel sweep workers")
    g.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS if suppress else False,
                   help="print nothing on success")


def _physics_flags(parser: argparse.ArgumentParser) -> None:
    g = parser.add_argument_group("model")
    g.add_argument("--potential", metavar="V1,V2,...", help="one period of the potential")
    g.add_argument("--mu", type=float, help="potential strength")
    g.add_argument("--mus", metavar="MU1,MU2,...", help="couplings for a sweep")
    g.add_argument("--rho0", type=float, help="contour radius, > 1")
    g.add_argument("--nodes", type=int, help="quadrature nodes M")
    g.add_argument("--sites", help="half-width N of the real-space lattice, or 'auto'")
    g.add_argument("--t-max", dest="t_max", type=float, help="final time")
    g.add_argument("--t-samples", dest="t_samples", type=int, help="number of times on the grid")
    g.add_argument("--d-max", dest="d_max", type=int, help="largest block offset")
    g.add_argument("--eps", type=float, help="light-cone threshold")
    g.add_argument("--no-direct", dest="direct", action="store_const", const=False,
                   help="skip direct-evolution velocity measurements")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pschro",
        description="Light cones and asymptotic velocities of periodic discrete Schrödinger operators.")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    helps = {
        "constants": "print the closed-form constants and thresholds",
        "bands": "band functions and their derivatives on the quasimomentum grid",
        "kernel": "block kernels K(t, d) by Floquet quadrature",
        "evolve": "real-space evolution of the state localized at site 0",
        "lightcone": "threshold front and decay rate of the block kernels",
        "vasy": "asymptotic velocity: band formula, bounds and direct evolution",
        "sweep": "velocities over a range of couplings with fitted exponents",
        "verify": "run the formula-versus-oracle verification suites",
        "pipeline": "constants, bands, kernel, light cone, velocities and sweep in one run",
    }
    for name, text in helps.items():
        sp = sub.add_parser(name, help=text, description=text)
        _global_flags(sp, suppress=True)
        _physics_flags(sp)
        if name == "verify":
            sp.add_argument("--p", type=int, help="restrict determinant checks to one size and emit its matching table")
            sp.add_argument("--trials", type=int, default=1000, help="random instances per size")
            sp.add_argument("--perturb-formula", dest="perturb", type=float, nargs="?", const=1e-6,
                            default=0.0, help=argparse.SUPPRESS)
        if name in {"bands", "lightcone", "sweep", "pipeline"}:
            sp.add_argument("--no-figures", dest="figures", action="store_false", help="skip PNG rendering")
    return parser


def _overrides(args) -> dict:
    keys = ("potential", "mu", "mus", "rho0", "nodes", "sites", "t_max", "t_samples", "d_max", "eps",
            "direct", "seed", "threads")
    over = {k: getattr(args, k, None) for k in keys}
    if args.out is not None:
        over["out"] = args.out
    return over


def _print_report(rep, out_dir, quiet: bool) -> None:
    if quiet:
        return
    from .output import to_jsonable

    print(f"== {rep.command} ==")
    print(f"output: {out_dir}")
    for key, value in sorted(rep.results.items()):
        if isinstance(value, (dict, list)):
            continue
        print(f"{key} = {to_jsonable(value)}")
    if isinstance(rep.results.get("constants"), dict):
        for key, value in rep.results["constants"].items():
            print(f"{key} = {value}")
    for c in rep.checks:
        tol = c["tolerance"]
        tol = f" {c['relation']} {tol:.6g}" if isinstance(tol, (int, float)) else ""
        val = c["value"]
        val = f"{val:.6g}" if isinstance(val, float) else val
        shown = "" if val is None else f"  [{val}{tol}]"
        print(f"{'PASS' if c['passed'] else 'FAIL'}  {c['name']}{shown}")
    for w in rep.warnings:
        print(f"WARNING  {w}")
    for f in rep.failures:
        print(f"FAILED  {f}")
    print(f"== {'passed' if rep.passed else 'FAILED'} ==")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads:
        for var in THREAD_VARS:
            os.environ[var] = str(args.threads)

    # heavy imports only after the thread count is fixed
    from pathlib import Path

    from .commands import EXIT_USAGE, COMMANDS
    from .config import load_config
    from .errors import ConfigError, PeriodicSchrodingerError
    from .output import write_json

    try:
        cfg = load_config(args.config, overrides=_overrides(args))
    except ConfigError as exc:
        print(f"pschro: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    out_dir = Path(cfg.out) / args.command
    out_dir.mkdir(parents=True, exist_ok=True)
    kw = {}
    if args.command == "verify":
        kw = {"p": args.p, "trials": args.trials, "perturb": args.perturb}
    elif args.command in {"bands", "lightcone", "sweep", "pipeline"}:
        kw = {"figures": args.figures}
    t0 = time.perf_counter()
    try:
        rep = COMMANDS[args.command](cfg, out_dir, **kw)
    except ConfigError as exc:
        print(f"pschro: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PeriodicSchrodingerError as exc:
        print(f"pschro: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    rep.timings["total"] = time.perf_counter() - t0
    write_json(out_dir / "report.json", rep.as_dict())
    # wall-clock times live apart from the report so reruns stay byte-identical
    write_json(out_dir / "timings.json", {k: round(v, 4) for k, v in rep.timings.items()})
    _print_report(rep, out_dir, args.quiet)
    if rep.exit_code == 3 and not args.quiet:
        print("exit status 3: checks passed with warnings", file=sys.stderr)
    return rep.exit_code


if __name__ == "__main__":
    sys.exit(main())
